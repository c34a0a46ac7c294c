"""Command-line entry point: ``thincell {spectrum,scan,velocity-select,reproduce,validate}``.

Exit codes: 0 ok, 2 configuration error, 3 numerical non-convergence,
4 a reproduction or validation check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import reproduce
from .config import MANIFEST_NAME, ConfigError, RunConfig, RunManifest, _json_default
from .lineshape import (AXES, NonUnimodalWarning, UnderResolvedError, derivative,
                        extract_features, fit_power_law, saturation_scale, scan)
from .reproduce import NumericalFailure
from .signal import QuadratureError, dark_resonance_signal

log = logging.getLogger("thincell")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_CHECK = 0, 2, 3, 4


def _cell(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns, rows, comments=()):
    """Header row, data rows, then ``#`` lines with comments and the manifest name.

    Trailing comments keep the header on the first line for readers such as
    ``numpy.genfromtxt(names=True)``.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(f"# manifest={MANIFEST_NAME}\n")
    return path


def write_json(path, data):
    path = Path(path)
    payload = {"manifest": MANIFEST_NAME} | data
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_values(text):
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    if not vals:
        raise ConfigError("--values is empty")
    return vals


def cmd_spectrum(cfg: RunConfig, args, manifest: RunManifest):
    p = cfg.physical()
    grid = cfg.grid(p)
    spec = dark_resonance_signal(p, cfg.dist(), cfg.quadrature(), grid, workers=cfg.workers,
                                 check_convergence=cfg.check_convergence,
                                 tol=cfg.convergence_tol)
    deriv = derivative(spec)
    feats = extract_features(deriv)
    path = write_csv(Path(cfg.out) / "spectrum.csv", reproduce.SPECTRUM_COLUMNS,
                     reproduce._spectrum_rows(spec, deriv))
    manifest.outputs[path.name] = _sha256(path)
    manifest.convergence[path.name] = spec.meta.get("convergence", "not checked")
    manifest.extra["features"] = {k: getattr(feats, k) for k in
                                  ("width_pp", "amp_pp", "delta_max", "delta_min")}
    manifest.extra["background"] = spec.meta["background"]
    return EXIT_OK


def cmd_scan(cfg: RunConfig, args, manifest: RunManifest):
    axis = args.axis or cfg.scan_axis
    if axis not in AXES:
        raise ConfigError(f"unknown axis {axis!r}; choose from {sorted(AXES)}")
    values = _parse_values(args.values) or list(cfg.scan_values)
    if not values:
        raise ConfigError("scan needs values (--values or scan_values)")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ConfigError("scan values must be sorted")
    res = scan(cfg.physical(), axis, values, dist=cfg.dist(), q=cfg.quadrature(),
               grid_kw=cfg.grid_kw(), workers=cfg.workers)
    rows = []
    for v, f, err in zip(res.values, res.features, res.errors):
        if f is None:
            rows.append([v, np.nan, np.nan, np.nan, err])
        else:
            rows.append([v, f.width_pp_over_gp, f.width_pp, f.amp_pp, "ok"])
    comments, fits = [], {}
    ok = np.isfinite(res.widths)
    if np.count_nonzero(ok) >= 4:
        for feature in ("width_pp", "amp_pp"):
            try:
                fit = fit_power_law(res.values, res.feature_array(feature), cfg.fit_range())
            except ValueError as exc:
                comments.append(f"fit {feature}: not fitted ({exc})")
                continue
            fits[feature] = fit
            comments.append(f"fit {feature}: exponent={fit.exponent!r} "
                            f"prefactor={fit.prefactor!r} residual={fit.residual!r} "
                            f"range={fit.fit_range[0]!r}..{fit.fit_range[1]!r} "
                            f"points={fit.npoints}")
    path = write_csv(Path(cfg.out) / "scan.csv",
                     [axis, "width_pp_over_gp", "width_pp", "amp_pp", "status"], rows, comments)
    manifest.outputs[path.name] = _sha256(path)
    manifest.extra.update(axis=axis, values=list(map(float, values)),
                          fits={k: vars(f) for k, f in fits.items()})
    if any(res.errors):
        log.error("%d scan point(s) failed", sum(e is not None for e in res.errors))
        return EXIT_NUMERICS
    return EXIT_OK


def cmd_velocity_select(cfg: RunConfig, args, manifest: RunManifest):
    cutoffs = _parse_values(args.values) or list(cfg.cutoffs) or list(reproduce.FIG8_CUTOFFS)
    if any(c <= 0 for c in cutoffs) or any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ConfigError("cutoffs must be positive and strictly increasing")
    p = cfg.physical()
    direct, deriv = reproduce.saturation_curves(p, cutoffs, cfg.dist(), cfg.grid(p),
                                                cfg.quadrature())
    path = write_csv(Path(cfg.out) / "velocity_select.csv",
                     ["cutoff", "direct_fraction", "derivative_fraction"],
                     np.column_stack([cutoffs, direct, deriv]))
    manifest.outputs[path.name] = _sha256(path)
    manifest.extra["saturation_90"] = {
        "direct": saturation_scale(cutoffs, direct, 0.9),
        "derivative": saturation_scale(cutoffs, deriv, 0.9),
    }
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig, args, manifest: RunManifest):
    fig = args.figure
    if fig not in reproduce.FIGURES:
        raise ConfigError(f"unknown figure {fig!r}; choose from {sorted(reproduce.FIGURES)}")
    result = reproduce.FIGURES[fig](workers=cfg.workers)
    out = Path(cfg.out)
    for name, table in result.tables.items():
        path = write_csv(out / f"{name}.csv", table.columns, table.rows)
        manifest.outputs[path.name] = _sha256(path)
    report = {
        "figure": fig,
        "passed": result.passed,
        "checks": [vars(c) for c in result.checks],
        "params": result.params,
    }
    path = write_json(out / f"{fig}_report.json", report)
    manifest.outputs[path.name] = _sha256(path)
    if not args.no_plot:
        from .figures import render

        png = render(result, out / f"{fig}.png", note=f"manifest={MANIFEST_NAME}")
        manifest.outputs[png.name] = "figure"
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {fig}: {c.name} = {c.value} (want {c.expected})")
    manifest.extra["passed"] = result.passed
    return EXIT_OK if result.passed else EXIT_CHECK


def cmd_validate(cfg: RunConfig, args, manifest: RunManifest):
    from .validation import run_validation

    report = run_validation(draws=args.draws, seed=cfg.seed,
                            brute_force=not args.skip_brute_force)
    path = write_json(Path(cfg.out) / "validate.json", report)
    manifest.outputs[path.name] = _sha256(path)
    for name, item in report["checks"].items():
        print(f"{'PASS' if item['passed'] else 'FAIL'}  {name}: {item['value']:.3e} "
              f"(limit {item['limit']:.1e})")
    manifest.extra["passed"] = report["passed"]
    return EXIT_OK if report["passed"] else EXIT_CHECK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "scan": cmd_scan,
    "velocity-select": cmd_velocity_select,
    "reproduce": cmd_reproduce,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thincell",
                                     description="Dark-resonance spectra in thin vapour cells.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--workers", type=int, help="worker processes; results do not depend on it")
        return sp

    common(sub.add_parser("spectrum", help="one dark-resonance spectrum and its derivative"))
    sp = common(sub.add_parser("scan", help="width and amplitude along a parameter axis"))
    sp.add_argument("--axis", help=f"one of {', '.join(AXES)}")
    sp.add_argument("--values", help="comma-separated axis values (sorted)")
    sp = common(sub.add_parser("velocity-select", help="partial-velocity saturation curves"))
    sp.add_argument("--values", help="comma-separated velocity cutoffs in Gamma/k")
    sp = common(sub.add_parser("reproduce", help="bundled figure reproduction with checks"))
    sp.add_argument("figure", help=f"one of {', '.join(reproduce.FIGURES)}")
    sp.add_argument("--no-plot", action="store_true", help="skip the PNG rendering")
    sp = common(sub.add_parser("validate", help="oracle cross-checks at reduced scale"))
    sp.add_argument("--draws", type=int, default=200, help="random propagator draws")
    sp.add_argument("--skip-brute-force", action="store_true")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = RunManifest.start(args.command, cfg, argv=list(argv if argv is not None
                                                             else sys.argv[1:]))
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonUnimodalWarning)
            code = COMMANDS[args.command](cfg, args, manifest)
    except (QuadratureError, UnderResolvedError, np.linalg.LinAlgError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICS
        manifest.extra["error"] = str(exc)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest.wall_clock = time.perf_counter() - t0
    manifest.extra["exit_code"] = code
    manifest.write(cfg.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
