"""Dark-resonance lineshapes of a Lambda system in a thin vapour cell.

Units: Gamma = k = 1 throughout (rates and detunings in Gamma, velocities
in Gamma/k, lengths as kL).
"""

from .bloch import (IllConditionedWarning, Liouvillian, PhysicalParams, DerivedParams,
                    build_liouvillian, derived_params, evolve, initial_state,
                    path_integrated_coherence, slow_eigenvalues, steady_state)
from .lineshape import (LineshapeFeatures, NonUnimodalWarning, PowerLawFit, ScanResult,
                        UnderResolvedError, derivative, extract_features, fit_power_law,
                        saturation_scale, scan)
from .signal import (QuadratureConfig, QuadratureError, VelocityDistribution,
                     absorbed_intensity, background_signal, dark_resonance_signal,
                     partial_velocity_signal, velocity_contributions,
                     velocity_selection_profile)
from .spectrum import Spectrum, delta_grid
from .validation import OracleConfig, invariance_harness, ode_oracle

__version__ = "0.1.0"
