"""moistflow: pseudo-spectral simulator for compressible moist-air channel
flow with warm-rain microphysics, Robin-wall homogenization, and a
contraction-mapping (Picard) time stepper."""

from .fields import (Grid, PhysConstants, ScalarField, State, VectorField,
                     integrate, load_field, load_state, make_grid,
                     negative_part, positive_part, rho_d, save_field,
                     save_state)
from .thermo import (QFactors, latent_heat, mixed_gas_constant,
                     mixed_heat_capacity, moist_density, potential_temperature,
                     pressure, q_factors)
from .microphysics import (SaturationClosure, SourceBundle, saturation_q_vs,
                           sources, water_exchange_residual)
from .boundary import (BoundarySpec, BoundaryExtension, HomogenizationFactors,
                       VariableBoundary, build_extension, build_factors,
                       cutoff_chi0, dehomogenize, extend, homogenize,
                       robin_profile, trace_norm_check)
from .spectral_ops import (Basis, BasisPair, advect, div, dz, grad,
                           helmholtz_solve, laplacian, make_bases,
                           vector_helmholtz_solve)
from .solver import (PicardReport, Simulation, SolverConfig, StepRejected,
                     Trajectory)
from .diagnostics import (DiagnosticsRow, DiagnosticsWriter, negativity_monitor,
                          sobolev_norm, stability_probe)
from .presets import perturb_state, preset_initial
from .cli import ConfigError, RunConfig, main, parse_config

__version__ = "0.1.0"
