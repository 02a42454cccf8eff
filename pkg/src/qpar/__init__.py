"""Loss-rate optimization of leaky resonators on a staggered Maxwell grid."""

from .medium import (Boundary, Direction, FeasibleFamily, Grid, InfeasibleError, MaterialScene,
                     admissible_direction, apply_direction, bang_bang_round, symmetry_project,
                     uniform_scene, validate_scene)
from .maxwell import (DiscreteOperator, Field, InvalidSceneError, LayeredProfile1D,
                      adjoint_state, assemble, dispersion_1d)
from .eigensolve import (ComplexFrequency, EigenPair, EigenSolveError, NotFirstOrderOptimal,
                         SearchWindow, Simplicity, find_eigs, fix_phase, roots_1d,
                         simplicity_check, track)
from .sensitivity import SensitivityDensity, density, fd_validate, first_order_shift
from .pareto import (AtStationaryPoint, NotAchievable, NotAchievableError, OptimizeSettings,
                     ParetoPoint, StepPlan, apply_step, optimize, plan_step, sweep_frontier)
from .elverify import ELReport, SwitchingField, el_report, el_residual, structure_metrics, switching
from .perturb2 import AnalyticProbe, EtaPair, eta_coefficients, sector_coverage, zero_track

__version__ = "0.1.0"
