"""Secure dual-function radar-communication precoding.

Designers: :func:`solve_sdr` (globally optimal, tight relaxation),
:func:`solve_zf` (zero-forcing, cheaper) and :func:`solve_robust`
(bounded CSI errors and uncertain target directions).
"""

from .conic import ConicProblem, ConicSolution, SolverSettings, Status
from .errors import (ChannelGenerationError, ConfigError, ContractError, DegenerateRho, DfrcError,
                     InfeasibleDesign, NotPsd, ReconstructionError, SolverError, SweepError)
from .evaluation import (MetricsReport, ScenarioTemplate, SweepResult, SweepSpec, beampattern_mse,
                         empirical_validate, evaluate, eve_sinr, run_sweep, secrecy_rate, sum_rate,
                         user_sinr)
from .radar import (BeampatternSpec, beampattern, beampattern_grid, cross_correlation, radar_loss,
                    radar_only_design)
from .robust import AngularUncertaintySet, CsiUncertainty, angular_uncertainty_sets, build_p4, solve_robust
from .scenario import (PrecoderPair, Scenario, SystemConfig, Target, TransmitFrame, generate_channel,
                       steering_vector, synthesize_frame)
from .sdr import DesignResult, SecurityThresholds, build_p2, factorize_radar_cov, reconstruct_rank1, solve_sdr
from .zf import build_p3, solve_zf

__version__ = "0.1.0"
