"""Differentially private Riemannian optimization on the sphere and the SPD manifold."""

from .accounting import (
    MomentEntry,
    MomentsLedger,
    NoiseCalibration,
    PrivacyBudget,
    audit,
    calibrate_iterative,
    calibrate_mechanism,
    moment_full,
    moment_subsampled,
    rdp_to_dp,
)
from .manifolds import *  # noqa: F401,F403
from .experiments import ExperimentConfig, plot_runs, run_experiment, write_results
from .optimizer import (
    OptimizerConfig,
    Schedule,
    Trajectory,
    baseline_dp_frechet_output,
    baseline_dp_pgd_sphere,
    frechet_mean,
    run,
    schedule_stepsize,
    schedule_T,
)
from .sampling import (
    MhParams,
    RngStream,
    make_streams,
    sample_tangent_gaussian,
    tangent_gaussian_coords,
    tangent_gaussian_mh_chain,
)

__version__ = "0.1.0"
