"""Differentially private mechanisms on [0, 1] as channels, their expected
loss, refinement between them, and the experiments tying the Geometric and
truncated Laplace mechanisms together."""
from . import errors
from .experiments import (ExperimentConfig, discrete_optimality_trial, main_theorem_demo,
                          run_convergence, sample_dp_channel)
from .loss import (LossFunction, builtin_bayes_risk, builtin_len, builtin_len2,
                   expected_loss_continuous, expected_loss_discrete, expected_loss_restricted,
                   expected_loss_via_hyper, table_loss, uncertainty)
from .mechanisms import (TruncatedLaplace, geometric_channel, t_pixelated_laplace, truncated_laplace,
                         verify_dp)
from .pixelate import (PiecewisePrior, nstep_channel, nstep_loss, pixelate_prior,
                       restrict_continuous_mechanism)
from .prob import Channel, DiscreteDist, Hyper, Joint, hyper_of, max_divergence, push_joint
from .refine import (find_postprocessor, gap_bound, hull_refinement_check, kantorovich_hyper,
                     refinement_chain_check)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "Channel",
    "DiscreteDist",
    "ExperimentConfig",
    "Hyper",
    "Joint",
    "LossFunction",
    "PiecewisePrior",
    "TruncatedLaplace",
    "builtin_bayes_risk",
    "builtin_len",
    "builtin_len2",
    "discrete_optimality_trial",
    "expected_loss_continuous",
    "expected_loss_discrete",
    "expected_loss_restricted",
    "expected_loss_via_hyper",
    "find_postprocessor",
    "gap_bound",
    "geometric_channel",
    "hull_refinement_check",
    "hyper_of",
    "kantorovich_hyper",
    "main_theorem_demo",
    "max_divergence",
    "nstep_channel",
    "nstep_loss",
    "pixelate_prior",
    "push_joint",
    "refinement_chain_check",
    "restrict_continuous_mechanism",
    "run_convergence",
    "sample_dp_channel",
    "t_pixelated_laplace",
    "table_loss",
    "truncated_laplace",
    "uncertainty",
    "verify_dp",
]
