"""Sampling dynamics of group-relative RLVR in closed form and in simulation."""

from rlvr_dynamics.core import (
    FocalConfig,
    RewardConfig,
    RolloutGroup,
    TokenRatioPoint,
    advantage_magnitude_curve,
    cispo_clipped_weight,
    clip_surrogate_term,
    empirical_success_rate,
    focal_advantages,
    focal_weight,
    grpo_advantages,
)
from rlvr_dynamics.errors import DomainError, InvalidRewardError, NumericalConsistencyError
from rlvr_dynamics.kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DomainError",
    "FocalConfig",
    "InvalidRewardError",
    "NumericalConsistencyError",
    "RewardConfig",
    "RolloutGroup",
    "TokenRatioPoint",
    "advantage_magnitude_curve",
    "cispo_clipped_weight",
    "clip_surrogate_term",
    "empirical_success_rate",
    "focal_advantages",
    "focal_weight",
    "grpo_advantages",
]
