"""Trajectory-level rewards, group-relative advantages and focal weighting.

All functions are pure. Rewards are binary: every rollout earns either
``r_correct`` or ``r_wrong``.
"""

from dataclasses import dataclass

import numpy as np

from rlvr_dynamics.errors import DomainError, InvalidRewardError


@dataclass(frozen=True)
class RewardConfig:
    r_correct: float = 1.0
    r_wrong: float = 0.0
    adv_epsilon: float = 1e-6

    def __post_init__(self):
        if not self.r_correct > self.r_wrong:
            raise DomainError(f"r_correct ({self.r_correct}) must exceed r_wrong ({self.r_wrong})")
        if not self.adv_epsilon >= 0:
            raise DomainError(f"adv_epsilon must be >= 0, got {self.adv_epsilon}")

    @property
    def spread(self):
        return self.r_correct - self.r_wrong


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")


class RolloutGroup:
    """Rewards of the N rollouts sampled for one prompt."""

    __slots__ = ("rewards",)

    def __init__(self, rewards):
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.ndim != 1 or rewards.size < 1:
            raise DomainError("a rollout group needs at least one reward")
        rewards.setflags(write=False)
        self.rewards = rewards

    @classmethod
    def from_correct(cls, correct, cfg):
        correct = np.asarray(correct, dtype=bool)
        return cls(np.where(correct, cfg.r_correct, cfg.r_wrong))

    def __len__(self):
        return self.rewards.size

    def __repr__(self):
        return f"RolloutGroup({self.rewards.tolist()})"

    def correct_mask(self, cfg):
        """Boolean mask of correct rollouts; raises on foreign rewards."""
        is_c = self.rewards == cfg.r_correct
        is_w = self.rewards == cfg.r_wrong
        if not np.all(is_c | is_w):
            bad = self.rewards[~(is_c | is_w)]
            raise InvalidRewardError(
                f"rewards {bad.tolist()} not in {{{cfg.r_correct}, {cfg.r_wrong}}}"
            )
        return is_c

    def num_correct(self, cfg):
        return int(self.correct_mask(cfg).sum())


@dataclass(frozen=True)
class TokenRatioPoint:
    """One token's importance ratio and its rollout advantage.

    ``eps_low``/``eps_high`` are the clip bounds; the CISPO weight reuses them
    as its IS bounds.
    """

    ratio: float
    advantage: float
    eps_low: float = 0.2
    eps_high: float = 0.2

    def __post_init__(self):
        if not self.ratio > 0:
            raise DomainError(f"ratio must be > 0, got {self.ratio}")
        if not 0 <= self.eps_low <= 1:
            raise DomainError(f"eps_low must lie in [0, 1], got {self.eps_low}")
        if not self.eps_high >= 0:
            raise DomainError(f"eps_high must be >= 0, got {self.eps_high}")


def empirical_success_rate(group, cfg):
    """Fraction of correct rollouts, X/N."""
    return group.num_correct(cfg) / len(group)


def grpo_advantages(group, cfg):
    """(R_i - mean) / (std + eps) with the population std.

    Homogeneous groups return exact zeros without touching the divisor.
    """
    group.correct_mask(cfg)
    r = group.rewards
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + cfg.adv_epsilon)


def focal_weight(group, cfg, focal):
    """(1 - X/N) ** gamma, with 0 ** 0 taken as 1."""
    if focal.gamma == 0:
        group.correct_mask(cfg)
        return 1.0
    return float((1.0 - empirical_success_rate(group, cfg)) ** focal.gamma)


def focal_advantages(group, cfg, focal):
    return focal_weight(group, cfg, focal) * grpo_advantages(group, cfg)


def advantage_magnitude_curve(mu_grid, gamma, cfg=None, finite_eps=False):
    """Focal-scaled |advantage| of correct and incorrect rollouts versus mu.

    With ``finite_eps=False`` (default) the closed forms sqrt((1-mu)/mu) and
    sqrt(mu/(1-mu)) are used; with ``finite_eps=True`` the divisor includes
    ``cfg.adv_epsilon`` and the reward spread of ``cfg``.
    """
    mu = np.asarray(mu_grid, dtype=np.float64)
    if np.any((mu <= 0) | (mu >= 1)):
        raise DomainError("success probabilities must lie strictly inside (0, 1)")
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    g = (1.0 - mu) ** gamma
    if finite_eps:
        cfg = cfg or RewardConfig()
        sigma = cfg.spread * np.sqrt(mu * (1.0 - mu))
        mag_c = cfg.spread * (1.0 - mu) / (sigma + cfg.adv_epsilon)
        mag_w = cfg.spread * mu / (sigma + cfg.adv_epsilon)
    else:
        mag_c = np.sqrt((1.0 - mu) / mu)
        mag_w = np.sqrt(mu / (1.0 - mu))
    return g * mag_c, g * mag_w


def clip_surrogate_term(p):
    """min(r*A, clip(r, 1 - eps_low, 1 + eps_high) * A)."""
    clipped = min(max(p.ratio, 1.0 - p.eps_low), 1.0 + p.eps_high)
    return min(p.ratio * p.advantage, clipped * p.advantage)


def cispo_clipped_weight(p):
    """Clipped importance weight, clip(r, 1 - eps_low, 1 + eps_high).

    The weight enters the objective under stop-gradient, so it is a plain
    multiplier of the token's advantage term and carries no derivative.
    """
    return min(max(p.ratio, 1.0 - p.eps_low), 1.0 + p.eps_high)
