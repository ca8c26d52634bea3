"""Closed-form sampling probabilities, pass@k and the paired subsampling test."""

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from rlvr_dynamics.errors import DomainError, NumericalConsistencyError

# negative round-off below this is clamped to 0; anything larger is an error
_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class PromptStats:
    mu_pos: float
    tau: float
    group_size: int

    def __post_init__(self):
        if not 0 <= self.tau <= self.mu_pos <= 1:
            raise DomainError(
                f"need 0 <= tau <= mu_pos <= 1, got tau={self.tau}, mu_pos={self.mu_pos}"
            )
        if int(self.group_size) != self.group_size or self.group_size < 1:
            raise DomainError(f"group_size must be a positive integer, got {self.group_size}")

    @property
    def rho(self):
        return self.tau / self.mu_pos if self.mu_pos > 0 else 0.0


def _pow(base, n):
    """base ** n for base in [0, 1] via exp(n * log(base)); vectorised over n."""
    n = np.asarray(n, dtype=np.float64)
    if base <= 0.0:
        return np.zeros_like(n)
    return np.exp(n * math.log(base))


def _pow1m(x, n):
    """(1 - x) ** n via exp(n * log1p(-x)); accurate for small x."""
    n = np.asarray(n, dtype=np.float64)
    if x >= 1.0:
        return np.zeros_like(n)
    return np.exp(n * math.log1p(-x))


def _clamp_unit(value):
    value = np.asarray(value, dtype=np.float64)
    if np.any(value < -_CLAMP_TOL):
        raise NumericalConsistencyError(f"probability evaluated to {value.min():.3e} < 0")
    return np.clip(value, 0.0, 1.0)


def _scalar_or_array(value, like):
    return float(value) if np.ndim(like) == 0 else value


def activity_probability(stats):
    """Pr(0 < X < N) = 1 - mu^N - (1 - mu)^N."""
    n = stats.group_size
    return float(activity_curve(stats.mu_pos, n))


def tail_miss_curve(mu_pos, tau, n):
    """Tail-miss probability for an array of group sizes ``n``."""
    PromptStats(mu_pos, tau, 1)
    n = np.asarray(n)
    # near 1 the base mu - tau is better carried as 1 - ((1 - mu) + tau)
    common = _pow1m((1.0 - mu_pos) + tau, n) if mu_pos >= 0.5 else _pow(mu_pos - tau, n)
    value = _pow1m(tau, n) - common - _pow1m(mu_pos, n)
    if tau == mu_pos:
        # the first and last powers are the same number; cancel exactly
        value = np.zeros_like(np.asarray(n, dtype=np.float64))
    # a single rollout can never be active
    value = np.where(n <= 1, 0.0, value)
    return _scalar_or_array(_clamp_unit(value), n)


def activity_curve(mu_pos, n):
    n = np.asarray(n)
    value = 1.0 - (_pow1m(1.0 - mu_pos, n) if mu_pos >= 0.5 else _pow(mu_pos, n)) - _pow1m(mu_pos, n)
    value = np.where(n <= 1, 0.0, value)
    return _scalar_or_array(_clamp_unit(value), n)


def tail_miss_probability(stats):
    """Probability that a group is active yet draws nothing from the rare region.

    (1 - tau)^N - (mu - tau)^N - (1 - mu)^N, each power in log space.
    """
    return float(tail_miss_curve(stats.mu_pos, stats.tau, stats.group_size))


def tail_miss_peak(mu_pos, tau, n_max, probes=64):
    """Integer group size in [1, n_max] maximising the tail-miss probability.

    Coarse pass over ``probes`` log-spaced sizes, then an exhaustive scan of
    every integer between the neighbours of the best probe. Ties go to the
    smaller N.
    """
    if int(n_max) != n_max or n_max < 1:
        raise DomainError(f"n_max must be a positive integer, got {n_max}")
    if not 0 < tau < mu_pos < 1:
        raise DomainError(f"need 0 < tau < mu_pos < 1, got tau={tau}, mu_pos={mu_pos}")
    n_max = int(n_max)
    grid = np.unique(np.rint(np.logspace(0.0, math.log10(n_max), probes)).astype(np.int64))
    grid = grid[(grid >= 1) & (grid <= n_max)]
    values = tail_miss_curve(mu_pos, tau, grid)
    best = int(np.argmax(values))
    lo = int(grid[max(best - 1, 0)])
    hi = int(grid[min(best + 1, grid.size - 1)])
    ns = np.arange(lo, hi + 1, dtype=np.int64)
    vals = tail_miss_curve(mu_pos, tau, ns)
    j = int(np.argmax(vals))
    return int(ns[j]), float(vals[j])


@dataclass(frozen=True)
class ConditionalDist:
    """Restricted distribution q over one reward class, plus the class mass.

    ``probs`` sum to 1; the unconditional masses are ``probs * total_mass``.
    """

    probs: np.ndarray
    total_mass: float
    labels: tuple = ()

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("support must be a non-empty vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise DomainError("conditional probabilities must be >= 0 and sum to 1")
        if not 0 <= self.total_mass <= 1:
            raise DomainError(f"total_mass must be a probability, got {self.total_mass}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_masses(cls, masses, labels=()):
        """Build from unconditional masses pi(o) over the class."""
        if isinstance(masses, dict):
            labels = tuple(masses)
            masses = list(masses.values())
        masses = np.asarray(masses, dtype=np.float64)
        total = float(masses.sum())
        if total <= 0:
            raise DomainError("class mass must be positive")
        return cls(masses / total, total, tuple(labels))

    @property
    def masses(self):
        return self.probs * self.total_mass


def expected_sampled_mass_given_k(dist, k):
    """E[distinct sampled mass | k draws] = sum_o pi(o) (1 - (1 - q(o))^k)."""
    if int(k) != k or k < 0:
        raise DomainError(f"k must be a non-negative integer, got {k}")
    if k == 0:
        return 0.0
    q = dist.probs
    full = q >= 1.0
    miss = np.exp(k * np.log1p(-np.where(full, 0.0, q)))
    miss[full] = 0.0
    return float(np.dot(dist.masses, 1.0 - miss))


def expected_baseline_given_k(pos, neg, k, n, cfg):
    """E[S_R | X = k] = R_c E[P_pos | X=k] + R_w E[P_neg | X=k]; negatives use N - k draws."""
    if int(n) != n or n < 1:
        raise DomainError(f"N must be a positive integer, got {n}")
    if int(k) != k or not 0 <= k <= n:
        raise DomainError(f"k must lie in [0, N], got k={k}, N={n}")
    e_pos = expected_sampled_mass_given_k(pos, k)
    e_neg = expected_sampled_mass_given_k(neg, n - k)
    return cfg.r_correct * e_pos + cfg.r_wrong * e_neg


class CorrectnessMatrix:
    """Per-problem correctness of n generations (rows = problems)."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        entries = np.asarray(entries)
        if entries.ndim == 1:
            entries = entries[None, :]
        if entries.ndim != 2 or entries.shape[1] < 1 or entries.shape[0] < 1:
            raise DomainError("correctness matrix must be 2-D with n >= 1 columns")
        if entries.dtype != bool:
            if not np.all((entries == 0) | (entries == 1)):
                raise DomainError("correctness entries must be 0/1")
            entries = entries.astype(bool)
        entries.setflags(write=False)
        self.entries = entries

    @classmethod
    def from_csv(cls, path):
        """Read one row per problem of 0/1 cells; a non-numeric first row is skipped as a header."""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.reader(fh)):
                cells = [c.strip() for c in row if c.strip() != ""]
                if not cells:
                    continue
                try:
                    values = [int(c) for c in cells]
                except ValueError:
                    if i == 0:
                        continue
                    raise DomainError(f"{path}: non-integer cell in row {i + 1}") from None
                rows.append(values)
        if not rows:
            raise DomainError(f"{path}: no data rows")
        if len({len(r) for r in rows}) != 1:
            raise DomainError(f"{path}: rows have different lengths")
        return cls(np.array(rows))

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n(self):
        return self.entries.shape[1]

    def correct_counts(self):
        return self.entries.sum(axis=1)


def pass_at_k_exact(n, c, k):
    """1 - C(n-c, k) / C(n, k) as an exact Fraction."""
    if not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"need 0 <= c <= n and 1 <= k <= n, got n={n}, c={c}, k={k}")
    total = math.comb(n, k)
    # math.comb returns 0 when k > n - c, i.e. every k-subset has a correct sample
    return 1 - Fraction(math.comb(n - c, k), total)


def pass_at_k_single(n, c, k):
    """Correctly rounded float of the unbiased single-problem estimator."""
    return float(pass_at_k_exact(n, c, k))


def pass_at_k(matrix, k):
    """Unbiased pass@k averaged over problems.

    Integer binomials (no factorials) keep the ratio exact; the float is the
    correctly rounded mean.
    """
    n = matrix.n
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    if k > n:
        raise DomainError(f"k={k} exceeds the n={n} generations per problem")
    counts = matrix.correct_counts()
    cache = {}
    total = Fraction(0)
    for c in counts.tolist():
        if c not in cache:
            cache[c] = pass_at_k_exact(n, c, k)
        total += cache[c]
    return float(total / len(counts))


@dataclass(frozen=True)
class SubsampleTestResult:
    mean_diff: float
    p_value: float
    significant: bool
    ci_low: float
    ci_high: float
    iterations: int


def paired_subsample_test(a, b, m, k, iterations=50_000, alpha=0.05, seed=0, paired=True):
    """Paired m-out-of-n subsampling test for the pass@k difference (b - a).

    Each iteration draws m of the n generations per problem without
    replacement and recomputes pass@k for both models. With ``paired=True``
    both models see the same column indices. Only counts matter, so the
    draw is a multivariate hypergeometric over the four (a, b) outcome
    cells; each problem has its own stream keyed by (seed, problem), which
    keeps results independent of any chunking.

    The two-sided p-value is 2 * min(F(0), 1 - F(0)) over the empirical
    difference distribution, counting exact zeros as half below.
    """
    if a.shape != b.shape:
        raise DomainError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    n = a.n
    if int(m) != m or not 1 <= m <= n:
        raise DomainError(f"m must lie in [1, n={n}], got {m}")
    if int(k) != k or not 1 <= k <= m:
        raise DomainError(f"k must lie in [1, m={m}], got {k}")
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    table = np.array([pass_at_k_single(m, c, k) for c in range(m + 1)])
    ea, eb = a.entries, b.entries
    n_problems = ea.shape[0]
    sum_a = np.zeros(iterations)
    sum_b = np.zeros(iterations)
    root = np.random.SeedSequence(seed)
    for prob_idx in range(n_problems):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(root.entropy, spawn_key=(prob_idx,)))
        )
        ra, rb = ea[prob_idx], eb[prob_idx]
        if paired:
            cells = np.array(
                [np.sum(ra & rb), np.sum(ra & ~rb), np.sum(~ra & rb), np.sum(~ra & ~rb)],
                dtype=np.int64,
            )
            draw = _mv_hypergeometric(rng, cells, m, iterations)
            ca = draw[:, 0] + draw[:, 1]
            cb = draw[:, 0] + draw[:, 2]
        else:
            ca = _hypergeometric(rng, int(ra.sum()), n, m, iterations)
            cb = _hypergeometric(rng, int(rb.sum()), n, m, iterations)
        sum_a += table[ca]
        sum_b += table[cb]

    diffs = sum_b / n_problems - sum_a / n_problems
    below = np.count_nonzero(diffs < 0) + 0.5 * np.count_nonzero(diffs == 0)
    f0 = below / iterations
    p_value = min(1.0, 2.0 * min(f0, 1.0 - f0))
    lo, hi = np.quantile(diffs, [alpha / 2, 1 - alpha / 2])
    return SubsampleTestResult(
        mean_diff=float(diffs.mean()),
        p_value=float(p_value),
        significant=bool(p_value < alpha),
        ci_low=float(lo),
        ci_high=float(hi),
        iterations=int(iterations),
    )


def _mv_hypergeometric(rng, cells, m, size):
    nonzero = cells > 0
    out = np.zeros((size, cells.size), dtype=np.int64)
    if nonzero.sum() == 1:
        out[:, np.flatnonzero(nonzero)[0]] = m
        return out
    out[:, nonzero] = rng.multivariate_hypergeometric(cells[nonzero], m, size=size)
    return out


def _hypergeometric(rng, good, n, m, size):
    if good == 0:
        return np.zeros(size, dtype=np.int64)
    if good == n:
        return np.full(size, m, dtype=np.int64)
    return rng.hypergeometric(good, n - good, m, size=size)
