"""Softmax policy over a finite action space with a designated correct subset.

Two update rules live here and are kept apart on purpose:

* ``theoretical_update`` applies the one-step logit change derived from the
  linear surrogate over *distinct* sampled actions (each sampled action has
  one reward, unsampled actions reward 0). The mass-transfer predictions
  ``predicted_delta_qpos`` / ``predicted_delta_qupos`` are its first-order
  consequences.
* ``simulation_step`` is the training step of the categorical simulation:
  group-relative advantages over the sampled *multiset*, gradient of a
  surrogate objective w.r.t. the logits, optionally scaled by the focal
  weight, applied by plain gradient ascent or Adam.
"""

from dataclasses import dataclass

import numpy as np

from rlvr_dynamics import kernels
from rlvr_dynamics.core import FocalConfig, RewardConfig
from rlvr_dynamics.errors import DomainError

OBJECTIVES = ("prob", "logprob")
OPTIMIZERS = ("sgd", "adam")


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


class CategoricalPolicy:
    """Logits ``z`` (float64) and the boolean mask of correct actions."""

    __slots__ = ("logits", "correct_mask", "_probs")

    def __init__(self, logits, correct_mask):
        logits = np.array(logits, dtype=np.float64)
        mask = np.array(correct_mask, dtype=bool)
        if logits.ndim != 1 or mask.shape != logits.shape:
            raise DomainError("logits and correct_mask must be 1-D of equal length")
        if not mask.any() or mask.all():
            raise DomainError("policy needs at least one correct and one incorrect action")
        if not np.all(np.isfinite(logits)):
            raise DomainError("logits must be finite")
        logits.setflags(write=False)
        mask.setflags(write=False)
        self.logits = logits
        self.correct_mask = mask
        self._probs = None

    @property
    def n_actions(self):
        return self.logits.size

    @property
    def probs(self):
        if self._probs is None:
            p = softmax(self.logits)
            p.setflags(write=False)
            self._probs = p
        return self._probs

    @property
    def q_pos(self):
        return float(self.probs[self.correct_mask].sum())

    @property
    def q_neg(self):
        return 1.0 - self.q_pos

    def with_logits(self, logits):
        return CategoricalPolicy(logits, self.correct_mask)

    def rewards(self, cfg):
        """Reward each action would earn if sampled."""
        return np.where(self.correct_mask, cfg.r_correct, cfg.r_wrong)

    def __repr__(self):
        return f"CategoricalPolicy(n_actions={self.n_actions}, q_pos={self.q_pos:.6g})"


def init_anchor_policy(n_actions, n_correct, z_anchor=5.0, z_correct=3.0, z_incorrect=0.0):
    """Action 0 is the anchor; actions 1..n_correct-1 are the other correct ones."""
    if int(n_actions) != n_actions or int(n_correct) != n_correct:
        raise DomainError("action counts must be integers")
    if not 1 <= n_correct < n_actions:
        raise DomainError(f"need 1 <= n_correct < n_actions, got {n_correct}, {n_actions}")
    z = np.full(int(n_actions), float(z_incorrect))
    z[:n_correct] = z_correct
    z[0] = z_anchor
    mask = np.zeros(int(n_actions), dtype=bool)
    mask[:n_correct] = True
    return CategoricalPolicy(z, mask)


class SampleBatch:
    """A multiset of sampled action indices."""

    __slots__ = ("indices", "n_actions", "_counts")

    def __init__(self, indices, n_actions):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 1 or indices.size < 1:
            raise DomainError("a batch needs at least one index")
        if indices.min() < 0 or indices.max() >= n_actions:
            raise DomainError("sampled index out of range")
        indices.setflags(write=False)
        self.indices = indices
        self.n_actions = int(n_actions)
        self._counts = None

    def __len__(self):
        return self.indices.size

    @property
    def counts(self):
        if self._counts is None:
            self._counts = np.bincount(self.indices, minlength=self.n_actions)
        return self._counts

    @property
    def sampled_mask(self):
        return self.counts > 0

    def partition(self, correct_mask):
        """Masks of the distinct sampled-correct (A), sampled-incorrect (B) and unsampled (U) sets."""
        s = self.sampled_mask
        return s & correct_mask, s & ~correct_mask, ~s


def step_rng(seed, step):
    """Counter-based generator keyed by (seed, step); replayable mid-run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(step,))))


def sample_batch(policy, n, rng):
    """``n`` i.i.d. draws through an alias table built from ``policy.probs``."""
    if int(n) != n or n < 1:
        raise DomainError(f"batch size must be a positive integer, got {n}")
    prob, alias = kernels.build_alias_table(policy.probs)
    idx = kernels.alias_draw(prob, alias, rng.random(int(n)))
    return SampleBatch(idx, policy.n_actions)


@dataclass(frozen=True)
class BatchDecomposition:
    p_pos: float
    p_neg: float
    a2: float
    b2: float
    u2: float
    u_pos2: float
    u_neg2: float
    s_r: float
    q_pos: float
    q_neg: float
    q_upos: float


def decompose_batch(policy, batch, cfg):
    """Sampled masses and second moments over the distinct sampled sets."""
    if batch.n_actions != policy.n_actions:
        raise DomainError("batch and policy have different action spaces")
    p = policy.probs
    a, b, u = batch.partition(policy.correct_mask)
    p2 = p * p
    p_pos = float(p[a].sum())
    p_neg = float(p[b].sum())
    u_pos2 = float(p2[u & policy.correct_mask].sum())
    u_neg2 = float(p2[u & ~policy.correct_mask].sum())
    q_pos = policy.q_pos
    return BatchDecomposition(
        p_pos=p_pos,
        p_neg=p_neg,
        a2=float(p2[a].sum()),
        b2=float(p2[b].sum()),
        u2=u_pos2 + u_neg2,
        u_pos2=u_pos2,
        u_neg2=u_neg2,
        s_r=cfg.r_correct * p_pos + cfg.r_wrong * p_neg,
        q_pos=q_pos,
        q_neg=1.0 - q_pos,
        q_upos=float(p[u & policy.correct_mask].sum()),
    )


def theoretical_logit_delta(policy, batch, cfg, eta):
    """dz_i = (eta / N) p_i (R_i - S_R), with R_i = 0 for unsampled actions."""
    if not eta >= 0:
        raise DomainError(f"eta must be >= 0, got {eta}")
    p = policy.probs
    sampled = batch.sampled_mask
    r = np.where(sampled, policy.rewards(cfg), 0.0)
    s_r = float(np.dot(p[sampled], r[sampled]))
    return (eta / len(batch)) * p * (r - s_r)


def theoretical_update(policy, batch, cfg, eta):
    return policy.with_logits(policy.logits + theoretical_logit_delta(policy, batch, cfg, eta))


def predicted_delta_qpos(d, cfg, eta, n):
    """First-order change of the total correct mass under ``theoretical_update``."""
    s = d.s_r
    bracket = (
        (cfg.r_correct - s) * d.q_neg * d.a2
        + (s - cfg.r_wrong) * d.q_pos * d.b2
        + s * (d.q_pos * d.u_neg2 - d.q_neg * d.u_pos2)
    )
    return eta / n * bracket


@dataclass(frozen=True)
class UnsampledCorrectDelta:
    direct_drift: float
    normalization_coupling: float

    @property
    def total(self):
        return self.direct_drift + self.normalization_coupling


def delta_qupos_terms(d, cfg, eta, n):
    """Split the unsampled-correct mass change into drift and coupling pieces (both scaled by eta/N)."""
    s = d.s_r
    scale = eta / n
    drift = -s * d.u_pos2
    coupling = -d.q_upos * ((cfg.r_correct - s) * d.a2 + (cfg.r_wrong - s) * d.b2 - s * d.u2)
    return UnsampledCorrectDelta(scale * drift, scale * coupling)


def predicted_delta_qupos(d, cfg, eta, n):
    """First-order change of the unsampled-correct mass under ``theoretical_update``."""
    s = d.s_r
    bracket = -s * d.u_pos2 - d.q_upos * (
        (cfg.r_correct - s) * d.a2 + (cfg.r_wrong - s) * d.b2 - s * d.u2
    )
    return eta / n * bracket


def subset_mass_delta(policy, subset, dz):
    """First-order change of the mass on ``subset`` for a logit perturbation ``dz``."""
    dz = np.asarray(dz, dtype=np.float64)
    if dz.shape != policy.logits.shape:
        raise DomainError(f"dz has shape {dz.shape}, logits have {policy.logits.shape}")
    p = policy.probs
    mask = _subset_mask(subset, policy.n_actions)
    mean_shift = float(np.dot(p, dz))
    return float(np.dot(p[mask], dz[mask])) - float(p[mask].sum()) * mean_shift


def _subset_mask(subset, n_actions):
    subset = np.asarray(subset)
    if subset.dtype == bool:
        if subset.shape != (n_actions,):
            raise DomainError("boolean subset mask has the wrong length")
        return subset
    mask = np.zeros(n_actions, dtype=bool)
    if subset.size:
        if subset.min() < 0 or subset.max() >= n_actions:
            raise DomainError("subset index out of range")
        mask[subset.astype(np.int64)] = True
    return mask


def retained_mass(initial, current):
    """1 - (correct mass lost by actions that went down) / (initial correct mass)."""
    if initial.n_actions != current.n_actions or not np.array_equal(
        initial.correct_mask, current.correct_mask
    ):
        raise DomainError("policies differ in action space or correct set")
    return _retained_mass(initial.probs, current.probs, initial.correct_mask)


def _retained_mass(p0, pt, mask):
    p0c = p0[mask]
    lost = np.maximum(0.0, p0c - pt[mask]).sum()
    return float(min(1.0, max(0.0, 1.0 - lost / p0c.sum())))


def policy_entropy(policy):
    return _entropy(policy.probs)


def _entropy(p):
    nz = p[p > 0]
    return float(-np.dot(nz, np.log(nz)))


@dataclass(frozen=True)
class SimMetrics:
    step: int
    q_pos: float
    retained_mass: float
    entropy: float


@dataclass(frozen=True)
class StepStats:
    """Per-step by-products of ``simulation_step``."""

    focal_weight: float
    s_r: float
    n_correct: int


class Adam:
    """Adam on the logits (ascent); defaults match torch.optim.Adam."""

    def __init__(self, n_params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def direction(self, grad, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * (grad * grad)
        m_hat = self.m / (1.0 - b1**self.t)
        v_hat = self.v / (1.0 - b2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


def surrogate_objective(logits, indices, advantages, objective="prob"):
    """(1/N) sum_j adv_j * f(p_{a_j}) with f = identity or log; used for gradient checks."""
    p = softmax(logits)
    vals = p[indices] if objective == "prob" else np.log(p[indices])
    return float(np.dot(advantages, vals) / len(indices))


def surrogate_gradient(p, indices, advantages, objective="prob"):
    """Exact d/dz of ``surrogate_objective``, summing over the multiset of draws."""
    n = len(indices)
    c = np.bincount(indices, weights=advantages, minlength=p.size)
    if objective == "prob":
        return (c * p - p * float(np.dot(advantages, p[indices]))) / n
    if objective == "logprob":
        return (c - p * float(advantages.sum())) / n
    raise DomainError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


def _step_core(p, correct_mask, reward_by_action, n, gamma, rng, objective):
    """Sample, build advantages, return (gradient, StepStats). Shared by the public step and the runner."""
    prob, alias = kernels.build_alias_table(p)
    idx = kernels.alias_draw(prob, alias, rng.random(n))
    rewards = reward_by_action[idx]
    adv = rewards - rewards.mean()
    x = int(np.count_nonzero(correct_mask[idx]))
    if gamma == 0:
        g = 1.0
    else:
        g = float((1.0 - x / n) ** gamma)
    seen = np.bincount(idx, minlength=p.size) > 0
    s_r = float(np.dot(p[seen], reward_by_action[seen]))
    if g == 0.0 or not adv.any():
        grad = np.zeros_like(p)
    else:
        grad = g * surrogate_gradient(p, idx, adv, objective)
    return grad, StepStats(g, s_r, x), idx


def simulation_step(policy, n, cfg, focal, eta, rng, objective="prob", optimizer=None):
    """One simulation update.

    Draws a multiset of ``n`` actions, sets advantages R_j - mean(R) per
    draw, and ascends ``g * surrogate`` where g is the focal weight of the
    draw's correct fraction. ``optimizer=None`` is plain gradient ascent
    (dz = eta * grad); pass an :class:`Adam` instance to use Adam, whose
    state is updated in place.

    Returns ``(new_policy, StepStats)``.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not eta > 0:
        raise DomainError(f"eta must be > 0, got {eta}")
    if objective not in OBJECTIVES:
        raise DomainError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    grad, stats, _ = _step_core(
        policy.probs, policy.correct_mask, policy.rewards(cfg), int(n), focal.gamma, rng, objective
    )
    dz = eta * grad if optimizer is None else optimizer.direction(grad, eta)
    return policy.with_logits(policy.logits + dz), stats


@dataclass(frozen=True)
class SimulationSpec:
    """Everything that defines one simulation run."""

    n_actions: int = 128_000
    n_correct: int = 10_000
    z_anchor: float = 5.0
    z_correct: float = 3.0
    z_incorrect: float = 0.0
    eta: float = 1e-2
    steps: int = 1000
    group_size: int = 2
    gamma: float = 0.0
    seed: int = 0
    rewards: RewardConfig = RewardConfig(1.0, -1.0)
    log_every: int = 10
    objective: str = "logprob"
    optimizer: str = "adam"

    def __post_init__(self):
        if self.steps < 1 or self.log_every < 1:
            raise DomainError("steps and log_every must be >= 1")
        if self.group_size < 1:
            raise DomainError("group_size must be >= 1")
        if not self.eta > 0:
            raise DomainError("eta must be > 0")
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}")
        if self.optimizer not in OPTIMIZERS:
            raise DomainError(f"optimizer must be one of {OPTIMIZERS}")
        FocalConfig(self.gamma)


@dataclass(frozen=True)
class MetricRow:
    step: int
    q_pos: float
    retained_mass: float
    entropy: float
    g_mean: float
    s_r_mean: float


METRIC_COLUMNS = ("step", "q_pos", "retained_mass", "entropy", "g_mean", "s_r_mean")


def run_simulation(spec):
    """Run one simulation and return its logged :class:`MetricRow` list.

    Rows are logged at step 0, every ``log_every`` steps and at the final
    step. ``g_mean``/``s_r_mean`` average the per-step focal weight and
    distinct-set baseline over the steps since the previous row (NaN at 0).
    """
    policy = init_anchor_policy(
        spec.n_actions, spec.n_correct, spec.z_anchor, spec.z_correct, spec.z_incorrect
    )
    mask = policy.correct_mask
    reward_by_action = policy.rewards(spec.rewards)
    z = policy.logits.copy()
    p0 = policy.probs
    p = p0
    adam = Adam(z.size) if spec.optimizer == "adam" else None

    rows = [MetricRow(0, float(p0[mask].sum()), 1.0, _entropy(p0), float("nan"), float("nan"))]
    g_acc = s_acc = 0.0
    since = 0
    for t in range(1, spec.steps + 1):
        grad, stats, _ = _step_core(
            p, mask, reward_by_action, spec.group_size, spec.gamma,
            step_rng(spec.seed, t), spec.objective,
        )
        z += spec.eta * grad if adam is None else adam.direction(grad, spec.eta)
        p = softmax(z)
        g_acc += stats.focal_weight
        s_acc += stats.s_r
        since += 1
        if t % spec.log_every == 0 or t == spec.steps:
            rows.append(
                MetricRow(
                    t,
                    float(p[mask].sum()),
                    _retained_mass(p0, p, mask),
                    _entropy(p),
                    g_acc / since,
                    s_acc / since,
                )
            )
            g_acc = s_acc = 0.0
            since = 0
    return rows
