"""Independent verifiers: simulation, enumeration and finite differences.

Nothing here evaluates a closed form through the code it is checking. The
reference value each report compares against is passed in (or computed by
the caller), and the estimates come from direct sampling or enumeration.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rlvr_dynamics import kernels
from rlvr_dynamics.errors import DomainError


@dataclass(frozen=True)
class OracleReport:
    name: str
    estimate: float
    reference: float
    stderr: float
    passed: bool
    trials: int

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name}\t{status}\testimate={self.estimate:.7g}\treference={self.reference:.7g}"
            f"\tstderr={self.stderr:.3g}\ttrials={self.trials}"
        )


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _binomial_report(name, hits, trials, reference):
    estimate = hits / trials
    # null-hypothesis stderr keeps tiny references testable when hits == 0
    stderr = math.sqrt(max(reference * (1 - reference), 0.0) / trials)
    passed = abs(estimate - reference) <= 4 * stderr or estimate == reference
    return OracleReport(name, estimate, reference, stderr, bool(passed), trials)


def simulate_tail_miss_hits(mu_pos, tau, n, trials, seed, chunk=1_000_000):
    """Count groups that are mixed yet have no rare-region draw.

    Each rollout lands in the rare region (tau), the rest of the correct
    region (mu - tau) or the incorrect region (1 - mu). The trinomial counts
    are drawn as a rare-count binomial followed by the correct-non-rare count
    among the remaining rollouts.
    """
    rng = _rng(seed)
    hits = 0
    left = int(trials)
    p_common = (mu_pos - tau) / (1 - tau) if tau < 1 else 0.0
    while left > 0:
        size = min(chunk, left)
        rare = rng.binomial(n, tau, size=size)
        common = rng.binomial(n - rare, min(max(p_common, 0.0), 1.0))
        correct = rare + common
        hits += int(np.count_nonzero((rare == 0) & (correct > 0) & (correct < n)))
        left -= size
    return hits


def mc_tail_miss(mu_pos, tau, n, trials, seed, reference):
    hits = simulate_tail_miss_hits(mu_pos, tau, n, trials, seed)
    return _binomial_report(f"tail_miss(mu={mu_pos:g},tau={tau:g},N={n})", hits, trials, reference)


def conditional_mass_samples(masses, k, trials, seed):
    """Distinct sampled mass for ``trials`` groups of ``k`` draws from q = masses / sum."""
    masses = np.asarray(masses, dtype=np.float64)
    if k < 0:
        raise DomainError("k must be >= 0")
    if k == 0:
        return np.zeros(trials)
    q = masses / masses.sum()
    rng = _rng(seed)
    prob, alias = kernels.build_alias_table(q)
    draws = kernels.alias_draw(prob, alias, rng.random(trials * k)).reshape(trials, k)
    present = np.zeros((trials, masses.size), dtype=bool)
    present[np.arange(trials)[:, None], draws] = True
    return present @ masses


def mc_conditional_mass(masses, k, trials, seed, reference):
    samples = conditional_mass_samples(masses, k, trials, seed)
    return mean_report(f"conditional_mass(k={k},support={len(masses)})", samples, reference)


def mc_conditional_baseline(pos_masses, neg_masses, k, n, r_correct, r_wrong, trials, seed, reference):
    """Monte Carlo of E[R_c P_pos + R_w P_neg | X = k] with N - k incorrect draws."""
    pos = conditional_mass_samples(pos_masses, k, trials, (seed, 0))
    neg = conditional_mass_samples(neg_masses, n - k, trials, (seed, 1))
    samples = r_correct * pos + r_wrong * neg
    return mean_report(f"conditional_baseline(k={k},N={n})", samples, reference)


def mean_report(name, samples, reference):
    trials = samples.size
    estimate = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    # constant samples leave only round-off in the stderr, so allow a tiny absolute slack
    slack = 1e-12 * max(1.0, abs(reference))
    passed = abs(estimate - reference) <= max(4 * stderr, slack)
    return OracleReport(name, estimate, reference, stderr, bool(passed), trials)


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def first_order_check(logits, correct_mask, sampled_mask, r_correct, r_wrong, n, eta_pair,
                      predict=None, name="first_order"):
    """Compare measured mass changes against first-order predictions at two step sizes.

    The logit step is rebuilt from scratch (distinct sampled sets, unsampled
    reward 0) and applied through an exact softmax. ``predict(eta)`` returns
    the predicted ``(dQ_pos, dQ_upos)``; without it the raw Jacobian
    contraction sum_i p_i dz_i - Q_S sum_j p_j dz_j is used. ``eta_pair`` is
    (eta, eta/2). Passes when the residual of both Q_pos and Q_u,pos shrinks
    by at least 3.5x, or both residuals are below 1e-14.

    Returns ``(report, details)``; ``details`` holds residuals and predictions
    keyed by (quantity, eta).
    """
    z = np.asarray(logits, dtype=np.float64)
    p = _softmax(z)
    pos = np.asarray(correct_mask, dtype=bool)
    sampled = np.asarray(sampled_mask, dtype=bool)
    upos = pos & ~sampled
    r = np.where(sampled, np.where(pos, r_correct, r_wrong), 0.0)
    s_r = float(np.dot(p[sampled], r[sampled]))
    direction = p * (r - s_r) / n

    residuals = {}
    predicted = {}
    for eta in eta_pair:
        dz = eta * direction
        p_new = _softmax(z + dz)
        shift = float(np.dot(p, dz))
        if predict is not None:
            preds = dict(zip(("q_pos", "q_upos"), predict(eta)))
        else:
            preds = {
                label: float(np.dot(p[s], dz[s]) - p[s].sum() * shift)
                for label, s in (("q_pos", pos), ("q_upos", upos))
            }
        for label, subset in (("q_pos", pos), ("q_upos", upos)):
            # sum of differences, not difference of sums: keeps round-off at the 1e-17 level
            measured = float(np.sum(p_new[subset] - p[subset]))
            residuals[(label, eta)] = abs(measured - preds[label])
            predicted[(label, eta)] = preds[label]
    return _ratio_report(name, residuals, eta_pair), {"residuals": residuals, "predicted": predicted}


def residual_ratio_report(name, residuals, eta_pair):
    return _ratio_report(name, residuals, eta_pair)


def _ratio_report(name, residuals, eta_pair):
    big, small = eta_pair
    ratios = []
    ok = True
    for label in ("q_pos", "q_upos"):
        r_big, r_small = residuals[(label, big)], residuals[(label, small)]
        if r_big < 1e-14 and r_small < 1e-14:
            ratios.append(4.0)
            continue
        ratio = r_big / r_small if r_small > 0 else math.inf
        ratios.append(ratio)
        ok &= ratio >= 3.5
    return OracleReport(name, min(ratios), 4.0, 0.0, bool(ok), 2)


def exhaustive_pass_at_k(row_n, c, k):
    """Fraction of k-subsets of n generations (the first c correct) that hit a correct one.

    Exact ratio as ``fractions.Fraction``; n is capped at 12.
    """
    from fractions import Fraction

    if not 1 <= row_n <= 12:
        raise DomainError("exhaustive enumeration is limited to 1 <= n <= 12")
    if not 0 <= c <= row_n or not 1 <= k <= row_n:
        raise DomainError(f"need 0 <= c <= n and 1 <= k <= n, got n={row_n}, c={c}, k={k}")
    hit = total = 0
    for subset in itertools.combinations(range(row_n), k):
        total += 1
        hit += any(i < c for i in subset)
    return Fraction(hit, total)


def reference_subsample_test(a, b, m, k, iterations, seed):
    """Explicit-index paired subsampling; returns (mean_diff, p_value).

    Draws the m column indices per problem per iteration and evaluates
    pass@k with the product-of-ratios form. Slow, for cross-checking only.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    rng = np.random.default_rng(seed)
    n_problems, n = a.shape

    def passk(c):
        if m - c < k:
            return 1.0
        return 1.0 - float(np.prod(1.0 - k / np.arange(m - c + 1, m + 1)))

    diffs = np.empty(iterations)
    for it in range(iterations):
        tot_a = tot_b = 0.0
        for i in range(n_problems):
            cols = rng.choice(n, size=m, replace=False)
            tot_a += passk(int(a[i, cols].sum()))
            tot_b += passk(int(b[i, cols].sum()))
        diffs[it] = (tot_b - tot_a) / n_problems
    below = np.count_nonzero(diffs < -1e-15) + 0.5 * np.count_nonzero(np.abs(diffs) <= 1e-15)
    f0 = below / iterations
    return float(diffs.mean()), float(min(1.0, 2 * min(f0, 1 - f0)))
