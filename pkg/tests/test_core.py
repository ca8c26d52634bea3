import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

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
from rlvr_dynamics.errors import DomainError, InvalidRewardError

BIN = RewardConfig(1.0, 0.0, 0.0)


def hand_advantages(rewards, eps):
    # direct formula by enumeration, independent of numpy's std
    n = len(rewards)
    mean = sum(rewards) / n
    sd = math.sqrt(sum((r - mean) ** 2 for r in rewards) / n)
    return [(r - mean) / (sd + eps) for r in rewards]


class TestRewardConfig:
    def test_requires_ordering(self):
        with pytest.raises(DomainError):
            RewardConfig(0.0, 0.0)

    def test_requires_nonnegative_eps(self):
        with pytest.raises(DomainError):
            RewardConfig(1.0, 0.0, -1e-3)

    def test_default_eps(self):
        assert RewardConfig().adv_epsilon == 1e-6


@pytest.mark.parametrize(
    "rewards, expected",
    [([1, 0, 0, 0], 0.25), ([1, 1], 1.0), ([0, 0, 0], 0.0)],
)
def test_empirical_success_rate(rewards, expected):
    assert empirical_success_rate(RolloutGroup(rewards), BIN) == expected


def test_invalid_reward_rejected():
    with pytest.raises(InvalidRewardError):
        empirical_success_rate(RolloutGroup([1, 1, 0, -1]), BIN)
    with pytest.raises(InvalidRewardError):
        grpo_advantages(RolloutGroup([1, 0.5]), BIN)


def test_empty_group_rejected():
    with pytest.raises(DomainError):
        RolloutGroup([])


def test_success_rate_with_negative_wrong_reward():
    cfg = RewardConfig(1.0, -1.0)
    g = RolloutGroup([1, -1, -1, 1, 1])
    assert empirical_success_rate(g, cfg) == pytest.approx((g.rewards.mean() + 1) / 2)


class TestGrpoAdvantages:
    def test_one_of_four(self):
        got = grpo_advantages(RolloutGroup([1, 0, 0, 0]), BIN)
        np.testing.assert_allclose(got, [1.7320508, -0.5773503, -0.5773503, -0.5773503], atol=1e-7)
        np.testing.assert_allclose(got, hand_advantages([1, 0, 0, 0], 0.0), rtol=1e-14)

    def test_pair(self):
        np.testing.assert_allclose(grpo_advantages(RolloutGroup([1, 0]), BIN), [1.0, -1.0], rtol=1e-15)

    @pytest.mark.parametrize("eps", [0.0, 1e-6, 0.5])
    def test_homogeneous_is_zero(self, eps):
        cfg = RewardConfig(1.0, 0.0, eps)
        assert np.array_equal(grpo_advantages(RolloutGroup([1, 1, 1]), cfg), np.zeros(3))

    def test_eps_in_divisor(self):
        cfg = RewardConfig(1.0, 0.0, 0.1)
        got = grpo_advantages(RolloutGroup([1, 0, 0, 0]), cfg)
        np.testing.assert_allclose(got, hand_advantages([1, 0, 0, 0], 0.1), rtol=1e-14)


class TestFocal:
    def test_weight_value(self):
        g = RolloutGroup([1, 1, 0, 0, 0, 0, 0, 0])
        assert focal_weight(g, BIN, FocalConfig(0.5)) == pytest.approx(0.8660254, abs=1e-7)

    def test_gamma_zero_is_identity(self):
        g = RolloutGroup([1, 1])
        assert focal_weight(g, BIN, FocalConfig(0.0)) == 1.0
        np.testing.assert_array_equal(
            focal_advantages(RolloutGroup([1, 0, 1]), BIN, FocalConfig(0.0)),
            grpo_advantages(RolloutGroup([1, 0, 1]), BIN),
        )

    def test_all_correct_weight_zero(self):
        assert focal_weight(RolloutGroup([1, 1, 1]), BIN, FocalConfig(1.0)) == 0.0

    def test_focal_advantage_value(self):
        got = focal_advantages(RolloutGroup([1, 0, 0, 0]), BIN, FocalConfig(1.0))
        assert got[0] == pytest.approx(1.2990381, abs=1e-7)
        assert got[0] == pytest.approx(0.75 * hand_advantages([1, 0, 0, 0], 0.0)[0], rel=1e-14)

    def test_all_wrong_zero(self):
        assert np.array_equal(focal_advantages(RolloutGroup([0, 0]), BIN, FocalConfig(1.0)), [0.0, 0.0])

    def test_negative_gamma_rejected(self):
        with pytest.raises(DomainError):
            FocalConfig(-0.1)


groups = st.lists(st.booleans(), min_size=1, max_size=64)


@given(groups, st.floats(0, 1e-2), st.floats(0, 4))
def test_zero_signal_for_homogeneous(n_and_flag, eps, gamma):
    flag = n_and_flag[0]
    g = RolloutGroup.from_correct([flag] * len(n_and_flag), BIN)
    cfg = RewardConfig(1.0, 0.0, eps)
    assert not grpo_advantages(g, cfg).any()
    assert not focal_advantages(g, cfg, FocalConfig(gamma)).any()


@given(st.integers(1, 40), st.data())
def test_focal_weight_monotone(n, data):
    x1 = data.draw(st.integers(0, n))
    x2 = data.draw(st.integers(x1, n))
    g1 = data.draw(st.floats(0, 5))
    g2 = data.draw(st.floats(g1, 5))
    grp = lambda x: RolloutGroup.from_correct([True] * x + [False] * (n - x), BIN)
    f = lambda x, g: focal_weight(grp(x), BIN, FocalConfig(g))
    assert f(x2, g1) <= f(x1, g1)
    if x1 >= 1:
        assert f(x1, g2) <= f(x1, g1)


@given(groups, st.floats(0, 4))
def test_sign_preserved(flags, gamma):
    g = RolloutGroup.from_correct(flags, BIN)
    base = grpo_advantages(g, BIN)
    scaled = focal_advantages(g, BIN, FocalConfig(gamma))
    assert np.all(np.sign(scaled) * np.sign(base) >= 0)
    assert np.all((scaled == 0) | (np.sign(scaled) == np.sign(base)))


@given(groups.filter(lambda f: any(f) and not all(f)))
def test_mixed_group_advantages_mean_zero(flags):
    adv = grpo_advantages(RolloutGroup.from_correct(flags, BIN), BIN)
    assert abs(adv.mean()) <= 1e-12


@pytest.mark.parametrize("mu, n", [(0.1, 4), (0.5, 8), (0.83, 16)])
def test_success_rate_unbiased(mu, n):
    rng = np.random.default_rng(11)
    reps = 20_000
    draws = rng.random((reps, n)) < mu
    rates = [empirical_success_rate(RolloutGroup.from_correct(d, BIN), BIN) for d in draws]
    se = math.sqrt(mu * (1 - mu) / (n * reps))
    assert abs(np.mean(rates) - mu) <= 4 * se


class TestMagnitudeCurve:
    def test_symmetric_point(self):
        c, w = advantage_magnitude_curve([0.5], 0.0)
        assert c[0] == 1.0 and w[0] == 1.0
        c, w = advantage_magnitude_curve([0.5], 1.0)
        assert c[0] == 0.5 and w[0] == 0.5

    def test_high_success_suppressed(self):
        mu = np.array([0.9, 0.99, 0.999, 0.9999])
        c, _ = advantage_magnitude_curve(mu, 1.0)
        assert np.all(np.diff(c) < 0) and c[-1] < 1e-5

    def test_matches_grpo_for_balanced_group(self):
        # a group with exactly mu*N correct has the analytic magnitudes (eps = 0)
        g = RolloutGroup([1, 1, 1, 0])
        adv = grpo_advantages(g, BIN)
        c, w = advantage_magnitude_curve([0.75], 0.0)
        assert adv[0] == pytest.approx(c[0], rel=1e-14)
        assert -adv[3] == pytest.approx(w[0], rel=1e-14)

    def test_finite_eps_flag(self):
        cfg = RewardConfig(1.0, -1.0, 0.01)
        adv = grpo_advantages(RolloutGroup([1, 1, 1, -1]), cfg)
        c, w = advantage_magnitude_curve([0.75], 0.0, cfg, finite_eps=True)
        assert adv[0] == pytest.approx(c[0], rel=1e-14)
        assert -adv[3] == pytest.approx(w[0], rel=1e-14)

    @pytest.mark.parametrize("mu", [0.0, 1.0, -0.1])
    def test_domain(self, mu):
        with pytest.raises(DomainError):
            advantage_magnitude_curve([mu], 1.0)


class TestClipping:
    def test_upper_clip(self):
        assert clip_surrogate_term(TokenRatioPoint(1.5, 2.0, 0.2, 0.2)) == pytest.approx(2.4)

    @pytest.mark.parametrize("adv", [-3.0, 0.0, 0.7])
    def test_ratio_one(self, adv):
        assert clip_surrogate_term(TokenRatioPoint(1.0, adv, 0.3, 0.1)) == adv

    def test_lower_clip_negative_adv(self):
        assert clip_surrogate_term(TokenRatioPoint(0.5, -1.0, 0.2, 0.28)) == pytest.approx(-0.8)

    @given(st.floats(-0.19, 0.27), st.floats(-5, 5))
    def test_inside_band_unclipped(self, delta, adv):
        r = 1.0 + delta
        assert clip_surrogate_term(TokenRatioPoint(r, adv, 0.2, 0.28)) == r * adv

    @given(st.floats(1.3, 50), st.floats(0.01, 5))
    def test_outside_band_positive_adv(self, r, adv):
        assert clip_surrogate_term(TokenRatioPoint(r, adv, 0.2, 0.28)) == pytest.approx(1.28 * adv)

    def test_cispo(self):
        assert cispo_clipped_weight(TokenRatioPoint(8.0, 1.0, 1.0, 5.0)) == 6.0
        assert cispo_clipped_weight(TokenRatioPoint(1.0, 1.0, 1.0, 5.0)) == 1.0
        assert cispo_clipped_weight(TokenRatioPoint(0.001, 1.0, 1.0, 5.0)) == 0.001

    def test_invalid_points(self):
        with pytest.raises(DomainError):
            TokenRatioPoint(0.0, 1.0)
        with pytest.raises(DomainError):
            TokenRatioPoint(1.0, 1.0, eps_low=1.5)
