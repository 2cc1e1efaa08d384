"""Behavioral functions: value-of-trend, herding, diffusion, profits, rates."""

import math

import numpy as np
import pytest

from kinmarket.model import (
    ConfigurationError,
    ModelParams,
    ValueFunctionSpec,
    chartist_profit,
    diffusion,
    fundamentalist_profit,
    herding,
    max_opinion_noise_variance,
    opinion_noise_halfwidth,
    price_noise_halfwidth,
    switch_rate,
    validate_opinion_noise,
    value_function,
)


def make_test3_params(**over):
    base = dict(alpha1=0.2, alpha2=0.55, sigma2_opinion=5e-4, beta=6.0,
                zeta2_price=2.5e-3, t_C=0.02, gamma_f=0.1, S_F=20.0,
                dividend=0.004, k_discount=0.75, mu_freq=0.2, sigma_switch=0.8,
                herding_a=0.0, herding_b=1.0)
    base.update(over)
    return ModelParams(**base)


class TestValueFunction:
    spec = ValueFunctionSpec(L=1.0, R0=0.0, r_exp=0.5, l_exp=0.25)

    def test_reference_point(self):
        assert value_function(self.spec, 0.0) == 0.0

    def test_upper_saturation(self):
        assert value_function(self.spec, 1.0) == 1.0
        # clamped beyond the domain boundary
        assert value_function(self.spec, 2.5) == 1.0
        assert value_function(self.spec, -3.0) == -1.0

    def test_gain_branch(self):
        assert value_function(self.spec, 0.25) == pytest.approx(0.5, abs=1e-15)

    def test_loss_branch(self):
        # loss branch evaluates -(0.25)**(1/4); oracle: independent scalar power
        assert value_function(self.spec, -0.25) == pytest.approx(
            -(0.25 ** 0.25), abs=1e-15)
        assert value_function(self.spec, -0.25) == pytest.approx(
            -0.7071067811865476, abs=1e-12)

    def test_monotone_and_bounded_on_grid(self):
        x = np.linspace(-1.5, 1.5, 10001)
        v = value_function(self.spec, x)
        assert np.all(np.diff(v) >= 0.0)
        assert v.min() >= -1.0 and v.max() <= 1.0

    def test_loss_aversion(self):
        # steeper for losses: |phi(-x)| >= phi(x) on (0, L) when l < r
        x = np.linspace(1e-6, 1.0 - 1e-9, 2000)
        assert np.all(np.abs(value_function(self.spec, -x))
                      >= value_function(self.spec, x))

    def test_shifted_reference_point(self):
        spec = ValueFunctionSpec(L=1.0, R0=0.2, r_exp=0.5, l_exp=0.3)
        assert value_function(spec, 0.2) == 0.0
        assert value_function(spec, 1.0) == 1.0
        assert value_function(spec, -1.0) == -1.0
        x = np.linspace(-1.0, 1.0, 4001)
        v = value_function(spec, x)
        assert np.all(np.diff(v) >= 0.0)

    @pytest.mark.parametrize("kwargs", [
        dict(L=0.0), dict(L=-1.0), dict(R0=1.0), dict(R0=-1.5),
        dict(r_exp=1.0), dict(r_exp=0.0), dict(l_exp=0.6, r_exp=0.5),
        dict(l_exp=0.0),
    ])
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            ValueFunctionSpec(**kwargs)

    def test_spec_is_callable(self):
        assert self.spec(0.25) == value_function(self.spec, 0.25)


class TestHerdingDiffusion:
    def test_constant_herding(self):
        p = ModelParams(herding_a=1.0, herding_b=0.0)
        assert herding(p, 0.7) == 1.0

    def test_linear_herding_endpoints(self):
        p = ModelParams(herding_a=0.0, herding_b=1.0)
        assert herding(p, 0.0) == 1.0
        assert herding(p, 1.0) == 0.0
        assert herding(p, -1.0) == 0.0

    def test_herding_hand_value(self):
        p = ModelParams(herding_a=0.2, herding_b=0.5)
        assert herding(p, 0.5) == pytest.approx(0.45, abs=1e-15)

    def test_herding_symmetric_and_bounded(self):
        p = ModelParams(herding_a=0.3, herding_b=0.6)
        y = np.linspace(0.0, 1.0, 10000)
        assert np.array_equal(herding(p, y), herding(p, -y))
        all_y = np.linspace(-1.0, 1.0, 10000)
        h = herding(p, all_y)
        assert h.min() >= 0.0 and h.max() <= 1.0

    def test_diffusion_values(self):
        p1 = ModelParams(gamma_diff=1.0)
        assert diffusion(p1, 0.0) == 1.0
        assert diffusion(p1, 1.0) == 0.0
        assert diffusion(p1, -1.0) == 0.0
        p2 = ModelParams(gamma_diff=2.0)
        assert diffusion(p2, 0.5) == pytest.approx(0.5625, abs=1e-15)

    def test_diffusion_symmetric_bounded(self):
        p = ModelParams(gamma_diff=1.5)
        y = np.linspace(0.0, 1.0, 10000)
        assert np.array_equal(diffusion(p, y), diffusion(p, -y))
        d = diffusion(p, np.linspace(-1.0, 1.0, 10000))
        assert d.min() >= 0.0


class TestProfits:
    def test_calibration_at_fundamental_price(self):
        # D=0.004, S_F=20 gives r=0.0002; stable price at S_F zeroes both payoffs
        p = make_test3_params()
        assert p.r_return == pytest.approx(0.0002, abs=1e-18)
        assert chartist_profit(p, 0.5, 20.0, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert fundamentalist_profit(p, 20.0) == 0.0

    def test_fundamentalist_zero_at_s_f_any_k(self):
        for k in (0.1, 0.5, 0.9):
            p = ModelParams(S_F=20.0, k_discount=k)
            assert fundamentalist_profit(p, 20.0) == 0.0

    def test_fundamentalist_hand_value(self):
        p = ModelParams(k_discount=0.75, S_F=20.0)
        assert fundamentalist_profit(p, 10.0) == pytest.approx(0.75, abs=1e-15)

    def test_fundamentalist_nonnegative(self):
        p = ModelParams(k_discount=0.3, S_F=20.0)
        for s in np.linspace(0.5, 60.0, 50):
            assert fundamentalist_profit(p, s) >= 0.0

    def test_chartist_sign_relation(self):
        p = make_test3_params()
        rng = np.random.default_rng(3)
        for _ in range(200):
            y = rng.uniform(-1, 1)
            s = rng.uniform(1.0, 40.0)
            s_dot = rng.uniform(-2.0, 2.0)
            signal = (s_dot / p.mu_freq + p.dividend) / s - p.r_return
            assert np.sign(chartist_profit(p, y, s, s_dot)) == np.sign(y) * np.sign(signal)

    def test_nonpositive_price_rejected(self):
        p = ModelParams()
        with pytest.raises(ValueError):
            chartist_profit(p, 0.5, 0.0, 0.0)
        with pytest.raises(ValueError):
            fundamentalist_profit(p, -1.0)

    def test_profit_consistency_across_parameter_sets(self):
        # both payoffs vanish simultaneously at (S=S_F, S_dot=0)
        for div, sf in ((0.0, 10.0), (0.004, 20.0), (0.1, 5.0)):
            p = ModelParams(dividend=div, S_F=sf)
            assert chartist_profit(p, 0.9, sf, 0.0) == pytest.approx(0.0, abs=1e-15)
            assert fundamentalist_profit(p, sf) == 0.0


class TestSwitchRate:
    def test_unit_at_zero(self):
        p = ModelParams(sigma_switch=0.8)
        assert switch_rate(p, 0.0) == 1.0

    def test_hand_value(self):
        p = ModelParams(sigma_switch=0.8)
        assert switch_rate(p, 1.0) == pytest.approx(math.exp(0.8), rel=1e-15)
        assert switch_rate(p, 1.0) == pytest.approx(2.225540928492468, rel=1e-12)

    def test_monotone_positive(self):
        p = ModelParams(sigma_switch=0.5)
        x = np.linspace(-5.0, 5.0, 1000)
        r = switch_rate(p, x)
        assert np.all(r > 0.0)
        assert np.all(np.diff(r) > 0.0)


class TestNoiseBounds:
    def test_opinion_halfwidth(self):
        p = ModelParams(alpha1=0.01, alpha2=0.01)
        assert opinion_noise_halfwidth(p) == pytest.approx(0.49, abs=1e-15)

    def test_degenerate_halfwidth(self):
        p = ModelParams(alpha1=0.5, alpha2=0.5, sigma2_opinion=0.0)
        assert opinion_noise_halfwidth(p) == 0.0

    def test_price_halfwidth(self):
        p = ModelParams(beta=0.1, t_C=1.0, gamma_f=1.3)
        assert price_noise_halfwidth(p, 0.5, 0.5) == pytest.approx(0.885, abs=1e-15)

    def test_inadmissible_opinion_variance_rejected(self):
        p = ModelParams(alpha1=0.01, alpha2=0.01, sigma2_opinion=0.5)
        with pytest.raises(ConfigurationError) as err:
            validate_opinion_noise(p)
        # the error reports the admissible maximum
        assert str(max_opinion_noise_variance(p))[:6] in str(err.value)

    def test_admissible_variance_accepted(self):
        validate_opinion_noise(ModelParams(alpha1=0.01, alpha2=0.01,
                                           sigma2_opinion=0.02))

    def test_nonquadratic_diffusion_skips_support_check(self):
        p = ModelParams(alpha1=0.4, alpha2=0.4, sigma2_opinion=0.5, gamma_diff=2.0)
        validate_opinion_noise(p)


class TestModelParamsValidation:
    def test_r_return_derived(self):
        p = ModelParams(dividend=0.004, S_F=20.0)
        assert p.r_return == 0.004 / 20.0

    @pytest.mark.parametrize("kwargs", [
        dict(alpha1=0.6, alpha2=0.6),
        dict(alpha1=-0.1),
        dict(alpha2=1.2),
        dict(sigma2_opinion=-1.0),
        dict(S_F=0.0),
        dict(dividend=-0.1),
        dict(k_discount=1.0),
        dict(k_discount=0.0),
        dict(mu_freq=0.0),
        dict(herding_a=0.7, herding_b=0.7),
        dict(herding_b=-0.1),
        dict(gamma_diff=0.0),
        dict(beta=0.5, t_C=1.0, gamma_f=1.3),  # beta*(t_C+gamma_f) >= 1
    ])
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            ModelParams(**kwargs)
