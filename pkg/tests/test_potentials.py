import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

import resolvent_lab as rl
from resolvent_lab.errors import (AccuracyError, EvaluationError,
                                  InvalidInputError)
from resolvent_lab.potentials import (MollifierKernel, PotentialModel,
                                      REFERENCE_GRID, holder_seminorm,
                                      mollify, theta_for)


def brute_force_seminorm(f, alpha, beta, grid):
    """Independent quadratic-time oracle over all ordered pairs."""
    r = np.sort(np.asarray(grid, dtype=float))
    v = f(r)
    best = 0.0
    for i in range(r.size):
        d = np.abs(r - r[i])
        mask = (d > 0) & (d <= 1.0)
        if not mask.any():
            continue
        q = np.abs(v[mask] - v[i]) / d[mask] ** alpha * (r[i] + 1.0) ** beta
        best = max(best, float(q.max()))
    return best


class TestHolderSeminorm:
    def test_sqrt_on_unit_interval(self):
        grid = np.linspace(0.0, 1.0, 1001)
        oracle = brute_force_seminorm(np.sqrt, 0.5, 0.0, grid)
        assert oracle == pytest.approx(1.0, abs=1e-12)
        assert holder_seminorm(np.sqrt, 0.5, 0.0, grid) == pytest.approx(oracle, rel=1e-12)

    def test_constant_is_zero(self):
        grid = np.linspace(0.0, 5.0, 301)
        assert holder_seminorm(lambda r: np.full_like(r, 3.7), 0.8, 2.0, grid) == 0.0

    def test_identity_is_one(self):
        grid = np.linspace(0.0, 3.0, 400)
        assert holder_seminorm(lambda r: r, 1.0, 0.0, grid) == pytest.approx(1.0, rel=1e-12)

    def test_matches_bruteforce_on_random_grid(self):
        rng = np.random.default_rng(11)
        grid = np.sort(rng.uniform(0.0, 4.0, 160))
        f = lambda r: np.abs(np.cos(2 * r)) ** 0.4
        assert holder_seminorm(f, 0.4, 1.5, grid) == pytest.approx(
            brute_force_seminorm(f, 0.4, 1.5, grid), rel=1e-12)

    def test_monotone_under_refinement(self):
        f = lambda r: np.abs(np.cos(3 * r)) ** 0.5
        rng = np.random.default_rng(5)
        grid = np.sort(rng.uniform(0.0, 6.0, 80))
        base = holder_seminorm(f, 0.5, 1.0, grid)
        for k in range(4):
            grid = np.sort(np.concatenate([grid, rng.uniform(0.0, 6.0, 40)]))
            refined = holder_seminorm(f, 0.5, 1.0, grid)
            assert refined >= base - 1e-15
            base = refined

    def test_rejects_tiny_grid(self):
        with pytest.raises(InvalidInputError):
            holder_seminorm(np.sqrt, 0.5, 0.0, [1.0])

    def test_reports_nonfinite_location(self):
        f = lambda r: np.where(r > 0.5, np.nan, r)
        with pytest.raises(EvaluationError, match="r="):
            holder_seminorm(f, 0.5, 0.0, np.linspace(0.0, 1.0, 11))


class TestKernel:
    def test_mass_and_gradient_mass(self, kernel):
        assert abs(kernel.moment0 - 1.0) <= 1e-10
        assert abs(kernel.gradient_mass) <= 1e-10

    def test_support_and_sign(self, kernel):
        probe = np.array([-0.2, -1e-9, 1.0 + 1e-9, 1.5])
        assert_allclose(kernel.rho(probe), 0.0, atol=1e-300)
        inside = np.linspace(1e-4, 1 - 1e-4, 999)
        assert np.all(kernel.rho(inside) >= 0.0)

    def test_first_moment_is_half_by_symmetry(self, kernel):
        assert kernel.moment_alpha(1.0) == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    def test_rejects_unnormalized_kernel(self):
        with pytest.raises(InvalidInputError, match="mass"):
            MollifierKernel(lambda s: 2.0 * rl.bump_kernel().rho(s),
                            lambda s: 2.0 * rl.bump_kernel().drho(s))


class TestMollify:
    def test_exact_on_constants(self, kernel):
        model = PotentialModel("const", lambda r: np.full_like(r, 2.5),
                               lambda r: np.full_like(r, 3.0),
                               alpha=1.0, beta=1.0, holder_const=0.0)
        smoothed = mollify(model, kernel, 0.1, check=False)
        r = np.linspace(0.0, 10.0, 101)
        assert_allclose(smoothed.evaluate(r), 2.5, rtol=1e-13)
        assert_allclose(smoothed.evaluate_deriv(r), 0.0, atol=1e-12)

    def test_linear_shift_by_first_moment(self, kernel):
        model = PotentialModel("linear", lambda r: np.asarray(r, dtype=float),
                               lambda r: np.asarray(r, dtype=float) + 1.0,
                               alpha=1.0, beta=1.0, holder_const=1.0)
        theta = 0.05
        m1, _ = quad(lambda s: s * kernel.rho(s), 0.0, 1.0, epsabs=1e-13)
        smoothed = mollify(model, kernel, theta, check=False)
        r = np.linspace(0.0, 5.0, 41)
        assert_allclose(smoothed.evaluate(r), r + theta * m1, rtol=0, atol=1e-9)

    def test_shift_commutes_with_mollification(self, kernel, holder_model):
        c = 0.7
        shifted = PotentialModel(
            "shifted", lambda r: holder_model(np.asarray(r) + c),
            lambda r: holder_model.envelope_at(np.asarray(r) + c),
            alpha=holder_model.alpha, beta=holder_model.beta,
            holder_const=holder_model.holder_const)
        theta = 0.03
        a = mollify(shifted, kernel, theta, check=False)
        b = mollify(holder_model, kernel, theta, check=False)
        r = np.linspace(0.0, 6.0, 301)
        assert_allclose(a.evaluate(r), b.evaluate(r + c), rtol=0, atol=1e-12)

    def test_rejects_theta_outside_unit_interval(self, kernel, holder_model):
        for theta in (0.0, 1.0, 1.5, -0.1):
            with pytest.raises(InvalidInputError):
                mollify(holder_model, kernel, theta)

    def test_rougher_than_declared_class_trips_check(self, kernel):
        step = PotentialModel(
            "step", lambda r: np.where(np.asarray(r) < 1.98, 1.0, 0.0),
            lambda r: np.full_like(np.asarray(r, dtype=float), 1.1),
            alpha=0.9, beta=1.0, holder_const=0.01)
        with pytest.raises(AccuracyError):
            mollify(step, kernel, 0.1)

    @pytest.mark.parametrize("theta", [1e-1, 1e-2, 1e-3])
    @pytest.mark.parametrize("name,params", [
        ("zero", {}),
        ("power_law", {"c": 0.5, "delta": 1.0}),
        ("holder_bump", {"c": 0.1, "alpha": 0.5, "freq": 2.0}),
        ("barrier_well", {}),
    ])
    def test_family_invariants(self, kernel, name, params, theta):
        model = rl.build_potential(name, params)
        smoothed = mollify(model, kernel, theta)
        grid = np.linspace(0.0, 12.0, 2001)
        smoothed.check_invariants(grid, slack=0.5)

    def test_error_ratio_stable_across_decades(self, kernel):
        model = rl.build_potential("holder_bump", {"c": 1.0, "alpha": 0.5, "freq": 1.0})
        grid = np.linspace(0.0, 10.0, 4001)
        ratios = [mollify(model, kernel, t).error_ratio(grid)
                  for t in (1e-1, 1e-2, 1e-3)]
        assert max(ratios) / min(ratios) <= 2.0


class TestThetaFor:
    def test_power_of_one(self):
        assert theta_for(1.0, 0.5) == 1.0

    def test_frozen_value(self):
        expected = math.exp(math.log(0.1) * 2.0 / 3.5)
        assert theta_for(0.1, 0.5) == pytest.approx(expected, rel=1e-15)
        assert theta_for(0.1, 0.5) == pytest.approx(0.2682695795279726, rel=1e-12)

    def test_rejects_lipschitz_exponent(self):
        with pytest.raises(InvalidInputError):
            theta_for(0.01, 1.0)

    def test_rejects_h_outside_range(self):
        for h in (0.0, -0.5, 1.5):
            with pytest.raises(InvalidInputError):
                theta_for(h, 0.5)


class TestModels:
    def test_builtin_models_validate(self):
        for name, params in [("zero", {}), ("power_law", {"c": 0.5, "delta": 1.0}),
                             ("holder_bump", {"c": 0.1, "alpha": 0.5, "freq": 2.0}),
                             ("barrier_well", {})]:
            rl.build_potential(name, params).validate()

    def test_constant_envelope_rejected(self):
        model = PotentialModel("bad", lambda r: np.zeros_like(r),
                               lambda r: np.full_like(np.asarray(r, dtype=float), 1e6),
                               alpha=1.0, beta=1.0, holder_const=0.0)
        with pytest.raises(InvalidInputError, match="decay"):
            model.validate()

    def test_envelope_dominates_everywhere(self, barrier_model):
        r = REFERENCE_GRID
        assert np.all(barrier_model(r) <= barrier_model.envelope_at(r) * (1 + 1e-12))

    def test_unknown_name_lists_choices(self):
        with pytest.raises(InvalidInputError, match="power_law"):
            rl.build_potential("nope")

    def test_holder_membership_on_sample_grid(self, holder_model):
        sem = holder_seminorm(holder_model.evaluate, holder_model.alpha,
                              holder_model.beta, np.linspace(0.0, 20.0, 3001))
        assert sem <= holder_model.holder_const * (1 + 1e-9)
