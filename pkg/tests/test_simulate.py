import math

import numpy as np
import pytest

from sprk.simulate import (IncrementSample, SdeProblem, SimulationError, Stepper, StudyError,
                           aggregate_increments, builtin_problem, dyadic_steps, fit_slope,
                           integrate, invariant_drift, sample_increments, simulate_paths, step,
                           strong_study, weak_study)
from sprk.tableau import builtin, constant_tableau


def _inc(dW, J=None):
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    return IncrementSample(dW, np.zeros_like(dW) if J is None else np.atleast_2d(J))


class TestIncrements:
    def test_moments(self):
        n = 10 ** 6
        inc = sample_increments(1.0, 1, np.random.default_rng(0), size=n)
        w, j = inc.dW[:, 0], inc.J[:, 0]
        for sample, target in [(w * w, 1.0), (w * j, 0.5), (j * j, 1 / 3)]:
            se = sample.std() / math.sqrt(n)
            assert abs(sample.mean() - target) < 3 * se
        assert abs(w.mean()) < 3 / math.sqrt(n)

    def test_noises_are_independent(self):
        n = 200_000
        inc = sample_increments(1.0, 2, np.random.default_rng(1), size=n)
        prod = inc.dW[:, 0] * inc.J[:, 1]
        assert abs(prod.mean()) < 3 * prod.std() / math.sqrt(n)

    def test_scaling(self):
        a = sample_increments(0.25, 1, np.random.default_rng(4), size=1000)
        b = sample_increments(1.0, 1, np.random.default_rng(4), size=1000)
        np.testing.assert_allclose(np.var(b.dW) / np.var(a.dW), 4.0)
        np.testing.assert_allclose(np.var(b.J) / np.var(a.J), 64.0)

    def test_no_noise(self):
        inc = sample_increments(0.5, 0, np.random.default_rng(0), size=3)
        assert inc.dW.shape == (3, 0) and inc.M == 0

    def test_positive_step(self):
        with pytest.raises(ValueError):
            sample_increments(0.0, 1, np.random.default_rng(0))

    def test_aggregation_matches_path_quadrature(self):
        # piecewise-linear Brownian path: J_i = h dW_i / 2 holds exactly, and the
        # coarse integral of W - W(t_start) is a trapezoid sum over the fine grid
        rng = np.random.default_rng(2)
        hf, factor, coarse = 0.1, 8, 5
        dW = rng.standard_normal((1, coarse * factor, 1)) * math.sqrt(hf)
        agg = aggregate_increments(IncrementSample(dW, hf * dW / 2), factor, hf)
        W = np.concatenate([[0.0], np.cumsum(dW[0, :, 0])])
        for c in range(coarse):
            seg = W[c * factor:(c + 1) * factor + 1] - W[c * factor]
            trap = hf * (seg[:-1] + seg[1:]).sum() / 2
            assert agg.J[0, c, 0] == pytest.approx(trap, abs=1e-13)
            assert agg.dW[0, c, 0] == pytest.approx(seg[-1], abs=1e-13)

    def test_aggregated_covariance(self):
        n, hf = 200_000, 0.25
        fine = sample_increments(hf, 1, np.random.default_rng(3), size=(n, 4))
        agg = aggregate_increments(fine, 4, hf)
        w, j = agg.dW[:, 0, 0], agg.J[:, 0, 0]
        for sample, target in [(w * w, 1.0), (w * j, 0.5), (j * j, 1 / 3)]:
            assert abs(sample.mean() - target) < 3 * sample.std() / math.sqrt(n)

    def test_aggregation_needs_divisible_steps(self):
        fine = sample_increments(0.1, 1, np.random.default_rng(0), size=(2, 6))
        with pytest.raises(ValueError):
            aggregate_increments(fine, 4, 0.1)


class TestProblems:
    def test_langevin_fields(self):
        prob = builtin_problem("langevin", omega=2.0, alpha=0.5, beta=0.3)
        xs = [np.array([[1.5]]), np.array([[-0.5]]), np.array([[0.0]])]
        assert prob.fields[(2, 0)](xs)[0, 0] == pytest.approx(-4 * 1.5 + 0.25)
        assert prob.fields[(2, 1)](xs)[0, 0] == 0.3
        assert (1, 1) not in prob.fields

    def test_synchrotron_fields(self):
        prob = builtin_problem("synchrotron", omega=1.5, lam=0.2)
        xs = [np.array([[0.3]]), np.array([[0.7]])]
        assert prob.fields[(1, 0)](xs)[0, 0] == pytest.approx(-2.25 * math.sin(0.7))
        assert prob.fields[(1, 1)](xs)[0, 0] == pytest.approx(-0.2 * 2.25 * math.cos(0.7))
        assert prob.fields[(2, 0)](xs)[0, 0] == 0.3

    def test_jansen_rit_structure(self):
        prob = builtin_problem("jansen_rit")
        assert (prob.Q, prob.M, prob.dims) == (2, 3, (3, 3))
        assert all((1, m) not in prob.fields for m in (1, 2, 3))
        xs = [np.array([[1.0, 2.0, 3.0]]), np.array([[4.0, 5.0, 6.0]])]
        np.testing.assert_array_equal(prob.fields[(1, 0)](xs), xs[1])
        with pytest.raises(ValueError):
            builtin_problem("jansen_rit", bogus=1)

    def test_bilinear_invariant_is_conserved_by_the_vector_fields(self):
        prob = builtin_problem("bilinear_skew", M=2)
        rng = np.random.default_rng(0)
        xs = [rng.standard_normal((5, 2)), rng.standard_normal((5, 2))]
        for m in range(3):
            d = np.sum(prob.fields[(1, m)](xs) * xs[1] + xs[0] * prob.fields[(2, m)](xs), axis=1)
            np.testing.assert_allclose(d, 0, atol=1e-14)

    def test_unknown(self):
        with pytest.raises(KeyError):
            builtin_problem("lorenz")


class TestStep:
    def test_leapfrog_without_noise(self):
        prob = builtin_problem("synchrotron", omega=1.3, lam=0.0)
        p0, x0, h = 0.4, 1.1, 0.2
        got = step(builtin("stormer_verlet"), prob, [np.array([p0]), np.array([x0])], h,
                   _inc([0.37]))
        f = lambda x: -1.69 * math.sin(x)  # noqa: E731
        x_half = x0 + h / 2 * p0
        p1 = p0 + h * f(x_half)
        x1 = x_half + h / 2 * p1
        assert got[0][0] == pytest.approx(p1, abs=1e-15)
        assert got[1][0] == pytest.approx(x1, abs=1e-15)

    def test_degenerate_langevin(self):
        prob = builtin_problem("langevin", omega=0.0, alpha=0.0, beta=0.25, partitions=2)
        rng = np.random.default_rng(5)
        R, V = rng.standard_normal((4, 1)), rng.standard_normal((4, 1))
        dW, h = rng.standard_normal((4, 1)) * 0.3, 0.09
        out = Stepper(builtin("sv_right"), prob).step([R, V], h, IncrementSample(dW, dW * 0))
        np.testing.assert_allclose(out[1], V + 0.25 * dW, atol=1e-15)
        np.testing.assert_allclose(out[0], R + h * (V + 0.25 * dW / 2), atol=1e-15)

    def test_zero_step_is_identity(self):
        prob = builtin_problem("synchrotron")
        y = [np.array([[0.3], [0.1]]), np.array([[1.0], [-2.0]])]
        out = Stepper(builtin("milstein_15"), prob).step(y, 0.0, _inc([[0.0], [0.0]]))
        for a, b in zip(out, y):
            np.testing.assert_array_equal(a, b)

    def test_builtin_pairs_are_explicit(self):
        assert Stepper(builtin("sv_right_3part"), builtin_problem("langevin")).explicit
        assert Stepper(builtin("milstein_15"), builtin_problem("synchrotron")).explicit
        assert Stepper(builtin("stormer_verlet"), builtin_problem("bilinear_skew")).explicit

    def _implicit_euler_problem(self, lam):
        prob = SdeProblem("linear", 1, 0, (1,), {(1, 0): lambda xs: lam * xs[0]},
                          (np.array([1.0]),))
        tab = constant_tableau({(1, 0): [[1]]}, {(1, 0): [1]}, Q=1, M=0, s=1)
        return prob, tab

    def test_implicit_stage_fixed_point(self):
        # Z = gamma = 1 on dX = -X/4 dt: the stage is H = X - H/4, so H = X/1.25
        prob, tab = self._implicit_euler_problem(-0.25)
        st = Stepper(tab, prob)
        assert not st.explicit
        out = st.step([np.array([[1.0]])], 0.1, IncrementSample(np.zeros((1, 0)),
                                                                np.zeros((1, 0))))
        assert out[0][0, 0] == pytest.approx(1 - 0.25 / 1.25, abs=1e-11)

    def test_divergent_stage_iteration(self):
        prob, tab = self._implicit_euler_problem(-5.0)
        with pytest.raises(SimulationError):
            Stepper(tab, prob).step([np.array([[1.0]])], 0.1,
                                    IncrementSample(np.zeros((1, 0)), np.zeros((1, 0))))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_state(self):
        prob = SdeProblem("blowup", 1, 0, (1,), {(1, 0): lambda xs: np.exp(xs[0] * 1e3)},
                          (np.array([1.0]),))
        tab = constant_tableau({(1, 0): [[0]]}, {(1, 0): [1]}, Q=1, M=0, s=1)
        with pytest.raises(SimulationError):
            Stepper(tab, prob).step([np.array([[1.0]])], 0.1,
                                    IncrementSample(np.zeros((1, 0)), np.zeros((1, 0))))


def _reference_prk(R, V, h, n, omega, alpha):
    """Hand-written deterministic partitioned scheme underlying sv_right."""
    F = lambda r, v: -omega ** 2 * r - alpha * v  # noqa: E731
    for _ in range(n):
        a1 = F(R, V)
        V2 = V + h * a1
        R_new = R + h / 2 * (V + V2)
        a2 = F(R_new, V2)
        R, V = R_new, V + h / 2 * (a1 + a2)
    return R, V


class TestDeterministicLimit:
    def test_matches_reference_prk(self):
        prob = builtin_problem("langevin", omega=1.2, alpha=0.3, partitions=2).without_noise()
        h, n = 0.05, 40
        inc = IncrementSample(np.zeros((1, n, 1)), np.zeros((1, n, 1)))
        y, _ = integrate(Stepper(builtin("sv_right"), prob), prob.initial(1), h, inc)
        R, V = _reference_prk(1.0, 0.0, h, n, 1.2, 0.3)
        assert y[0][0, 0] == pytest.approx(R, abs=1e-13)
        assert y[1][0, 0] == pytest.approx(V, abs=1e-13)

    def test_second_order_slope(self):
        prob = builtin_problem("langevin", partitions=2).without_noise()
        res = strong_study(builtin("sv_right"), prob, 1.0, dyadic_steps(0.25, 4), paths=4)
        assert res.slope == pytest.approx(2.0, abs=0.1)


class TestStudies:
    def test_reproducible_across_workers(self):
        tab, prob = builtin("milstein_15"), builtin_problem("synchrotron")
        a = strong_study(tab, prob, 1.0, dyadic_steps(0.25, 3), paths=2500, seed=9, workers=1)
        b = strong_study(tab, prob, 1.0, dyadic_steps(0.25, 3), paths=2500, seed=9, workers=3)
        assert a.errors == b.errors and a.slope == b.slope
        c = strong_study(tab, prob, 1.0, dyadic_steps(0.25, 3), paths=2500, seed=10)
        assert c.errors != a.errors

    def test_workers_from_environment(self, monkeypatch):
        tab, prob = builtin("stormer_verlet"), builtin_problem("bilinear_skew")
        a = invariant_drift(tab, prob, 1.0, 0.1, 1500, seed=1)
        monkeypatch.setenv("SPRK_WORKERS", "2")
        b = invariant_drift(tab, prob, 1.0, 0.1, 1500, seed=1)
        np.testing.assert_array_equal(a.per_path, b.per_path)

    def test_constant_functional_is_exact(self):
        res = weak_study(builtin("sv_right_3part"), builtin_problem("langevin"), 1.0,
                         dyadic_steps(0.25, 3), paths=200, f=lambda xs: np.ones(len(xs[0])))
        assert res.status == "exact" and res.errors == [0.0, 0.0, 0.0] and res.slope is None

    def test_noise_floor_refuses_slope(self):
        res = weak_study(builtin("sv_right_3part"), builtin_problem("langevin"), 1.0,
                         dyadic_steps(0.25, 3), paths=50, noise_factor=1e6)
        assert res.status == "noise_floor" and res.slope is None

    def test_weak_stormer_verlet_two_noises(self):
        prob = builtin_problem("bilinear_skew", M=2)
        res = weak_study(builtin("stormer_verlet", M=2), prob, 1.0, dyadic_steps(0.25, 4),
                         paths=4000, seed=3)
        assert res.slope == pytest.approx(1.0, abs=0.25)

    def test_study_arguments(self):
        tab, prob = builtin("sv_right_3part"), builtin_problem("langevin")
        with pytest.raises(StudyError):
            strong_study(tab, prob, 1.0, [0.1, 0.05], paths=10)
        with pytest.raises(StudyError):
            strong_study(tab, prob, 1.0, [0.1, 0.04, 0.02], paths=10)
        with pytest.raises(StudyError):
            strong_study(tab, prob, 1.0, [0.3, 0.15, 0.075], paths=10)
        with pytest.raises(StudyError):
            invariant_drift(tab, prob, 1.0, 0.1, 10)

    def test_csv_and_manifest(self):
        res = strong_study(builtin("sv_right_3part"), builtin_problem("langevin"), 1.0,
                           dyadic_steps(0.25, 3), paths=100, seed=4)
        lines = res.to_csv().splitlines()
        assert lines[0] == "h,error,stderr,paths" and len(lines) == 4
        man = res.manifest()
        assert man["seed"] == 4 and len(man["tableau_hash"]) == 16

    def test_simulate_paths_shapes(self):
        ys = simulate_paths(builtin("milstein_15"), builtin_problem("synchrotron"), 0.5, 0.125,
                            paths=1100)
        assert [y.shape for y in ys] == [(1100, 1), (1100, 1)]


class TestInvariantDrift:
    def test_qi_method_preserves_invariant(self):
        res = invariant_drift(builtin("stormer_verlet", M=2), builtin_problem("bilinear_skew", M=2),
                              2.0, 0.05, 500, seed=2)
        assert res.max_drift < 1e-10

    def test_non_qi_method_drifts(self):
        res = invariant_drift(builtin("sv_left"), builtin_problem("bilinear_skew"), 2.0, 0.05,
                              500, seed=2)
        assert res.max_drift > 1e-4

    def test_zero_fields_have_zero_drift(self):
        prob = builtin_problem("bilinear_skew", M=1, r=[0, 0], s=[0, 0])
        res = invariant_drift(builtin("sv_left"), prob, 1.0, 0.1, 50)
        assert res.max_drift == 0.0


def test_fit_slope_of_exact_power_law():
    h = [0.1, 0.05, 0.025, 0.0125]
    slope, hw = fit_slope(h, [3 * x ** 1.5 for x in h])
    assert slope == pytest.approx(1.5) and hw < 1e-6
    with pytest.raises(StudyError):
        fit_slope([0.1], [1.0])
