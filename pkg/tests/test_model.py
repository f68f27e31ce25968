import math

import numpy as np
import pytest
from scipy import stats

from staghmc import (
    DomainError,
    DimensionlessParams,
    InputSignal,
    ObservationModel,
    PhysicalParams,
    TimeSeriesData,
    TruthPath,
    ValidationError,
    equilibrium_moments,
    equilibrium_pdf,
    fine_grid,
    from_dimensionless,
    generate_observations,
    path_inverse,
    path_transform,
    rho_discrete,
    simulate_truth,
    to_dimensionless,
)

SEC4_INPUT = InputSignal.sinusoid(1.0, 0.01, 0.1)


class TestParameterMaps:
    def test_beta_frozen_values(self):
        # high-precision decimal square roots, frozen
        d = to_dimensionless(PhysicalParams(K=50, gamma=0.2, T=833))
        assert d.beta == pytest.approx(1.8253766734567416, rel=1e-14)
        d = to_dimensionless(PhysicalParams(K=200, gamma=0.5, T=833))
        assert d.beta == pytest.approx(1.4430869689661812, rel=1e-14)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p = PhysicalParams(
                K=float(rng.uniform(1, 500)),
                gamma=float(rng.uniform(0.01, 3)),
                T=float(rng.uniform(10, 2000)),
            )
            back = from_dimensionless(to_dimensionless(p), p.T)
            assert back.K == pytest.approx(p.K, rel=1e-12)
            assert back.gamma == p.gamma

    def test_positivity_validation(self):
        with pytest.raises(ValidationError):
            PhysicalParams(K=-1, gamma=0.2, T=833)
        with pytest.raises(ValidationError):
            PhysicalParams(K=50, gamma=0.0, T=833)
        with pytest.raises(ValidationError):
            DimensionlessParams(beta=1.0, gamma=-0.5)


class TestPathTransform:
    def test_round_trip(self):
        rng = np.random.default_rng(11)
        t = np.linspace(0, 833, 301)
        theta = DimensionlessParams(beta=1.8, gamma=0.2)
        q = rng.normal(0, 2, t.size)
        S = path_transform(q, t, theta, SEC4_INPUT, 833.0)
        q2 = path_inverse(S, t, theta, SEC4_INPUT, 833.0)
        np.testing.assert_allclose(q2, q, rtol=0, atol=1e-12)

    def test_scale_is_K(self):
        # T gamma / beta^2 reduces to K, so q = 0 maps onto K r(t)
        p = PhysicalParams(K=50, gamma=0.2, T=833)
        theta = to_dimensionless(p)
        t = np.array([0.0, 100.0, 500.0])
        S = path_transform(np.zeros(3), t, theta, SEC4_INPUT, p.T)
        np.testing.assert_allclose(S, p.K * SEC4_INPUT.value(t), rtol=1e-13)

    def test_inverse_rejects_nonpositive(self):
        theta = DimensionlessParams(beta=1.0, gamma=1.0)
        with pytest.raises(DomainError):
            path_inverse(np.array([1.0, -2.0]), np.array([0.0, 1.0]), theta, SEC4_INPUT, 833.0)


class TestRhoDiscrete:
    def test_constant_input_frozen_values(self):
        grid = np.linspace(0, 10, 11)
        sig = InputSignal.constant(0.7)
        rho, rhodot = rho_discrete(grid, sig, DimensionlessParams(beta=1.0, gamma=2.0))
        np.testing.assert_allclose(rho[1:], 1.0, rtol=1e-14)
        np.testing.assert_allclose(rhodot, 0.0, atol=0)
        rho, _ = rho_discrete(grid, sig, DimensionlessParams(beta=2.0, gamma=0.2))
        np.testing.assert_allclose(rho[1:], 11.0, rtol=1e-14)

    def test_matches_direct_formula(self):
        grid = np.linspace(0, 833, 301)
        theta = DimensionlessParams(beta=1.5, gamma=0.4)
        rho, rhodot = rho_discrete(grid, SEC4_INPUT, theta)
        dt = grid[1] - grid[0]
        r = SEC4_INPUT.value(grid)
        for i in [1, 2, 150, 299, 300]:
            want = 833.0 * math.log(r[i] / r[i - 1]) / (theta.beta * dt) + (
                2 + theta.gamma
            ) * theta.beta / (2 * theta.gamma)
            assert rho[i] == pytest.approx(want, rel=1e-12)
        for i in [2, 3, 157, 300]:
            assert rhodot[i] == pytest.approx((rho[i] - rho[i - 1]) / dt, rel=1e-12)
        # slot 0 is padding; the i = 2 term carries no rate of change
        assert rho[0] == 0.0 and rhodot[0] == 0.0 and rhodot[1] == 0.0


class TestEquilibrium:
    P = PhysicalParams(K=50, gamma=0.2, T=833)

    def test_moments_frozen(self):
        mean, var = equilibrium_moments(self.P, 0.6)
        assert mean == pytest.approx(30.0, rel=1e-14)
        assert var == pytest.approx(100.0, rel=1e-12)

    def test_variance_divergence_flag(self):
        _, var = equilibrium_moments(PhysicalParams(K=50, gamma=2.0, T=833), 0.6)
        assert math.isinf(var)
        _, var = equilibrium_moments(PhysicalParams(K=50, gamma=2.5, T=833), 0.6)
        assert math.isinf(var)

    def test_matches_scipy_invgamma(self):
        # shape (2+gamma)/gamma = 11, scale 2 K r0 / gamma = 300
        S = np.linspace(5, 120, 200)
        ours = equilibrium_pdf(S, self.P, 0.6)
        ref = stats.invgamma.pdf(S, a=11.0, scale=300.0)
        np.testing.assert_allclose(ours, ref, rtol=1e-12)

    def test_normalization_by_quadrature(self):
        S = np.linspace(1e-2, 2000, 400001)
        mass = np.trapezoid(equilibrium_pdf(S, self.P, 0.6), S)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_unnormalized_shape(self):
        S = np.array([10.0, 30.0, 90.0])
        raw = equilibrium_pdf(S, self.P, 0.6, normalized=False)
        want = S ** (-2 * 1.2 / 0.2) * np.exp(-2 * 50 * 0.6 / (0.2 * S))
        np.testing.assert_allclose(raw, want, rtol=1e-12)

    def test_rejects_bad_args(self):
        with pytest.raises(DomainError):
            equilibrium_pdf(np.array([-1.0]), self.P, 0.6)
        with pytest.raises(DomainError):
            equilibrium_moments(self.P, -0.6)


class TestInputSignal:
    def test_sinusoid_positivity_guard(self):
        with pytest.raises(ValidationError):
            InputSignal.sinusoid(1.0, 0.01, 0.0)
        with pytest.raises(ValidationError):
            InputSignal.sinusoid(-0.5, 0.01, 0.3)
        InputSignal.sinusoid(-0.2, 0.01, 0.3)  # min 0.1 > 0, fine

    def test_dlog_dt_matches_fd(self):
        t = np.linspace(1, 800, 57)
        h = 1e-6
        fd = (np.log(SEC4_INPUT.value(t + h)) - np.log(SEC4_INPUT.value(t - h))) / (2 * h)
        np.testing.assert_allclose(SEC4_INPUT.dlog_dt(t), fd, rtol=1e-7, atol=1e-9)

    def test_tabulated_interp_and_range(self):
        sig = InputSignal.tabulated([0.0, 1.0, 3.0], [1.0, 2.0, 1.0])
        assert sig.value(0.5) == pytest.approx(1.5)
        assert sig.value(2.0) == pytest.approx(1.5)
        np.testing.assert_allclose(sig.dlog_dt(0.5), 1.0 / 1.5)
        with pytest.raises(DomainError):
            sig.value(3.5)
        with pytest.raises(ValidationError):
            InputSignal.tabulated([0.0, 1.0], [1.0, -1.0])

    def test_csv_round_trip(self, tmp_path):
        sig = InputSignal.tabulated([0.0, 2.0, 5.0], [0.4, 0.9, 0.6])
        f = tmp_path / "input.csv"
        sig.to_csv(f)
        assert f.read_text().splitlines()[0] == "t,r"
        back = InputSignal.from_csv(f)
        np.testing.assert_array_equal(back.times, sig.times)
        np.testing.assert_array_equal(back.values, sig.values)


class TestTimeSeriesData:
    def test_validation(self):
        with pytest.raises(ValidationError):
            TimeSeriesData(times=[1.0, 2.0], values=[1.0, 1.0])  # t must start at 0
        with pytest.raises(ValidationError):
            TimeSeriesData(times=[0.0, 1.0, 2.5], values=[1.0, 1.0, 1.0])
        with pytest.raises(ValidationError):
            TimeSeriesData(times=[0.0, 1.0], values=[1.0, -0.1])

    def test_csv_round_trip_and_digest(self, tmp_path):
        data = TimeSeriesData(times=np.linspace(0, 833, 11), values=np.full(11, 0.37))
        f = tmp_path / "obs.csv"
        data.to_csv(f)
        assert f.read_text().splitlines()[0] == "t,y"
        back = TimeSeriesData.from_csv(f)
        np.testing.assert_array_equal(back.times, data.times)
        np.testing.assert_array_equal(back.values, data.values)
        assert back.digest() == data.digest()

    def test_properties(self):
        data = TimeSeriesData(times=np.linspace(0, 833, 11), values=np.ones(11))
        assert data.n_segments == 10
        assert data.horizon == 833.0


class TestSimulateTruth:
    P = PhysicalParams(K=50, gamma=0.2, T=833)

    def test_reproducible(self):
        grid = fine_grid(833, 10, 30)
        a = simulate_truth(self.P, SEC4_INPUT, grid, seed=3)
        b = simulate_truth(self.P, SEC4_INPUT, grid, seed=3)
        np.testing.assert_array_equal(a.S, b.S)
        c = simulate_truth(self.P, SEC4_INPUT, grid, seed=4)
        assert not np.array_equal(a.S, c.S)

    def test_default_start(self):
        grid = fine_grid(833, 10, 30)
        path = simulate_truth(self.P, SEC4_INPUT, grid, seed=0)
        assert path.S[0] == pytest.approx(self.P.K * SEC4_INPUT.value(0.0), rel=1e-12)
        assert path.q[0] == 0.0

    def test_small_noise_limit_matches_linear_reservoir(self):
        # gamma -> 0 removes both the noise and the gamma/2 drift correction,
        # leaving dS/dt = r(t) - S/K; oracle via integrating factor + trapezoid
        p = PhysicalParams(K=50, gamma=1e-8, T=833)
        grid = fine_grid(833, 10, 30, factor=40)
        path = simulate_truth(p, SEC4_INPUT, grid, seed=5)
        r = SEC4_INPUT.value(grid)
        growth = np.exp(grid / p.K)
        integral = np.concatenate(
            [[0.0], np.cumsum(0.5 * np.diff(grid) * (growth[1:] * r[1:] + growth[:-1] * r[:-1]))]
        )
        s_det = (path.S[0] + integral) / growth
        np.testing.assert_allclose(path.S, s_det, rtol=1e-2)

    def test_equilibrium_distribution_desk_scale(self):
        # constant input: S must relax to the inverse-gamma stationary law
        sig = InputSignal.constant(0.6)
        h, t_total = 0.5, 8e4
        grid = np.arange(0.0, t_total + h / 2, h)
        path = simulate_truth(self.P, sig, grid, seed=12)
        samples = path.S[grid > 2000][::4]
        ks = stats.kstest(samples, stats.invgamma(a=11.0, scale=300.0).cdf).statistic
        assert ks < 0.1
        assert np.mean(samples) == pytest.approx(30.0, rel=0.05)

    def test_truth_csv_round_trip(self, tmp_path):
        grid = fine_grid(833, 2, 3, factor=2)
        path = simulate_truth(self.P, SEC4_INPUT, grid, seed=1)
        f = tmp_path / "truth.csv"
        path.to_csv(f)
        assert f.read_text().splitlines()[0] == "t,S,q"
        back = TruthPath.from_csv(f)
        np.testing.assert_array_equal(back.S, path.S)
        np.testing.assert_array_equal(back.q, path.q)


class TestGenerateObservations:
    P = PhysicalParams(K=50, gamma=0.2, T=833)

    def _path(self):
        return simulate_truth(self.P, SEC4_INPUT, fine_grid(833, 10, 30), seed=9)

    def test_vanishing_noise_reads_path_exactly(self):
        path = self._path()
        obs_t = np.linspace(0, 833, 11)
        data = generate_observations(
            path, obs_t, self.P, ObservationModel(sigma=1e-300), seed=0
        )
        idx = np.arange(0, 6001, 600)
        np.testing.assert_array_equal(data.values, path.S[idx] / self.P.K)

    def test_log_residual_statistics(self):
        path = self._path()
        obs_t = np.linspace(0, 833, 11)
        sigma = 0.1
        rng = np.random.default_rng(77)
        n_rep = 10_000
        res = np.empty((n_rep, 11))
        idx = np.arange(0, 6001, 600)
        log_true = np.log(path.S[idx] / self.P.K)
        for k in range(n_rep):
            data = generate_observations(path, obs_t, self.P, ObservationModel(sigma), seed=rng)
            res[k] = np.log(data.values) - log_true
        assert abs(res.mean()) < 3 * sigma / math.sqrt(res.size)
        assert res.std() == pytest.approx(sigma, rel=0.05)

    def test_off_grid_time_rejected(self):
        path = self._path()
        with pytest.raises(ValidationError):
            generate_observations(
                path, [0.0, 83.31], self.P, ObservationModel(sigma=0.1), seed=0
            )
