import numpy as np
import pytest

from staghmc import DimensionlessParams, InputSignal, TimeSeriesData, ValidationError
from staghmc.lattice import (
    MassConfig,
    PolymerState,
    build_layout,
    initial_state,
    load_state,
    save_state,
    staging_adjoint,
    staging_forward,
    staging_inverse,
)

# layouts covering N = 2, 11, 101, 301 plus a j = 1 degenerate case
LAYOUTS = [
    build_layout(1, 1, 5.0),
    build_layout(2, 5, 833.0),
    build_layout(10, 10, 120.0),
    build_layout(10, 30, 833.0),
    build_layout(5, 1, 7.0),
]


def _forward_literal(q, layout):
    """Direct transcription of the staging definition, one bead at a time."""
    u = q.copy()
    for s in range(layout.n):
        for k in range(2, layout.j + 1):  # 1-based staging order
            g = s * layout.j + k - 1
            qstar = ((k - 1) * q[g + 1] + q[s * layout.j]) / k
            u[g] = q[g] - qstar
    return u


def _inverse_literal(u, layout):
    """Explicit summation solution of the backward recursion."""
    q = u.copy()
    j = layout.j
    for s in range(layout.n):
        for k in range(2, j + 1):
            g = s * layout.j + k - 1
            acc = 0.0
            for l in range(k, j + 2):
                acc += ((k - 1) / (l - 1)) * u[s * j + l - 1]
            q[g] = acc + ((j - k + 1) / j) * u[s * j]
    return q


class TestLayout:
    def test_reference_layout(self):
        lay = build_layout(10, 30, 833.0)
        assert lay.N == 301
        assert lay.dt == pytest.approx(833.0 / 300.0, rel=1e-15)
        assert lay.measurement_index(1) == 1
        assert lay.measurement_index(2) == 31
        assert lay.measurement_index(11) == 301
        np.testing.assert_array_equal(lay.boundary_indices, np.arange(11) * 30)
        assert lay.staging_mask.sum() == 301 - 11
        np.testing.assert_array_equal(lay.staging_k[:29], np.arange(2, 31))

    def test_validation(self):
        with pytest.raises(ValidationError):
            build_layout(0, 30, 833.0)
        with pytest.raises(ValidationError):
            build_layout(10, -1, 833.0)
        with pytest.raises(ValidationError):
            build_layout(10, 30, 0.0)
        with pytest.raises(ValidationError):
            build_layout(2, 2, 1.0).measurement_index(4)


class TestStagingTransform:
    @pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: f"n{l.n}j{l.j}")
    def test_round_trip(self, layout):
        rng = np.random.default_rng(layout.N)
        for _ in range(5):
            q = rng.normal(0, 3, layout.N)
            u = staging_forward(q, layout)
            np.testing.assert_allclose(staging_inverse(u, layout), q, rtol=0, atol=1e-12)
            v = rng.normal(0, 3, layout.N)
            np.testing.assert_allclose(
                staging_forward(staging_inverse(v, layout), layout), v, rtol=0, atol=1e-12
            )

    @pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: f"n{l.n}j{l.j}")
    def test_matches_literal_formulas(self, layout):
        rng = np.random.default_rng(layout.N + 1)
        q = rng.normal(0, 2, layout.N)
        np.testing.assert_allclose(
            staging_forward(q, layout), _forward_literal(q, layout), rtol=0, atol=1e-12
        )
        u = rng.normal(0, 2, layout.N)
        np.testing.assert_allclose(
            staging_inverse(u, layout), _inverse_literal(u, layout), rtol=0, atol=1e-12
        )

    def test_boundaries_untouched(self):
        layout = build_layout(3, 7, 10.0)
        rng = np.random.default_rng(0)
        q = rng.normal(size=layout.N)
        u = staging_forward(q, layout)
        b = layout.boundary_indices
        np.testing.assert_array_equal(u[b], q[b])
        np.testing.assert_array_equal(staging_inverse(u, layout)[b], u[b])

    def test_linear_path_has_zero_staging(self):
        layout = build_layout(4, 6, 20.0)
        # piecewise-linear in bead index between arbitrary boundary values
        rng = np.random.default_rng(5)
        vals = rng.normal(0, 2, layout.n + 1)
        q = np.interp(np.arange(layout.N), layout.boundary_indices, vals)
        u = staging_forward(q, layout)
        np.testing.assert_allclose(u[layout.staging_mask], 0.0, atol=1e-13)

    def test_harmonic_energy_identity(self):
        # the staging map must diagonalize the nearest-neighbour spring term
        for layout in LAYOUTS:
            rng = np.random.default_rng(layout.N + 2)
            q = rng.normal(0, 2, layout.N)
            u = staging_forward(q, layout)
            T, dt, j = layout.T, layout.dt, layout.j
            lhs = (T / (2 * dt)) * np.sum(np.diff(q) ** 2)
            ub = u[layout.boundary_indices]
            rhs = (T / 2) * np.sum(np.diff(ub) ** 2) / (j * dt)
            k = layout.staging_k.astype(float)
            if k.size:
                rhs += (T / 2) * np.sum(k / ((k - 1) * dt) * u[layout.staging_mask] ** 2)
            assert rhs == pytest.approx(lhs, rel=1e-10)


class TestStagingAdjoint:
    def test_matches_dense_transpose(self):
        layout = build_layout(2, 5, 11.0)  # N = 11
        dense = np.zeros((layout.N, layout.N))
        for i in range(layout.N):
            e = np.zeros(layout.N)
            e[i] = 1.0
            dense[:, i] = staging_inverse(e, layout)
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = rng.normal(size=layout.N)
            np.testing.assert_allclose(
                staging_adjoint(g, layout), dense.T @ g, rtol=0, atol=1e-12
            )

    @pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: f"n{l.n}j{l.j}")
    def test_bilinear_identity(self, layout):
        rng = np.random.default_rng(layout.N + 3)
        for _ in range(5):
            u = rng.normal(size=layout.N)
            g = rng.normal(size=layout.N)
            lhs = float(g @ staging_inverse(u, layout))
            rhs = float(staging_adjoint(g, layout) @ u)
            assert rhs == pytest.approx(lhs, rel=1e-12, abs=1e-12)

    def test_chain_rule_against_fd(self):
        # scalar phi(q) = sum sin(q); d phi/du must match finite differences
        layout = build_layout(3, 4, 9.0)
        rng = np.random.default_rng(8)
        u = rng.normal(size=layout.N)
        direction = rng.normal(size=layout.N)
        direction /= np.linalg.norm(direction)
        g_u = staging_adjoint(np.cos(staging_inverse(u, layout)), layout)
        h = 1e-6
        fd = (
            np.sum(np.sin(staging_inverse(u + h * direction, layout)))
            - np.sum(np.sin(staging_inverse(u - h * direction, layout)))
        ) / (2 * h)
        assert float(g_u @ direction) == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestState:
    def test_mass_validation(self):
        with pytest.raises(ValidationError):
            MassConfig(M=0.0, m_prime=130, m_alpha=(150, 150))
        with pytest.raises(ValidationError):
            MassConfig(M=720, m_prime=130, m_alpha=(150,))
        cfg = MassConfig(M=720, m_prime=130, m_alpha=(150, 150))
        assert cfg.m_alpha == (150.0, 150.0)

    def test_state_validation(self):
        with pytest.raises(ValidationError):
            PolymerState(u=np.zeros(5), theta=np.zeros(2), p=np.zeros(4), pi=np.zeros(2))
        with pytest.raises(ValidationError):
            PolymerState(u=np.zeros(5), theta=np.zeros(3), p=np.zeros(5), pi=np.zeros(2))

    def test_initial_state(self):
        layout = build_layout(10, 30, 833.0)
        signal = InputSignal.sinusoid(1.0, 0.01, 0.1)
        times = np.linspace(0, 833, 11)
        rng = np.random.default_rng(2)
        data = TimeSeriesData(times=times, values=rng.uniform(0.2, 3.0, 11))
        theta0 = DimensionlessParams(beta=1.4430869689661812, gamma=0.5)
        state = initial_state(data, signal, theta0, layout)
        want = np.log(data.values / signal.value(times)) / theta0.beta
        np.testing.assert_allclose(state.u[layout.boundary_indices], want, rtol=1e-14)
        assert np.all(state.u[layout.staging_mask] == 0.0)
        assert np.all(state.p == 0.0) and np.all(state.pi == 0.0)
        assert state.beta == theta0.beta and state.gamma == 0.5

    def test_initial_state_rejects_mismatch(self):
        layout = build_layout(9, 30, 833.0)
        signal = InputSignal.constant(1.0)
        data = TimeSeriesData(times=np.linspace(0, 833, 11), values=np.ones(11))
        with pytest.raises(ValidationError):
            initial_state(data, signal, DimensionlessParams(1.0, 1.0), layout)

    def test_snapshot_round_trip(self, tmp_path):
        layout = build_layout(3, 5, 21.0)
        rng = np.random.default_rng(4)
        state = PolymerState(
            u=rng.normal(size=layout.N),
            theta=np.array([1.3, 0.4]),
            p=rng.normal(size=layout.N),
            pi=np.array([0.2, -0.7]),
        )
        f = tmp_path / "snap.csv"
        save_state(state, layout, f)
        back, lay2 = load_state(f)
        assert (lay2.n, lay2.j, lay2.T) == (3, 5, 21.0)
        np.testing.assert_array_equal(back.u, state.u)
        np.testing.assert_array_equal(back.p, state.p)
        np.testing.assert_array_equal(back.theta, state.theta)
        np.testing.assert_array_equal(back.pi, state.pi)

    def test_snapshot_detects_corruption(self, tmp_path):
        layout = build_layout(2, 4, 8.0)
        state = PolymerState(
            u=np.arange(layout.N, dtype=float),
            theta=np.array([1.0, 1.0]),
            p=np.zeros(layout.N),
            pi=np.zeros(2),
        )
        f = tmp_path / "snap.csv"
        save_state(state, layout, f)
        lines = f.read_text().splitlines()
        parts = lines[4].split(",")
        parts[2] = str(float(parts[2]) + 1.0)  # tamper with the q column
        lines[4] = ",".join(parts)
        f.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError):
            load_state(f)
