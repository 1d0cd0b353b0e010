import numpy as np
import pytest

from kitecycle import autodiff as ad


def fd_gradient(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    g = np.zeros(z.size)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2.0 * h)
    return g


def fd_jacobian(g, z, m, h=1e-6):
    z = np.asarray(z, dtype=float)
    jac = np.zeros((m, z.size))
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        jac[:, i] = (np.atleast_1d(g(zp)) - np.atleast_1d(g(zm))) / (2.0 * h)
    return jac


class TestDualArithmetic:
    def test_sin_at_zero(self):
        assert ad.gradient(lambda z: ad.sin(z[0]), np.array([0.0]))[0] == 1.0

    def test_product_rule(self):
        g = ad.gradient(lambda z: z[0] * z[1], np.array([3.0, 4.0]))
        assert g == pytest.approx([4.0, 3.0], abs=1e-14)

    def test_quotient_and_chain(self):
        def f(z):
            return ad.exp(ad.sin(z[0]) / (1.0 + z[1] * z[1]))
        z = np.array([0.7, -0.3])
        assert ad.gradient(f, z) == pytest.approx(fd_gradient(f, z), rel=1e-7)

    def test_power_and_log(self):
        def f(z):
            return ad.log(z[0]) * z[1] ** 2.5 + ad.sqrt(z[0] * z[1])
        z = np.array([1.7, 2.3])
        assert ad.gradient(f, z) == pytest.approx(fd_gradient(f, z), rel=1e-7)

    def test_tan_rsub_rdiv(self):
        def f(z):
            return 2.0 / z[0] - ad.tan(z[1]) + (1.0 - z[0])
        z = np.array([0.9, 0.4])
        assert ad.gradient(f, z) == pytest.approx(fd_gradient(f, z), rel=1e-7)

    def test_linearity(self):
        def f(z):
            return ad.sin(z[0]) * z[1]

        def g(z):
            return ad.cos(z[1]) + z[0] ** 2
        z = np.array([0.3, 1.1])
        combo = ad.gradient(lambda y: 2.5 * f(y) + 0.5 * g(y), z)
        parts = 2.5 * ad.gradient(f, z) + 0.5 * ad.gradient(g, z)
        assert combo == pytest.approx(parts, abs=1e-15)

    def test_determinism_bit_identical(self):
        def f(z):
            return ad.exp(z[0]) * ad.sin(z[1]) + z[0] / z[1]
        z = np.array([0.456, 1.789])
        g1, g2 = ad.gradient(f, z), ad.gradient(f, z)
        assert np.array_equal(g1, g2)

    def test_unsupported_primitive_raises(self):
        with pytest.raises(TypeError):
            ad.gradient(lambda z: np.sin(z), np.array([0.5]))

    def test_batched_shapes(self):
        z = ad.seed(np.arange(6.0), np.eye(6))
        m = z.reshape(3, 2)
        col = m[:, 1]
        assert col.val.shape == (3,) and col.dot.shape == (3, 6)
        s = ad.asum(col * col)
        assert s.dot.shape == (6,)


class TestSmoothedPrimitives:
    def test_smooth_pos_exact_outside_blend(self):
        assert ad.smooth_pos(5.0, 1.0) == 5.0
        assert ad.smooth_pos(-5.0, 1.0) == 0.0
        assert ad.smooth_pos(0.0, 1.0) == pytest.approx(0.25)

    def test_smooth_pos_is_c1(self):
        # derivative continuous across the blend edges
        def f(z):
            return ad.smooth_pos(z[0], 1.0)
        for x in (-1.0, -0.5, 0.0, 0.5, 1.0):
            g = ad.gradient(f, np.array([x]))
            assert g == pytest.approx(fd_gradient(f, np.array([x])), abs=1e-6)

    def test_smooth_clamp(self):
        assert ad.smooth_clamp(5.0, 0.0, 1.0, 0.01) == pytest.approx(1.0)
        assert ad.smooth_clamp(-5.0, 0.0, 1.0, 0.01) == pytest.approx(0.0)
        assert ad.smooth_clamp(0.5, 0.0, 1.0, 0.01) == pytest.approx(0.5)

    def test_smooth_max_min(self):
        assert ad.smooth_max(2.0, 7.0, 0.1) == pytest.approx(7.0)
        assert ad.smooth_min(2.0, 7.0, 0.1) == pytest.approx(2.0)


class TestJacobian:
    def test_identity(self):
        pattern = ad.SparsityPattern(np.arange(4), np.arange(4), (4, 4))
        jac = ad.jacobian(lambda z: z, np.arange(4.0), pattern)
        assert np.allclose(jac.toarray(), np.eye(4))

    def test_compressed_matches_dense_fd(self):
        # banded callback: rows couple neighboring entries only
        def g(z):
            return z[1:] * z[:-1] + ad.sin(z[:-1])
        n = 12
        rows = np.repeat(np.arange(n - 1), 2)
        cols = np.ravel(np.column_stack([np.arange(n - 1), np.arange(1, n)]))
        pattern = ad.SparsityPattern(rows, cols, (n - 1, n))
        colors, k = pattern.column_colors()
        assert k <= 3  # banded coloring stays narrow regardless of n
        z = np.linspace(0.5, 2.0, n)
        jac = ad.jacobian(g, z, pattern).toarray()
        ref = fd_jacobian(lambda y: y[1:] * y[:-1] + np.sin(y[:-1]), z, n - 1)
        assert jac == pytest.approx(ref, rel=1e-7, abs=1e-9)

    def test_pattern_violation_detected(self):
        pattern = ad.SparsityPattern([0], [0], (1, 2))  # misses dependence on z1
        with pytest.raises(ad.PatternViolationError):
            ad.jacobian(lambda z: ad.concat([z[0] * z[1]]), np.array([1.0, 2.0]),
                        pattern, check=True)

    def test_superset_pattern_allowed(self):
        pattern = ad.SparsityPattern([0, 0], [0, 1], (1, 2))
        jac = ad.jacobian(lambda z: ad.concat([3.0 * z[0]]), np.array([1.0, 2.0]),
                          pattern, check=True)
        assert jac.toarray() == pytest.approx(np.array([[3.0, 0.0]]))


class TestModelDerivatives:
    """AD vs central finite differences across the physical model."""

    def test_flow_and_rates_at_random_feasible_points(self):
        from kitecycle.kite import SystemParams, state_rates
        p = SystemParams()
        rng = np.random.default_rng(42)
        n_pts = 100
        pts = np.column_stack([
            rng.uniform(210, 590, n_pts),      # r
            rng.uniform(0.25, 1.3, n_pts),     # beta
            rng.uniform(-1.0, 1.0, n_pts),     # phi
            rng.uniform(-3.0, 3.0, n_pts),     # psi
            rng.uniform(0.02, 0.98, n_pts),    # alpha
            rng.uniform(-0.9, 0.9, n_pts),     # u_steer
            rng.uniform(-5.5, 7.5, n_pts),     # v_reel
            rng.uniform(-0.18, 0.18, n_pts),   # u_trim
        ])

        def wrap(z):
            rates = state_rates(p, z[0], z[1], z[2], z[3], z[4], z[5], z[6], z[7])
            return ad.concat(list(rates))

        worst = 0.0
        for row in pts:
            jac = ad.jacobian(wrap, row, ad.SparsityPattern.dense(5, 8)).toarray()
            ref = fd_jacobian(lambda z: np.array(
                state_rates(p, z[0], z[1], z[2], z[3], z[4], z[5], z[6], z[7])),
                row, 5)
            denom = np.maximum(np.abs(ref), 1.0)
            worst = max(worst, np.abs(jac - ref).__truediv__(denom).max())
        assert worst < 1e-6
