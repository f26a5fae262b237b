import math

import numpy as np
import pytest

from maglorentz import operators as ops
from maglorentz.geometry import deflection_from_impact


def closed_form_moment(j: int) -> float:
    """Independent oracle: -1/(4 j^2 - 1).

    From b = sin(phi): the moment is the elementary trigonometric integral
    int_0^{pi/2} cos(j (pi - 2 phi)) cos(phi) dphi, which telescopes to
    -1/(4 j^2 - 1); test_symbolic_moments verifies this formula itself by
    exact symbolic integration.
    """
    return 1.0 if j == 0 else -1.0 / (4.0 * j * j - 1.0)


def grid_kernel_apply(mode: int, mu: float, period: float, n_grid: int = 4096,
                      n_quad: int = 2048, k_cut: int | None = None):
    """Brute-force kernel action on exp(i m alpha) over an angle grid.

    Integrates over the surface-normal angle with the projected-flux weight
    (an independent parametrization of the impact integral) and reads off
    the multiplier by Fourier transform.
    """
    alpha = 2.0 * math.pi * np.arange(n_grid) / n_grid
    f = np.exp(1j * mode * alpha)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    psi = 0.5 * math.pi * x  # normal direction relative to the velocity
    weight = 0.5 * math.pi * w * np.cos(psi)
    shift = math.pi - 2.0 * psi  # angle increment of one reflection
    if period == math.inf:
        k_terms = [0]
    else:
        if k_cut is None:
            k_cut = ops.default_k_cut(mu, period)
        k_terms = list(range(0, k_cut + 1))
    out = np.zeros_like(f)
    for k in k_terms:
        wk = math.exp(-2.0 * mu * k * period) if k else 1.0
        gain = np.exp(1j * mode * (k + 1) * shift) @ weight
        loss = np.exp(1j * mode * k * shift) @ weight
        out += mu * wk * (gain - loss) * f
    coeffs = np.fft.fft(out) / n_grid
    # multiplier = coefficient on the same harmonic
    return coeffs[mode % n_grid]


class TestMoments:
    def test_symbolic_moments(self):
        # exact symbolic integration certifies the closed form for small j
        import sympy as sp

        b = sp.Symbol("b")
        for j in range(0, 7):
            val = sp.integrate(
                sp.cos(j * (sp.pi - 2 * sp.asin(b))), (b, -1, 1)) / 2
            assert sp.simplify(
                val - sp.Rational(-1, 4 * j * j - 1 if j else -1)) == 0

    def test_closed_form_agreement(self):
        got = ops.deflection_cosine_moments(160, 256)
        for j in range(161):
            assert got[j] == pytest.approx(closed_form_moment(j), abs=5e-13)

    def test_first_moment_antiderivative(self):
        # (1/2) int (2 b^2 - 1) db over [-1, 1] = -1/3 by the antiderivative
        # (2 b^3 / 3 - b) / 2
        val = 0.5 * ((2.0 / 3.0 - 1.0) - (-2.0 / 3.0 + 1.0))
        got = ops.deflection_cosine_moments(1, 256)[1]
        assert got == pytest.approx(val, abs=1e-12)
        assert val == pytest.approx(-1.0 / 3.0, abs=1e-16)


class TestBuildK:
    def test_mass_mode(self):
        k = ops.build_K(16)
        assert k.mode(0) == 1.0

    def test_first_harmonic(self):
        k = ops.build_K(16)
        assert k.mode(1) == pytest.approx(-1.0 / 3.0, abs=1e-13)

    def test_contraction_bound(self):
        k = ops.build_K(64)
        tail = [abs(k.mode(m)) for m in range(1, 65)]
        assert max(tail) <= ops.BETA

    def test_order_validation(self):
        with pytest.raises(ValueError):
            ops.build_K(16, quadrature_order=16)


class TestBuildL:
    def test_modes(self):
        mu = 1.7
        ell = ops.build_L(mu, 32)
        assert ell.mode(0) == 0.0
        assert ell.mode(1) == pytest.approx(-8.0 * mu / 3.0, abs=1e-12)
        assert all(ell.mode(m) < 0.0 for m in range(1, 33))

    def test_even_and_real(self):
        ell = ops.build_L(1.0, 32)
        for m in range(33):
            assert ell.mode(m) == ell.mode(-m)
        assert np.isrealobj(ell.multipliers)


class TestBuildM:
    def test_mass_mode_zero(self):
        m = ops.build_M(1.0, 1.0, 16)
        assert m.mode(0) == 0.0

    def test_vanishes_without_memory(self):
        m = ops.build_M(1.0, 1e6, 16, k_cut=0)
        assert np.all(m.multipliers == 0.0)

    def test_insufficient_k_cut(self):
        with pytest.raises(ValueError, match="k_cut"):
            ops.build_M(1.0, 1.0, 16, k_cut=2)

    def test_first_memory_multiplier_against_grid_kernel(self):
        mu, period = 1.0, 1.0
        m = ops.build_M(mu, period, 16)
        ell = ops.build_L(mu, 16)
        ref = grid_kernel_apply(1, mu, period, k_cut=m.k_cut)
        assert abs(ref.imag) < 1e-10
        assert m.mode(1) + ell.mode(1) == pytest.approx(ref.real, abs=1e-10)

    def test_grid_multiplier_duality(self):
        mu, period = 1.0, 1.0
        lg = ops.build_LG(mu, period, 64)
        for mode in (1, 2, 3, 5, 9, 17, 33, 64):
            ref = grid_kernel_apply(mode, mu, period, k_cut=lg.k_cut)
            assert abs(ref.imag) < 1e-10
            assert lg.mode(mode) == pytest.approx(ref.real, abs=1e-10)


class TestPositivity:
    def test_negative_definite_on_zero_mean(self):
        ell = ops.build_L(1.0, 128)
        rng = np.random.default_rng(11)
        n = 256
        for _ in range(1000):
            g = rng.normal(size=n)
            g -= g.mean()
            lg = ell.apply_grid(g).real
            assert float(g @ lg) < 0.0


class TestDirectInversion:
    def test_zero_in_zero_out(self):
        lg = ops.build_LG(1.0, 1.0, 16)
        g = np.zeros(33)
        assert np.all(ops.invert_LG_direct(lg, g) == 0.0)

    def test_memoryless_first_harmonic(self):
        mu = 1.0
        lg = ops.build_LG(mu, math.inf, 16)
        g = np.zeros(33)
        g[17] = 1.0  # m = +1
        h = ops.invert_LG_direct(lg, g)
        assert h[17] == pytest.approx(-3.0 / (8.0 * mu), abs=1e-12)

    def test_roundtrip(self):
        lg = ops.build_LG(1.3, 0.9, 32)
        rng = np.random.default_rng(2)
        g = rng.normal(size=65) + 1j * rng.normal(size=65)
        g[32] = 0.0
        h = ops.invert_LG_direct(lg, g)
        back = h * lg.multipliers
        assert np.max(np.abs(back - g)) < 1e-12

    def test_mean_rejected(self):
        lg = ops.build_LG(1.0, 1.0, 8)
        g = np.ones(17)
        with pytest.raises(ValueError):
            ops.invert_LG_direct(lg, g)


def random_zero_mean(rng, n):
    g = rng.normal(size=n)
    coeffs = np.fft.fft(g)
    coeffs[0] = 0.0
    return np.fft.ifft(coeffs).real


class TestSeriesRoutes:
    def test_neumann_zero(self):
        out = ops.invert_LG_neumann(1.0, 1.0, np.zeros(64))
        assert np.all(out == 0.0)

    def test_routes_match_direct(self):
        mu, period = 1.0, 1.0
        rng = np.random.default_rng(9)
        lg = ops.build_LG(mu, period, 32)
        lam = lg.fft_multipliers(64)
        for _ in range(20):
            g = random_zero_mean(rng, 64)
            coeffs = np.fft.fft(g)
            direct = np.fft.ifft(np.where(np.abs(lam) < 1e-13, 0.0, coeffs / np.where(np.abs(lam) < 1e-13, 1.0, lam)))
            neumann = ops.invert_LG_neumann(mu, period, g, tol=1e-10)
            split = ops.invert_split_series(mu, period, g, tol=1e-10)
            assert np.max(np.abs(neumann - direct)) < 1e-8
            assert np.max(np.abs(split - direct)) < 1e-8

    def test_contraction_factor_at_threshold(self):
        info = ops.invertibility_threshold()
        q = ops.neumann_contraction_factor(1.0, info.t_star)
        assert abs(q - 1.0) <= 1e-12

    def test_refusal_below_threshold(self):
        info = ops.invertibility_threshold()
        bad_period = info.t_star * 0.98
        with pytest.raises(ops.SeriesDivergenceError):
            ops.invert_LG_neumann(1.0, bad_period, random_zero_mean(
                np.random.default_rng(0), 32))

    def test_split_single_term_without_memory(self):
        mu = 2.0
        g = random_zero_mean(np.random.default_rng(1), 32)
        got = ops.invert_split_series(mu, math.inf, g, tol=1e-12)
        ell = ops.build_L(mu, 16)
        lam = ell.fft_multipliers(32)
        ref = np.fft.ifft(np.where(lam == 0.0, 0.0, np.fft.fft(g) /
                                   np.where(lam == 0.0, 1.0, lam)))
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_split_refusal(self):
        with pytest.raises(ops.SeriesDivergenceError):
            ops.invert_split_series(1.0, 0.2, random_zero_mean(
                np.random.default_rng(0), 32))


class TestDiffusion:
    def test_memoryless_value(self):
        for mu in (0.5, 1.0, 2.0):
            lg = ops.build_LG(mu, math.inf, 16)
            assert ops.diffusion_coefficient(lg) == pytest.approx(
                3.0 / (8.0 * mu), abs=1e-10)

    def test_long_period_tail(self):
        # survival weight below 1e-7 leaves the memoryless value within 1e-6
        mu = 1.0
        period = -math.log(1e-7) / (2 * mu) * 1.001
        lg = ops.build_LG(mu, period, 16)
        assert abs(ops.diffusion_coefficient(lg) - 0.375) < 1e-6

    def test_isotropy(self):
        lg = ops.build_LG(1.0, 1.0, 32)
        tens = ops.diffusion_tensor(lg)
        d = ops.diffusion_coefficient(lg)
        assert tens[0, 0] == pytest.approx(tens[1, 1], abs=1e-12)
        assert abs(tens[0, 1]) < 1e-12 and abs(tens[1, 0]) < 1e-12
        assert tens[0, 0] + tens[1, 1] == pytest.approx(d, abs=1e-12)
        assert ops.spatial_diffusivity(lg) == pytest.approx(tens[0, 0], abs=1e-12)

    def test_memory_raises_diffusion(self):
        # replayed deflections keep some velocity coherence: D grows with memory
        d0 = ops.diffusion_coefficient(ops.build_LG(1.0, math.inf, 16))
        d1 = ops.diffusion_coefficient(ops.build_LG(1.0, 1.0, 16))
        assert d1 > d0

    def test_sweep_rows(self):
        # B = 8.3 sits between the derived series threshold (about 8.165)
        # and the stated admissible range boundary 8*pi/3 (about 8.378)
        rows = ops.diffusion_sweep(1.0, [0.0, 1.0, 8.0, 8.3], m_modes=32)
        b, period, d_direct, d_markov, d_mem, converged = rows[0]
        assert b == 0.0 and period == math.inf
        assert d_direct == pytest.approx(0.375, abs=1e-12)
        assert d_mem == pytest.approx(0.0, abs=1e-12)
        assert converged
        assert rows[1][2] > 0.375  # memory contribution at B = 1
        assert rows[2][5]  # B = 8 still inside the series threshold
        assert not rows[3][5]  # B = 8.3 beyond it; direct route still works
        assert rows[3][2] > 0.375
        assert all(r[3] == pytest.approx(0.375) for r in rows)


class TestThreshold:
    def test_values(self):
        info = ops.invertibility_threshold()
        assert ops.BETA == pytest.approx((math.pi - 2.0) / 2.0, abs=1e-15)
        assert info.t_star == pytest.approx(
            0.5 * math.log(2.0 / (1.0 - ops.BETA)), abs=1e-15)
        assert info.t_star > 0.75
        assert info.b_star == pytest.approx(2.0 * math.pi / info.t_star, abs=1e-12)
        assert info.b_star < info.b_stated
        assert info.b_stated == pytest.approx(8.0 * math.pi / 3.0, abs=1e-15)
        assert info.b_gap > 0.2
