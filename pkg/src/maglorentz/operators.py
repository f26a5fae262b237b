"""Angular collision operators on the velocity circle and their inverses.

Every operator here is rotation invariant, hence diagonal in the angular
Fourier basis: its whole content is a real, even sequence of multipliers
``lambda_m``.  The building block is the moment

    c_j = (1/2) * integral_{-1}^{1} cos(j * deflection(b)) db,

the j-fold deflection cosine averaged over a uniform normalized impact
parameter.  Since ``cos(deflection(b)) = 2 b^2 - 1``, the integrand is the
Chebyshev polynomial T_j(2 b^2 - 1) and Gauss-Legendre quadrature of
sufficient order evaluates it exactly.

Multipliers:

* gain-only kernel K:            kappa_m = c_m
* collision operator L:          ell_m   = 2 mu (c_m - 1)
* memory operator M:             m_m     = 2 mu sum_{k>=1} w^k (c_{m(k+1)} - c_{mk})
* full operator:                 lambda_m = ell_m + m_m

with the per-period survival weight ``w = exp(-2 mu T)`` for cyclotron
period T.  The memory series realizes repeated identical deflections off
the same obstacle, one per completed period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

#: contraction bound of the gain kernel on zero-mean functions
BETA = (math.pi - 2.0) / 2.0

#: memory-series truncation guarantees a tail below this
MEMORY_TOL = 1e-14

_MAX_K_CUT = 512


class SeriesDivergenceError(RuntimeError):
    """A series inversion route refused to run: its sufficient condition fails."""


class NearSingularOperatorError(ArithmeticError):
    """A multiplier needed for inversion is numerically zero."""


def survival_weight(mu: float, period: float) -> float:
    """Probability of completing one cyclotron period without scattering."""
    if period == math.inf:
        return 0.0
    return math.exp(-2.0 * mu * period)


def default_k_cut(mu: float, period: float, tol: float = MEMORY_TOL) -> int:
    """Smallest truncation with ``survival_weight**k_cut < tol``."""
    w = survival_weight(mu, period)
    if w == 0.0:
        return 0
    k = int(math.ceil(math.log(tol) / math.log(w))) + 1
    if k > _MAX_K_CUT:
        raise ValueError(
            f"memory series needs {k} terms at mu={mu}, T={period}; the period "
            "is too short for a truncated treatment")
    return k


@lru_cache(maxsize=32)
def _legendre_rule(order: int):
    x, w = roots_legendre(order)
    return x, w


@lru_cache(maxsize=64)
def deflection_cosine_moments(j_max: int, order: int) -> np.ndarray:
    """Moments c_0..c_jmax by Gauss-Legendre quadrature on [-1, 1].

    The integrand of c_j is a polynomial of degree 2j, so the rule is exact
    whenever ``order > j_max``; the order is raised internally to guarantee
    that.
    """
    order = max(order, j_max + 8)
    x, w = _legendre_rule(order)
    # deflection(b) is odd, so cos(j*deflection) is even in b: fold to b >= 0
    theta = math.pi - 2.0 * np.arcsin(np.abs(x))
    j = np.arange(j_max + 1)
    vals = 0.5 * (np.cos(np.outer(j, theta)) @ w)
    vals[0] = 1.0
    return vals


@dataclass(frozen=True)
class AngularOperator:
    """Fourier-multiplier representation of an angular operator.

    ``multipliers[m + m_modes]`` is the eigenvalue on the harmonic
    ``exp(i m alpha)`` for m in [-m_modes, m_modes]; the sequence is real
    and even.  ``period`` is infinite for memoryless operators.
    """

    multipliers: np.ndarray
    mu: float
    period: float
    k_cut: int
    quadrature_order: int

    @property
    def m_modes(self) -> int:
        return (len(self.multipliers) - 1) // 2

    def mode(self, m: int) -> float:
        if abs(m) > self.m_modes:
            raise IndexError(f"harmonic {m} beyond truncation {self.m_modes}")
        return float(self.multipliers[m + self.m_modes])

    def fft_multipliers(self, n_grid: int) -> np.ndarray:
        """Multipliers reordered to match ``numpy.fft.fft`` output bins."""
        m = np.fft.fftfreq(n_grid, 1.0 / n_grid).astype(int)
        if np.max(np.abs(m)) > self.m_modes:
            raise ValueError(
                f"grid of {n_grid} points needs harmonics up to {n_grid // 2}, "
                f"operator holds {self.m_modes}")
        return self.multipliers[np.abs(m) + 0 + self.m_modes]

    def apply_grid(self, values: np.ndarray) -> np.ndarray:
        """Apply the operator to samples on a uniform angle grid (last axis)."""
        n = values.shape[-1]
        coeffs = np.fft.fft(values, axis=-1)
        coeffs *= self.fft_multipliers(n)
        return np.fft.ifft(coeffs, axis=-1)


def _symmetric(vals_abs_m: np.ndarray) -> np.ndarray:
    """Assemble the even sequence lambda_{-M}..lambda_{M} from m >= 0 values."""
    return np.concatenate([vals_abs_m[:0:-1], vals_abs_m])


def build_K(m_modes: int, quadrature_order: int = 256) -> AngularOperator:
    """Gain-only kernel: average of the post-collision value over impacts."""
    if quadrature_order < 32:
        raise ValueError("quadrature order below 32 is not supported")
    c = deflection_cosine_moments(m_modes, quadrature_order)
    return AngularOperator(_symmetric(c), mu=math.nan, period=math.inf,
                           k_cut=0, quadrature_order=quadrature_order)


def build_L(mu: float, m_modes: int, quadrature_order: int = 256
            ) -> AngularOperator:
    """Memoryless collision operator, total scattering rate 2 mu."""
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    c = deflection_cosine_moments(m_modes, quadrature_order)
    return AngularOperator(_symmetric(2.0 * mu * (c - 1.0)), mu=mu,
                           period=math.inf, k_cut=0,
                           quadrature_order=quadrature_order)


def memory_mode_table(mu: float, period: float, m_modes: int, k_cut: int,
                      quadrature_order: int = 256) -> np.ndarray:
    """Per-delay multiplier table of the memory operator.

    Row k-1 (k = 1..k_cut) holds, for m in [0, m_modes],
    ``2 mu w^k (c_{m(k+1)} - c_{m k})``: the contribution of the k-th
    repeated deflection.  Summing rows gives the memory multipliers; the
    delayed kinetic solver applies row k to the field one period times k in
    the past.
    """
    if k_cut == 0:
        return np.zeros((0, m_modes + 1))
    w = survival_weight(mu, period)
    c = deflection_cosine_moments(m_modes * (k_cut + 1), quadrature_order)
    m = np.arange(m_modes + 1)
    rows = np.empty((k_cut, m_modes + 1))
    for k in range(1, k_cut + 1):
        rows[k - 1] = 2.0 * mu * w ** k * (c[m * (k + 1)] - c[m * k])
    rows[:, 0] = 0.0
    return rows


def build_M(mu: float, period: float, m_modes: int, k_cut: int | None = None,
            quadrature_order: int = 256) -> AngularOperator:
    """Memory operator: repeated identical deflections, one per period."""
    if mu <= 0.0 or period <= 0.0:
        raise ValueError("mu and the period must be positive")
    if k_cut is None:
        k_cut = default_k_cut(mu, period)
    elif survival_weight(mu, period) ** max(k_cut, 1) >= MEMORY_TOL and \
            survival_weight(mu, period) > 0.0:
        raise ValueError(
            f"k_cut={k_cut} leaves a memory tail above {MEMORY_TOL:g}")
    rows = memory_mode_table(mu, period, m_modes, k_cut, quadrature_order)
    vals = rows.sum(axis=0) if len(rows) else np.zeros(m_modes + 1)
    return AngularOperator(_symmetric(vals), mu=mu, period=period,
                           k_cut=k_cut, quadrature_order=quadrature_order)


def build_LG(mu: float, period: float, m_modes: int, k_cut: int | None = None,
             quadrature_order: int = 256) -> AngularOperator:
    """Full collision operator with memory: L + M."""
    ell = build_L(mu, m_modes, quadrature_order)
    if period == math.inf:
        return AngularOperator(ell.multipliers, mu=mu, period=math.inf,
                               k_cut=0, quadrature_order=quadrature_order)
    mem = build_M(mu, period, m_modes, k_cut, quadrature_order)
    return AngularOperator(ell.multipliers + mem.multipliers, mu=mu,
                           period=period, k_cut=mem.k_cut,
                           quadrature_order=quadrature_order)


def _check_zero_mean(g_hat_0: complex, scale: float):
    if abs(g_hat_0) > 1e-10 * max(scale, 1e-300):
        raise ValueError("input must have zero angular mean")


def invert_LG_direct(op: AngularOperator, g_hat: np.ndarray) -> np.ndarray:
    """Solve (L + M) h = g modewise for zero-mean g.

    ``g_hat`` holds harmonics -M..M in the same layout as the multipliers.
    """
    g_hat = np.asarray(g_hat)
    if len(g_hat) != len(op.multipliers):
        raise ValueError("coefficient layout must match the operator")
    mid = op.m_modes
    _check_zero_mean(g_hat[mid], float(np.max(np.abs(g_hat))))
    lam = op.multipliers.copy()
    nonzero = np.abs(lam) >= 1e-13
    nonzero[mid] = True
    if not np.all(nonzero):
        raise NearSingularOperatorError("a nonzero harmonic has a vanishing multiplier")
    h_hat = np.zeros_like(g_hat, dtype=complex)
    idx = np.arange(len(lam)) != mid
    h_hat[idx] = g_hat[idx] / lam[idx]
    return h_hat


def neumann_contraction_factor(mu: float, period: float) -> float:
    """Operator-norm bound of the fixed-point map of the direct series.

    The inversion iterates ``h <- -g/(2 mu) + (K + M/(2 mu)) h``; the bound
    on zero-mean functions is ``beta + w/(1-w) (beta + 1)`` with the
    survival weight w.  The series is guaranteed convergent when this is
    below 1.
    """
    w = survival_weight(mu, period)
    return BETA + w / (1.0 - w) * (BETA + 1.0)


def split_series_gain(mu: float, period: float) -> float:
    """Sufficient-condition bound ``|M| * |L^-1|`` for the split series."""
    w = survival_weight(mu, period)
    return (w / (1.0 - w)) * (BETA + 1.0) / (1.0 - BETA)


def _grid_series_setup(mu, period, g, quadrature_order):
    g = np.asarray(g, dtype=complex)
    n = len(g)
    m_modes = n // 2
    _check_zero_mean(np.mean(g), float(np.max(np.abs(g))))
    k_op = build_K(m_modes, quadrature_order)
    m_op = build_M(mu, period, m_modes, quadrature_order=quadrature_order) \
        if period != math.inf else None
    kf = k_op.fft_multipliers(n)
    mf = m_op.fft_multipliers(n) if m_op is not None else np.zeros(n)
    return g, n, kf, mf


def invert_LG_neumann(mu: float, period: float, g: np.ndarray,
                      tol: float = 1e-10, quadrature_order: int = 256,
                      max_terms: int = 100_000) -> np.ndarray:
    """Series inversion of (L + M) h = g on a uniform angle grid.

    Iterates the fixed-point form ``h = -g/(2 mu) + (K + M/(2 mu)) h`` and
    sums partial terms until the newest term norm drops below ``tol``.
    Refuses when the contraction bound is not below 1.
    """
    q = neumann_contraction_factor(mu, period)
    if q >= 1.0:
        raise SeriesDivergenceError(
            f"contraction factor {q:.6f} >= 1: series not guaranteed convergent "
            f"(period {period:g} at or below the inversion threshold)")
    g, n, kf, mf = _grid_series_setup(mu, period, g, quadrature_order)
    step = kf + mf / (2.0 * mu)
    term = np.fft.fft(g)
    total = term.copy()
    scale = float(np.max(np.abs(g))) or 1.0
    for _ in range(max_terms):
        term = term * step
        total += term
        if np.max(np.abs(np.fft.ifft(term))) < tol * scale:
            break
    else:
        raise SeriesDivergenceError("series did not settle within max_terms")
    return np.fft.ifft(total) * (-1.0 / (2.0 * mu))


def invert_split_series(mu: float, period: float, g: np.ndarray,
                        tol: float = 1e-10, quadrature_order: int = 256,
                        max_terms: int = 100_000) -> np.ndarray:
    """Inversion via ``h = sum_k L^-1 [M (-L)^-1]^k g`` on an angle grid.

    The k = 0 truncation is the memoryless inverse; higher terms add the
    memory corrections.  Refuses when ``|M| |L^-1|`` is not below 1.
    """
    if period != math.inf:
        gain = split_series_gain(mu, period)
        if gain >= 1.0:
            raise SeriesDivergenceError(
                f"split-series bound {gain:.6f} >= 1: series not guaranteed "
                "convergent")
    g, n, kf, mf = _grid_series_setup(mu, period, g, quadrature_order)
    ell = 2.0 * mu * (kf - 1.0)
    mid_mask = np.abs(ell) < 1e-13
    inv_ell = np.where(mid_mask, 0.0, 1.0 / np.where(mid_mask, 1.0, ell))
    u = np.fft.fft(g)
    total = u * inv_ell
    scale = float(np.max(np.abs(g))) or 1.0
    for _ in range(max_terms):
        u = mf * (-inv_ell) * u
        term = inv_ell * u
        total += term
        if np.max(np.abs(np.fft.ifft(term))) < tol * scale:
            break
    else:
        raise SeriesDivergenceError("series did not settle within max_terms")
    return np.fft.ifft(total)


def diffusion_coefficient(op: AngularOperator) -> float:
    """Velocity-autocorrelation time integral via the first harmonic.

    The average of ``v . (-(L+M))^{-1} v`` over the unit circle reduces
    exactly to ``-1/lambda_1``.
    """
    lam1 = op.mode(1)
    if abs(lam1) < 1e-13:
        raise NearSingularOperatorError("first harmonic multiplier is numerically zero")
    return -1.0 / lam1


def diffusion_tensor(op: AngularOperator, n_grid: int = 512) -> np.ndarray:
    """2x2 tensor ``(1/2pi) int v_i ((-(L+M))^-1 v)_j dv`` by grid quadrature.

    Isotropy cross-check for the scalar route: the tensor is diagonal with
    equal entries ``-1/(2 lambda_1)`` and its trace equals
    ``diffusion_coefficient(op)``.
    """
    n_grid = min(n_grid, 2 * op.m_modes)
    alpha = 2.0 * math.pi * np.arange(n_grid) / n_grid
    comps = [np.cos(alpha), np.sin(alpha)]
    lam = op.fft_multipliers(n_grid)
    out = np.empty((2, 2))
    for j in range(2):
        coeffs = np.fft.fft(comps[j])
        mask = np.abs(lam) >= 1e-13
        inv = np.zeros_like(coeffs)
        inv[mask] = coeffs[mask] / (-lam[mask])
        hj = np.fft.ifft(inv).real
        for i in range(2):
            out[i, j] = float(np.mean(comps[i] * hj))
    return out


def spatial_diffusivity(op: AngularOperator) -> float:
    """Coefficient of the limiting heat equation, ``-1/(2 lambda_1)``.

    The mean squared displacement identity ``MSD(t) -> 2 D_gk t`` with the
    trace-form Green-Kubo integral ``D_gk = diffusion_coefficient(op)`` and
    the planar heat-equation convention ``MSD(t) -> 4 D_heat t`` fix
    ``D_heat = D_gk / 2``; equivalently it is either diagonal entry of
    ``diffusion_tensor``.  Use this wherever a heat profile is compared
    against kinetic or microscopic dynamics.
    """
    return 0.5 * diffusion_coefficient(op)


@dataclass(frozen=True)
class ThresholdInfo:
    """Inversion threshold of the series routes, with the stated field range.

    ``t_star`` solves ``contraction factor = 1`` at mu = 1; ``b_star`` is the
    corresponding field strength.  The stated admissible range (field below
    ``b_stated``, i.e. period above ``t_stated = 3/4``) does not coincide
    with the derived sufficient threshold; both are reported and the gap is
    left as a documented discrepancy.
    """

    t_star: float
    b_star: float
    t_stated: float
    b_stated: float

    @property
    def b_gap(self) -> float:
        return self.b_stated - self.b_star


def invertibility_threshold() -> ThresholdInfo:
    """Threshold period/field for the guaranteed series inversion (mu = 1)."""
    t_star = 0.5 * math.log(2.0 / (1.0 - BETA))
    return ThresholdInfo(
        t_star=t_star,
        b_star=2.0 * math.pi / t_star,
        t_stated=0.75,
        b_stated=8.0 * math.pi / 3.0,
    )


def diffusion_sweep(mu: float, b_values, m_modes: int = 64,
                    quadrature_order: int = 256):
    """Rows (B, T, D_direct, D_markovian_term, D_memory_sum, series_converged).

    ``D_markovian_term`` is the memoryless value 3/(8 mu); the memory sum is
    the remainder of the split series.  ``series_converged`` records whether
    the sufficient condition of the series routes holds at that field.
    """
    rows = []
    d_markov = 3.0 / (8.0 * mu)
    for b in b_values:
        b = float(b)
        period = 2.0 * math.pi / b if b > 0.0 else math.inf
        op = build_LG(mu, period, m_modes, quadrature_order=quadrature_order)
        d_direct = diffusion_coefficient(op)
        converged = (neumann_contraction_factor(mu, period) < 1.0
                     and (period == math.inf or split_series_gain(mu, period) < 1.0))
        rows.append((b, period, d_direct, d_markov, d_direct - d_markov,
                     bool(converged)))
    return rows
