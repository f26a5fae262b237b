"""Lazily generated Poisson field of disk obstacles on the unbounded plane.

The field is deterministic: the obstacle list of every grid cell is a pure
function of (master seed, cell index), drawn from a counter-based random
stream.  Trajectories of unbounded extent therefore see one consistent
infinite environment without it ever being stored, and concurrent readers
need no coordination.

Obstacles may overlap each other; the underlying measure is pure Poisson
with no hard-core thinning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _rng

_EMPTY_POINTS = np.empty((0, 2))
_EMPTY_IDS = np.empty(0, dtype=np.int64)

#: packed obstacle ids: 20-bit offset cell coordinates plus a 20-bit index
_ID_OFFSET = 1 << 19


class RegimeWarning(UserWarning):
    """The requested parameters leave the dilute scaling regime."""


@dataclass(frozen=True)
class ScalingParams:
    """Physical parameters of one scaling point.

    ``mu_eff = eta * mu / eps`` is the obstacle intensity actually used to
    draw the field.  ``larmor_radius`` and ``t_larmor`` are the cyclotron
    radius 1/B and period 2*pi/B of the unit-speed particle (infinite when
    B = 0).
    """

    eps: float
    mu: float
    eta: float
    mu_eff: float
    b_magnitude: float
    larmor_radius: float
    t_larmor: float

    @property
    def dilute_number(self) -> float:
        """mu_eff * eps^2; must vanish for a dilute gas."""
        return self.mu_eff * self.eps ** 2

    @property
    def grad_number(self) -> float:
        """mu_eff * eps; must diverge beyond the low-density baseline."""
        return self.mu_eff * self.eps

    @property
    def error_number(self) -> float:
        """eps^(1/2) * eta^5; controls the kinetic error at unit time."""
        return math.sqrt(self.eps) * self.eta ** 5


def scaling_from(eps: float, mu: float, eta: float, b_magnitude: float = 0.0
                 ) -> ScalingParams:
    """Build scaling parameters and warn when the regime checks fail."""
    if not (eps > 0.0 and mu > 0.0):
        raise ValueError("eps and mu must be positive")
    if eta < 1.0:
        raise ValueError("eta must be at least 1 (no divergence slower than constant)")
    if b_magnitude < 0.0:
        raise ValueError("field magnitude must be nonnegative")
    mu_eff = eta * mu / eps
    if b_magnitude > 0.0:
        r = 1.0 / b_magnitude
        t_larmor = 2.0 * math.pi / b_magnitude
    else:
        r = math.inf
        t_larmor = math.inf
    params = ScalingParams(eps, mu, eta, mu_eff, b_magnitude, r, t_larmor)
    if params.dilute_number > 0.1:
        warnings.warn(
            f"mu_eff*eps^2 = {params.dilute_number:.3g} > 0.1: gas is not dilute",
            RegimeWarning, stacklevel=2)
    if params.grad_number < 1.0:
        warnings.warn(
            f"mu_eff*eps = {params.grad_number:.3g} < 1: below the low-density baseline",
            RegimeWarning, stacklevel=2)
    if params.error_number > 1.0:
        warnings.warn(
            f"eps^(1/2)*eta^5 = {params.error_number:.3g} > 1: kinetic error bound "
            "exceeds unity at unit time", RegimeWarning, stacklevel=2)
    return params


def default_cell_size(params: ScalingParams) -> float:
    """Grid pitch: one orbit fits in a one-ring neighborhood when B > 0."""
    if params.b_magnitude > 0.0:
        return max(2.0 * (params.larmor_radius + params.eps), 10.0 * params.eps)
    return 10.0 * params.eps


def pack_obstacle_id(cell_x: int, cell_y: int, index: int) -> int:
    if not (-_ID_OFFSET <= cell_x < _ID_OFFSET and -_ID_OFFSET <= cell_y < _ID_OFFSET):
        raise ValueError("cell index outside the addressable range")
    return ((cell_x + _ID_OFFSET) << 40) | ((cell_y + _ID_OFFSET) << 20) | index


def unpack_obstacle_id(oid: int) -> tuple[int, int, int]:
    """Inverse of ``pack_obstacle_id``: (cell_x, cell_y, intra-cell index)."""
    return (int(oid >> 40) - _ID_OFFSET,
            int((oid >> 20) & 0xFFFFF) - _ID_OFFSET,
            int(oid & 0xFFFFF))


@dataclass(frozen=True)
class ObstacleField:
    """Deterministic lazy Poisson field keyed by a 64-bit master seed."""

    master_seed: int
    params: ScalingParams
    cell_size: float = field(default=0.0)

    def __post_init__(self):
        if self.cell_size <= 0.0:
            object.__setattr__(self, "cell_size", default_cell_size(self.params))
        if self.params.b_magnitude > 0.0:
            need = 2.0 * (self.params.larmor_radius + self.params.eps)
            if self.cell_size < need:
                raise ValueError(
                    f"cell_size {self.cell_size:g} too small: one orbit must fit "
                    f"in a one-ring neighborhood (needs >= {need:g})")

    def cell_points(self, cell_x: int, cell_y: int) -> np.ndarray:
        """Obstacle centers of one cell, identical on every call."""
        lam = self.params.mu_eff * self.cell_size ** 2
        if lam == 0.0:
            return _EMPTY_POINTS
        gen = _rng.generator(
            self.master_seed, _rng.STREAM_FIELD_CELL, cell_x, cell_y)
        count = int(gen.poisson(lam))
        if count == 0:
            return _EMPTY_POINTS
        pts = gen.random((count, 2))
        pts[:, 0] += cell_x
        pts[:, 1] += cell_y
        return pts * self.cell_size

    def cell_of(self, point) -> tuple[int, int]:
        return (int(math.floor(point[0] / self.cell_size)),
                int(math.floor(point[1] / self.cell_size)))


class ExplicitField:
    """Field with a fixed obstacle list; same interface as ObstacleField.

    Used for validation runs where the environment must be laid out by hand.
    """

    def __init__(self, params: ScalingParams, centers, cell_size: float = 0.0):
        self.params = params
        self.cell_size = cell_size if cell_size > 0.0 else default_cell_size(params)
        self._cells: dict[tuple[int, int], list] = {}
        for c in np.atleast_2d(np.asarray(centers, dtype=float)):
            if c.shape != (2,):
                raise ValueError("centers must be 2-vectors")
            key = self.cell_of(c)
            self._cells.setdefault(key, []).append(c)

    def cell_points(self, cell_x: int, cell_y: int) -> np.ndarray:
        pts = self._cells.get((cell_x, cell_y))
        if not pts:
            return _EMPTY_POINTS
        return np.array(pts)

    def cell_of(self, point) -> tuple[int, int]:
        return (int(math.floor(point[0] / self.cell_size)),
                int(math.floor(point[1] / self.cell_size)))


def obstacles_in_cell(field_: ObstacleField, cell: tuple[int, int]) -> np.ndarray:
    """Obstacle centers of the given cell as an (n, 2) array."""
    return field_.cell_points(int(cell[0]), int(cell[1]))


def _block_points(field_, x_lo, x_hi, y_lo, y_hi, with_ids=False):
    """Concatenated points (and packed ids) of a rectangle of cells."""
    s = field_.cell_size
    ix0 = int(math.floor(x_lo / s))
    ix1 = int(math.floor(x_hi / s))
    iy0 = int(math.floor(y_lo / s))
    iy1 = int(math.floor(y_hi / s))
    chunks = []
    ids = []
    for ix in range(ix0, ix1 + 1):
        for iy in range(iy0, iy1 + 1):
            pts = field_.cell_points(ix, iy)
            if len(pts):
                chunks.append(pts)
                if with_ids:
                    base = pack_obstacle_id(ix, iy, 0)
                    ids.append(base + np.arange(len(pts), dtype=np.int64))
    if not chunks:
        return (_EMPTY_POINTS, _EMPTY_IDS) if with_ids else _EMPTY_POINTS
    pts = np.concatenate(chunks)
    if with_ids:
        return pts, np.concatenate(ids)
    return pts


def is_admissible_start(field_, x) -> bool:
    """True when every obstacle center is strictly farther than eps from x."""
    x = np.asarray(x, dtype=float)
    eps = field_.params.eps
    pts = _block_points(field_, x[0] - eps, x[0] + eps, x[1] - eps, x[1] + eps)
    if not len(pts):
        return True
    d2 = np.min(np.sum((pts - x) ** 2, axis=1))
    return bool(d2 > eps * eps)


@dataclass(frozen=True)
class AnnulusVoidEstimate:
    estimate: float
    std_error: float
    closed_form: float


def empty_annulus_probability_mc(params: ScalingParams, center, n_samples: int,
                                 seed: int) -> AnnulusVoidEstimate:
    """Monte Carlo estimate of the empty-orbit-annulus probability.

    Each sample is an independent field realization restricted to the square
    bounding the annulus with radii (R - eps, R + eps) about ``center``; the
    estimate is the fraction of realizations with no obstacle center in the
    annulus.  The closed-form comparison value is
    ``exp(-mu_eff * 4 pi R eps)``.
    """
    if params.b_magnitude <= 0.0:
        raise ValueError("no orbit annulus without a magnetic field")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    r = params.larmor_radius
    eps = params.eps
    closed = math.exp(-params.mu_eff * 4.0 * math.pi * r * eps)
    if params.mu_eff == 0.0:
        return AnnulusVoidEstimate(1.0, 0.0, 1.0)
    center = np.asarray(center, dtype=float)
    half = r + eps
    lam_box = params.mu_eff * (2.0 * half) ** 2
    gen = _rng.generator(seed, _rng.STREAM_ANNULUS)
    void = 0
    chunk = max(1, min(n_samples, int(2e6 / max(lam_box, 1.0))))
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        counts = gen.poisson(lam_box, n)
        total = int(counts.sum())
        pts = gen.random((total, 2)) * (2.0 * half) - half
        rad = np.hypot(pts[:, 0], pts[:, 1])
        inside = (rad > r - eps) & (rad < r + eps)
        hits = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(inside, out=hits[1:])
        ends = np.cumsum(counts)
        starts = ends - counts
        void += int(np.count_nonzero(hits[ends] - hits[starts] == 0))
        done += n
    p = void / n_samples
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n_samples)
    return AnnulusVoidEstimate(p, se, closed)
