"""Circular-arc free flight and hard-disk scattering geometry.

A unit-speed charge in a uniform transverse magnetic field of magnitude B
moves counterclockwise on a circle of radius R = 1/B at angular rate B, so
arc length equals elapsed time.  The orientation convention is fixed once:
the guiding center sits 90 degrees counterclockwise from the velocity.
All downstream modules inherit it.

Sign conventions used throughout:

* the signed impact parameter of a collision is ``b = eps * cross(v, n)``
  where ``n`` is the outward surface normal at impact and ``v`` the incoming
  velocity; then the reflected velocity angle equals the incoming angle plus
  ``deflection_from_impact(b / eps)`` modulo 2*pi,
* the deflection is ``sign(b) * (pi - 2*asin(|b|))`` with the head-on value
  pinned to +pi, so ``cos(deflection) = 2*(b/eps)**2 - 1`` holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

#: |v . n| below this at an intersection counts as a grazing non-hit.
GRAZING_TOL = 1e-10

#: flight times below this are excluded when searching for the next hit,
#: so a reflection does not re-detect its own contact point.
DEPARTURE_GUARD = 1e-9


def normalize_angle(angle: float) -> float:
    """Map an angle to the half-open interval [0, 2*pi)."""
    a = math.fmod(angle, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    if a >= TWO_PI:
        a = 0.0
    return a


def unit_vector(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


@dataclass(frozen=True)
class ParticleState:
    """Position plus velocity direction of the unit-speed particle."""

    position: np.ndarray
    velocity_angle: float

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (2,) or not np.all(np.isfinite(pos)):
            raise ValueError("position must be a finite 2-vector")
        if not math.isfinite(self.velocity_angle):
            raise ValueError("velocity angle must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(
            self, "velocity_angle", normalize_angle(self.velocity_angle)
        )

    @property
    def velocity(self) -> np.ndarray:
        return unit_vector(self.velocity_angle)


@dataclass(frozen=True)
class Disk:
    """Hard-disk obstacle."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (2,) or not np.all(np.isfinite(c)):
            raise ValueError("center must be a finite 2-vector")
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class LarmorArc:
    """Counterclockwise circular arc traversed at unit speed.

    The point at swept angle ``s`` along the arc is
    ``center + radius * (cos(start_phase + s), sin(start_phase + s))`` and
    is reached after time ``radius * s``.
    """

    center: np.ndarray
    radius: float
    start_phase: float
    swept: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        if self.swept < 0.0:
            raise ValueError("swept angle must be nonnegative")
        object.__setattr__(self, "center", c)

    def point_at(self, swept: float) -> np.ndarray:
        phase = self.start_phase + swept
        return self.center + self.radius * unit_vector(phase)


@dataclass(frozen=True)
class ScatterData:
    """Impact data of one collision: normal, impact parameter, angles.

    Invariants: ``b = eps * sin(phi)``, ``|deflection| = pi - 2|phi|`` and
    ``cos(deflection) = 2 (b/eps)^2 - 1``.
    """

    impact_vector: np.ndarray
    impact_parameter: float
    incidence_angle: float
    deflection: float

    @classmethod
    def from_impact(cls, velocity_angle: float, n: np.ndarray, eps: float
                    ) -> "ScatterData":
        v = unit_vector(velocity_angle)
        n = np.asarray(n, dtype=float)
        b_norm = float(v[0] * n[1] - v[1] * n[0])
        b_norm = min(1.0, max(-1.0, b_norm))
        phi = math.asin(b_norm)
        return cls(
            impact_vector=n,
            impact_parameter=eps * b_norm,
            incidence_angle=phi,
            deflection=deflection_from_impact(b_norm),
        )


def larmor_center(state: ParticleState, b_magnitude: float) -> np.ndarray:
    """Guiding center of the cyclotron orbit through ``state``.

    Lies at distance R = 1/B from the position, 90 degrees counterclockwise
    from the velocity, so the orbit is traversed counterclockwise at angular
    rate B.
    """
    if b_magnitude <= 0.0:
        raise ValueError("no Larmor center in the straight-line regime B = 0")
    r = 1.0 / b_magnitude
    a = state.velocity_angle
    return state.position + r * np.array([-math.sin(a), math.cos(a)])


def advance_free(state: ParticleState, b_magnitude: float, tau: float
                 ) -> ParticleState:
    """Advance a collision-free flight by time ``tau``.

    For B > 0 the position rotates about the guiding center by B*tau and the
    velocity angle increases by the same amount; for B = 0 the motion is a
    straight segment.  Arc length equals tau in both cases.
    """
    if not math.isfinite(tau) or tau < 0.0:
        raise ValueError("tau must be finite and nonnegative")
    if b_magnitude == 0.0:
        return ParticleState(
            position=state.position + tau * state.velocity,
            velocity_angle=state.velocity_angle,
        )
    center = larmor_center(state, b_magnitude)
    r = 1.0 / b_magnitude
    phase = state.velocity_angle - 0.5 * math.pi + b_magnitude * tau
    return ParticleState(
        position=center + r * unit_vector(phase),
        velocity_angle=state.velocity_angle + b_magnitude * tau,
    )


def _ray_disk_entry(pos, v, disk: Disk, horizon):
    """First entry time of the ray ``pos + t v`` into ``disk``, or None."""
    d = disk.center - pos
    proj = float(d @ v)
    perp_sq = float(d @ d) - proj * proj
    disc = disk.radius * disk.radius - perp_sq
    if disc <= (disk.radius * GRAZING_TOL) ** 2:
        return None  # miss, or grazing within tolerance
    root = math.sqrt(disc)
    tau = proj - root
    if tau <= DEPARTURE_GUARD or tau > horizon:
        return None
    return tau


def first_arc_disk_hit(state: ParticleState, b_magnitude: float, disk: Disk,
                       horizon: float):
    """First impact of the free flight on ``disk`` within ``horizon``.

    Returns ``(tau, n)`` with the flight time to impact and the outward unit
    normal there, or None when the flight misses the disk.  For B > 0 the
    search covers at most one full revolution.  Grazing contacts (|v.n|
    below ``GRAZING_TOL``) and stale contacts (times below
    ``DEPARTURE_GUARD``) are treated as misses.
    """
    gap = float(np.hypot(*(state.position - disk.center)))
    if gap < disk.radius - 1e-12:
        raise ValueError("flight must start outside the disk")
    if b_magnitude == 0.0:
        tau = _ray_disk_entry(state.position, state.velocity, disk, horizon)
        if tau is None:
            return None
        n = (state.position + tau * state.velocity - disk.center)
        n = n / np.hypot(*n)
        return tau, n

    center = larmor_center(state, b_magnitude)
    r = 1.0 / b_magnitude
    rel = disk.center - center
    d = float(np.hypot(*rel))
    if abs(d - r) >= disk.radius:
        return None  # orbit circle never reaches the disk
    cos_gamma = (d * d + r * r - disk.radius * disk.radius) / (2.0 * d * r)
    gamma = math.acos(min(1.0, max(-1.0, cos_gamma)))
    phase0 = state.velocity_angle - 0.5 * math.pi
    entry_phase = math.atan2(rel[1], rel[0]) - gamma
    sweep = math.fmod(entry_phase - phase0, TWO_PI)
    if sweep < 0.0:
        sweep += TWO_PI
    tau = sweep * r
    if tau <= DEPARTURE_GUARD or tau > min(horizon, TWO_PI * r):
        return None
    hit = center + r * unit_vector(phase0 + sweep)
    n = (hit - disk.center)
    n = n / np.hypot(*n)
    v_hit = unit_vector(state.velocity_angle + sweep)
    if float(v_hit @ n) >= -GRAZING_TOL:
        return None  # tangential contact within tolerance
    return tau, n


def reflect(velocity_angle: float, n: np.ndarray) -> float:
    """Angle of the elastically reflected velocity v' = v - 2 (v.n) n.

    Applying the map twice with the same normal is the identity.
    """
    v = unit_vector(velocity_angle)
    n = np.asarray(n, dtype=float)
    vp = v - 2.0 * float(v @ n) * n
    return normalize_angle(math.atan2(vp[1], vp[0]))


def deflection_from_impact(b_norm):
    """Signed deflection angle for a normalized impact parameter in [-1, 1].

    Head-on impact (b = 0) deflects by +pi; grazing impact (|b| = 1) passes
    undeflected; in between ``|deflection| = pi - 2 asin|b|`` with the sign
    of b, so that ``cos(deflection) = 2 b^2 - 1`` exactly.  Accepts scalars
    or arrays.
    """
    b = np.asarray(b_norm, dtype=float)
    if np.any(np.abs(b) > 1.0):
        raise ValueError("normalized impact parameter must lie in [-1, 1]")
    out = np.where(
        b == 0.0, math.pi, np.sign(b) * (math.pi - 2.0 * np.arcsin(np.abs(b)))
    )
    if np.isscalar(b_norm) or getattr(b_norm, "shape", None) == ():
        return float(out)
    return out


def self_recollision_angle(delta: float, larmor_radius: float, eps: float
                           ) -> float:
    """Half-angle at the obstacle center between successive impact points.

    ``delta`` is the distance between the obstacle center and the guiding
    center; the self-recollision geometry exists only for
    ``delta`` strictly between R - eps and R + eps.
    """
    if not (larmor_radius > eps > 0.0):
        raise ValueError("requires R > eps > 0")
    if not (larmor_radius - eps < delta < larmor_radius + eps):
        raise ValueError("no self-recollision geometry for this separation")
    cos_beta = (delta * delta - larmor_radius * larmor_radius + eps * eps) / (
        2.0 * delta * eps
    )
    return math.acos(min(1.0, max(-1.0, cos_beta)))
