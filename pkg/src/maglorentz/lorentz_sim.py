"""Event-driven simulation of the test particle among lazy Poisson obstacles.

Exact dynamics: circular-arc (or straight) free flight between events,
elastic reflection at each impact.  Obstacle queries enumerate only the
grid cells a flight leg can reach, so trajectories of unbounded extent run
against the infinite deterministic field of :mod:`maglorentz.medium`.

Event taxonomy per impact:

* fresh        - first contact with that obstacle,
* self-recollision - the immediately preceding impact hit the same obstacle
  (one more leaf of the current daisy),
* recollision  - an earlier, non-adjacent impact hit the same obstacle.

A trajectory terminates early as ``CIRCLING_FOREVER`` when its current
orbit annulus holds no obstacle center (the motion is then exactly
periodic) and as ``TRAPPED_DAISY`` when the impact parameter and impact
direction of a self-recollision streak repeat within tolerance, closing a
periodic flower.  Both outcomes keep producing exact positions for the
remaining sample times.

As a measurable stand-in for trajectory-tube interference, each leg is also
checked for near misses: passing within twice the obstacle radius of a
previously hit obstacle's center without touching it.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _rng
from .geometry import (DEPARTURE_GUARD, GRAZING_TOL, TWO_PI, ParticleState,
                       advance_free, normalize_angle, unit_vector)
from .medium import (ObstacleField, ScalingParams, is_admissible_start,
                     pack_obstacle_id, scaling_from)

#: near-miss proxy distance, in units of the obstacle radius
NEAR_MISS_FACTOR = 2.0

#: tolerance for declaring a self-recollision streak periodic
DAISY_CLOSURE_TOL = 1e-9

DEFAULT_K_MAX_LEAVES = 64
DEFAULT_MAX_EVENTS = 100_000


class ChatteringError(RuntimeError):
    """Event count exceeded the cap; the replica is aborted as pathological."""


class EventKind(enum.Enum):
    FRESH = "fresh"
    SELF_RECOLLISION = "self_recollision"
    RECOLLISION = "recollision"


class TrajectoryStatus(enum.Enum):
    COMPLETED = "completed"
    CIRCLING_FOREVER = "circling_forever"
    TRAPPED_DAISY = "trapped_daisy"


@dataclass(frozen=True)
class CollisionEvent:
    hit_time: float
    exit_time: float
    obstacle_id: int
    impact_vector: np.ndarray
    impact_parameter: float
    kind: EventKind


@dataclass(frozen=True)
class EventCounts:
    fresh: int
    self_recollisions: int
    recollisions: int
    daisy_leaf_max: int


@dataclass(frozen=True)
class TrajectoryOutcome:
    final_state: ParticleState
    elapsed: float
    status: TrajectoryStatus
    status_time: float
    events: list
    sample_times: np.ndarray
    sample_positions: np.ndarray
    near_miss_count: int


def classify_events(events) -> EventCounts:
    """Tally event kinds from the obstacle-id sequence alone."""
    fresh = selfr = recoll = 0
    seen = set()
    prev = None
    run = 0
    max_run = 0
    for ev in events:
        oid = ev.obstacle_id
        if prev is not None and oid == prev:
            selfr += 1
            run += 1
        else:
            if oid in seen:
                recoll += 1
            else:
                fresh += 1
            run = 0
        max_run = max(max_run, run)
        seen.add(oid)
        prev = oid
    leaf_max = (max_run + 1) if events else 0
    return EventCounts(fresh, selfr, recoll, leaf_max)


class _FieldView:
    """Per-trajectory cache of field cells and concatenated blocks."""

    def __init__(self, field_):
        self.field = field_
        self.cell_size = field_.cell_size
        self._cells: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._blocks: dict[tuple[int, int, int, int],
                           tuple[np.ndarray, np.ndarray]] = {}

    def cell(self, ix: int, iy: int):
        key = (ix, iy)
        got = self._cells.get(key)
        if got is None:
            pts = self.field.cell_points(ix, iy)
            base = pack_obstacle_id(ix, iy, 0)
            ids = base + np.arange(len(pts), dtype=np.int64)
            got = (pts, ids)
            self._cells[key] = got
        return got

    def block(self, x_lo, x_hi, y_lo, y_hi):
        s = self.cell_size
        key = (int(math.floor(x_lo / s)), int(math.floor(x_hi / s)),
               int(math.floor(y_lo / s)), int(math.floor(y_hi / s)))
        got = self._blocks.get(key)
        if got is None:
            pts_list, id_list = [], []
            for ix in range(key[0], key[1] + 1):
                for iy in range(key[2], key[3] + 1):
                    pts, ids = self.cell(ix, iy)
                    if len(pts):
                        pts_list.append(pts)
                        id_list.append(ids)
            if pts_list:
                got = (np.concatenate(pts_list), np.concatenate(id_list))
            else:
                got = (np.empty((0, 2)), np.empty(0, dtype=np.int64))
            self._blocks[key] = got
        return got


def _point_to_arc_distances(centers, orbit_center, radius, phase0, sweep):
    """Distance from each point to the arc swept from phase0 by sweep (CCW)."""
    rel = centers - orbit_center
    d = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - phase0, TWO_PI)
    radial = np.abs(d - radius)
    p_start = orbit_center + radius * np.array([math.cos(phase0), math.sin(phase0)])
    p_end = orbit_center + radius * np.array(
        [math.cos(phase0 + sweep), math.sin(phase0 + sweep)])
    d_start = np.hypot(*(centers - p_start).T)
    d_end = np.hypot(*(centers - p_end).T)
    endpoint = np.minimum(d_start, d_end)
    return np.where(ang <= sweep, radial, endpoint)


def _point_to_segment_distances(centers, p0, v, length):
    rel = centers - p0
    proj = np.clip(rel @ v, 0.0, length)
    closest = p0 + proj[:, None] * v
    return np.hypot(*(centers - closest).T)


class _Trajectory:
    """Mutable state of one event-driven run."""

    def __init__(self, field_, start: ParticleState, t_max: float,
                 sample_times, k_max_leaves: int, max_events: int):
        params = field_.params
        self.view = _FieldView(field_)
        self.eps = params.eps
        self.b = params.b_magnitude
        self.radius = params.larmor_radius
        self.t_max = t_max
        self.pos = start.position.copy()
        self.alpha = start.velocity_angle
        self.t = 0.0
        self.k_max = k_max_leaves
        self.max_events = max_events
        self.events: list[CollisionEvent] = []
        self.seen: set[int] = set()
        self.prev_id: int | None = None
        self.hit_centers: list[np.ndarray] = []
        self.hit_center_ids: list[int] = []
        self.run: list[dict] = []
        self.near_miss = 0
        self.status = TrajectoryStatus.COMPLETED
        self.status_time = t_max
        st = np.asarray(sample_times, dtype=float)
        if np.any(st < 0.0) or np.any(st > t_max) or np.any(np.diff(st) < 0.0):
            raise ValueError("sample times must be sorted within [0, t_max]")
        self.sample_t = st
        self.sample_pos = np.empty((len(st), 2))
        self.cursor = 0
        while self.cursor < len(st) and st[self.cursor] == 0.0:
            self.sample_pos[self.cursor] = self.pos
            self.cursor += 1

    # -- sampling -----------------------------------------------------------

    def emit_samples(self, duration: float):
        """Record sample positions falling inside the current leg."""
        hi = np.searchsorted(self.sample_t, self.t + duration, side="right")
        if hi <= self.cursor:
            return
        taus = self.sample_t[self.cursor:hi] - self.t
        if self.b == 0.0:
            v = unit_vector(self.alpha)
            self.sample_pos[self.cursor:hi] = self.pos + taus[:, None] * v
        else:
            center = self._orbit_center()
            phase = self.alpha - 0.5 * math.pi + self.b * taus
            self.sample_pos[self.cursor:hi, 0] = center[0] + self.radius * np.cos(phase)
            self.sample_pos[self.cursor:hi, 1] = center[1] + self.radius * np.sin(phase)
        self.cursor = hi

    def _orbit_center(self):
        return self.pos + self.radius * np.array(
            [-math.sin(self.alpha), math.cos(self.alpha)])

    def advance(self, duration: float):
        self.emit_samples(duration)
        state = advance_free(ParticleState(self.pos, self.alpha), self.b, duration)
        self.pos = state.position
        self.alpha = state.velocity_angle
        self.t += duration

    # -- near-miss proxy ----------------------------------------------------

    def check_near_miss(self, sweep_or_length: float, hit_id: int | None):
        if not self.hit_centers:
            return
        exclude = {hit_id, self.prev_id}
        centers = []
        for oid, c in zip(self.hit_center_ids, self.hit_centers):
            if oid not in exclude:
                centers.append(c)
        if not centers:
            return
        centers = np.asarray(centers)
        if self.b == 0.0:
            dist = _point_to_segment_distances(
                centers, self.pos, unit_vector(self.alpha), sweep_or_length)
        else:
            dist = _point_to_arc_distances(
                centers, self._orbit_center(), self.radius,
                self.alpha - 0.5 * math.pi, sweep_or_length)
        if np.any(dist <= NEAR_MISS_FACTOR * self.eps):
            self.near_miss += 1

    # -- hit searches -------------------------------------------------------

    def next_arc_hit(self):
        """(sweep, hit_id, normal, center) of the first impact, or None.

        None means the current orbit is free of obstacles (exactly periodic
        motion): the trajectory is circling forever.
        """
        center = self._orbit_center()
        r, eps = self.radius, self.eps
        pts, ids = self.view.block(center[0] - r - eps, center[0] + r + eps,
                                   center[1] - r - eps, center[1] + r + eps)
        if not len(pts):
            return None
        dx = pts[:, 0] - center[0]
        dy = pts[:, 1] - center[1]
        d_sq = dx * dx + dy * dy
        mask = (d_sq > (r - eps) ** 2) & (d_sq < (r + eps) ** 2)
        if not np.any(mask):
            return None
        cand = pts[mask]
        cand_ids = ids[mask]
        d = np.sqrt(d_sq[mask])
        rel = np.stack([dx[mask], dy[mask]], axis=1)
        cos_g = (d * d + r * r - eps * eps) / (2.0 * d * r)
        gamma = np.arccos(np.clip(cos_g, -1.0, 1.0))
        phase0 = self.alpha - 0.5 * math.pi
        sweep = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - gamma - phase0, TWO_PI)
        guard_sweep = DEPARTURE_GUARD * self.b
        for j in np.argsort(sweep):
            sw = float(sweep[j])
            if sw <= guard_sweep:
                continue
            hit_phase = phase0 + sw
            hit = center + r * np.array([math.cos(hit_phase), math.sin(hit_phase)])
            n = (hit - cand[j]) / eps
            norm = math.hypot(n[0], n[1])
            n = n / norm
            v = unit_vector(self.alpha + sw)
            if float(v @ n) >= -GRAZING_TOL:
                continue
            return sw, int(cand_ids[j]), n, cand[j]
        return None

    def next_ray_hit(self, max_len: float):
        """(length, hit_id, normal, center) of the first impact, or None."""
        s = self.view.cell_size
        eps = self.eps
        v = unit_vector(self.alpha)
        pos = self.pos
        best_tau = math.inf
        best = None
        checked: set[tuple[int, int]] = set()
        ix = int(math.floor(pos[0] / s))
        iy = int(math.floor(pos[1] / s))
        step_x = 1 if v[0] > 0 else -1
        step_y = 1 if v[1] > 0 else -1
        tdx = math.inf if v[0] == 0.0 else abs(s / v[0])
        tdy = math.inf if v[1] == 0.0 else abs(s / v[1])
        next_x = (ix + (step_x > 0)) * s
        next_y = (iy + (step_y > 0)) * s
        tx = math.inf if v[0] == 0.0 else (next_x - pos[0]) / v[0]
        ty = math.inf if v[1] == 0.0 else (next_y - pos[1]) / v[1]
        frontier = 0.0
        while True:
            for jx in (ix - 1, ix, ix + 1):
                for jy in (iy - 1, iy, iy + 1):
                    if (jx, jy) in checked:
                        continue
                    checked.add((jx, jy))
                    pts, ids = self.view.cell(jx, jy)
                    if not len(pts):
                        continue
                    rel = pts - pos
                    proj = rel @ v
                    perp_sq = np.einsum("ij,ij->i", rel, rel) - proj * proj
                    disc = eps * eps - perp_sq
                    ok = disc > (eps * GRAZING_TOL) ** 2
                    if not np.any(ok):
                        continue
                    tau = proj[ok] - np.sqrt(disc[ok])
                    good = (tau > DEPARTURE_GUARD) & (tau <= max_len)
                    if not np.any(good):
                        continue
                    k = int(np.argmin(np.where(good, tau, math.inf)))
                    if tau[k] < best_tau:
                        sub = np.flatnonzero(ok)
                        best_tau = float(tau[k])
                        best = (int(ids[sub[k]]), pts[sub[k]])
            frontier = min(tx, ty)
            if best_tau <= frontier or frontier >= max_len:
                break
            if tx < ty:
                tx += tdx
                ix += step_x
            else:
                ty += tdy
                iy += step_y
        if best is None or best_tau > max_len:
            return None
        hit_id, c = best
        hit = pos + best_tau * v
        n = (hit - c) / eps
        n = n / math.hypot(n[0], n[1])
        return best_tau, hit_id, n, c

    # -- daisy bookkeeping ---------------------------------------------------

    def register_hit(self, hit_id, n, b_signed, hit_time):
        if self.prev_id is not None and hit_id == self.prev_id:
            kind = EventKind.SELF_RECOLLISION
        elif hit_id in self.seen:
            kind = EventKind.RECOLLISION
        else:
            kind = EventKind.FRESH
        self.events.append(CollisionEvent(
            hit_time=hit_time, exit_time=hit_time, obstacle_id=hit_id,
            impact_vector=n, impact_parameter=b_signed, kind=kind))
        if hit_id not in self.seen:
            self.seen.add(hit_id)
            self.hit_center_ids.append(hit_id)
        self.prev_id = hit_id
        return kind

    def daisy_entry(self, b_signed, n, hit_time):
        return {
            "b": b_signed,
            "n_phase": math.atan2(n[1], n[0]),
            "time": hit_time,
            "state": None,  # post-reflection state, filled after reflecting
        }

    def daisy_closure(self, entry):
        """Index of the matching earlier leaf, or None."""
        for i, old in enumerate(self.run):
            db = abs(entry["b"] - old["b"])
            dphi = abs(math.remainder(entry["n_phase"] - old["n_phase"], TWO_PI))
            if db <= DAISY_CLOSURE_TOL and dphi <= DAISY_CLOSURE_TOL:
                return i
        return None


def simulate_trajectory(field_, start: ParticleState, t_max: float,
                        sample_times=(), k_max_leaves: int = DEFAULT_K_MAX_LEAVES,
                        max_events: int = DEFAULT_MAX_EVENTS
                        ) -> TrajectoryOutcome:
    """Run the exact event-driven dynamics from an admissible start."""
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    if not is_admissible_start(field_, start.position):
        raise ValueError("start position overlaps an obstacle")
    tr = _Trajectory(field_, start, t_max, sample_times, k_max_leaves, max_events)

    while tr.t < t_max:
        if len(tr.events) >= max_events:
            raise ChatteringError(
                f"{len(tr.events)} events before t={tr.t:g}; chattering pathology")
        remaining = t_max - tr.t
        if tr.b > 0.0:
            found = tr.next_arc_hit()
            if found is None:
                tr.status = TrajectoryStatus.CIRCLING_FOREVER
                tr.status_time = tr.t
                tr.advance(remaining)
                break
            sweep, hit_id, n, c = found
            tau = sweep * tr.radius
            if tau >= remaining:
                tr.check_near_miss(remaining / tr.radius, None)
                tr.advance(remaining)
                break
            tr.check_near_miss(sweep, hit_id)
        else:
            found = tr.next_ray_hit(remaining)
            if found is None:
                tr.check_near_miss(remaining, None)
                tr.advance(remaining)
                break
            tau, hit_id, n, c = found
            tr.check_near_miss(tau, hit_id)

        tr.advance(tau)
        v = unit_vector(tr.alpha)
        b_signed = tr.eps * float(v[0] * n[1] - v[1] * n[0])
        if hit_id not in tr.seen:
            tr.hit_centers.append(np.asarray(c, dtype=float))
        kind = tr.register_hit(hit_id, n, b_signed, tr.t)

        entry = tr.daisy_entry(b_signed, n, tr.t)
        closed_at = None
        if kind is EventKind.SELF_RECOLLISION:
            closed_at = tr.daisy_closure(entry)
        else:
            tr.run = []

        # reflect
        vn = float(v @ n)
        tr.alpha = normalize_angle(math.atan2(v[1] - 2.0 * vn * n[1],
                                              v[0] - 2.0 * vn * n[0]))

        if closed_at is not None:
            tr.status = TrajectoryStatus.TRAPPED_DAISY
            tr.status_time = tr.t
            _replay_daisy(tr, closed_at)
            break

        entry["state"] = (tr.pos.copy(), tr.alpha)
        tr.run.append(entry)
        if len(tr.run) > tr.k_max:
            tr.run.pop(0)

    if tr.cursor < len(tr.sample_t):
        # stragglers within rounding distance of t_max
        tr.sample_pos[tr.cursor:] = tr.pos
        tr.cursor = len(tr.sample_t)
    final = ParticleState(tr.pos, tr.alpha)
    return TrajectoryOutcome(
        final_state=final, elapsed=t_max, status=tr.status,
        status_time=tr.status_time, events=tr.events,
        sample_times=tr.sample_t, sample_positions=tr.sample_pos,
        near_miss_count=tr.near_miss)


def _replay_daisy(tr: _Trajectory, closed_at: int):
    """Fill remaining samples by cycling the detected periodic flower."""
    cycle = tr.run[closed_at:]
    durations = []
    for i, leaf in enumerate(cycle):
        t_next = cycle[i + 1]["time"] if i + 1 < len(cycle) else tr.t
        durations.append(t_next - leaf["time"])
    period = sum(durations)
    remaining_idx = range(tr.cursor, len(tr.sample_t))
    targets = list(tr.sample_t[tr.cursor:]) + [tr.t_max]
    out = []
    for st in targets:
        rel = math.fmod(st - tr.t, period) if period > 0 else 0.0
        k = 0
        while k < len(durations) - 1 and rel > durations[k]:
            rel -= durations[k]
            k += 1
        pos_k, alpha_k = cycle[k]["state"]
        state = advance_free(ParticleState(pos_k, alpha_k), tr.b, max(rel, 0.0))
        out.append(state)
    for j, i in enumerate(remaining_idx):
        tr.sample_pos[i] = out[j].position
    tr.cursor = len(tr.sample_t)
    tr.pos = out[-1].position
    tr.alpha = out[-1].velocity_angle
    tr.t = tr.t_max


def _draw_start(field_, rng, max_tries: int = 10_000) -> ParticleState:
    """Admissible start with uniform position in one cell, uniform angle."""
    s = field_.cell_size
    for _ in range(max_tries):
        pos = rng.random(2) * s
        if is_admissible_start(field_, pos):
            return ParticleState(pos, rng.uniform(0.0, TWO_PI))
    raise RuntimeError("could not draw an admissible start")


@dataclass(frozen=True)
class MsdResult:
    time_grid: np.ndarray
    msd: np.ndarray
    msd_se: np.ndarray
    circling_fraction: np.ndarray
    n_replicas: int
    n_aborted: int


def _msd_chunk(args):
    (params, seed, lo, hi, time_grid, k_max, max_events) = args
    nt = len(time_grid)
    sq = np.full((hi - lo, nt), np.nan)
    nonwander = np.full(hi - lo, np.inf)
    t_max = float(time_grid[-1])
    for r in range(lo, hi):
        field_ = ObstacleField(_rng.mix(seed, 0xF1E1D, r), params)
        rng = _rng.generator(seed, _rng.STREAM_START, r)
        start = _draw_start(field_, rng)
        try:
            out = simulate_trajectory(field_, start, t_max, time_grid,
                                      k_max_leaves=k_max, max_events=max_events)
        except ChatteringError:
            continue
        disp = out.sample_positions - start.position
        sq[r - lo] = np.einsum("ij,ij->i", disp, disp)
        if out.status is not TrajectoryStatus.COMPLETED:
            nonwander[r - lo] = out.status_time
    return sq, nonwander


def msd_estimate(params: ScalingParams, n_replicas: int, time_grid, seed: int,
                 workers: int = 1, k_max_leaves: int = DEFAULT_K_MAX_LEAVES,
                 max_events: int = DEFAULT_MAX_EVENTS) -> MsdResult:
    """Mean squared displacement over independent fields and starts.

    Replicas that end up circling or trapped stay in the average (their
    displacement saturates); their cumulative fraction is reported per
    time-grid row.  Aborted (chattering) replicas are dropped and counted.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if n_replicas < 1 or len(time_grid) == 0:
        raise ValueError("need at least one replica and one time point")
    chunks = _chunk_ranges(n_replicas, workers)
    args = [(params, seed, lo, hi, time_grid, k_max_leaves, max_events)
            for lo, hi in chunks]
    results = _run_chunks(_msd_chunk, args, workers)
    sq = np.concatenate([r[0] for r in results])
    nonwander = np.concatenate([r[1] for r in results])
    ok = ~np.isnan(sq[:, 0])
    n_ok = int(np.count_nonzero(ok))
    msd = np.nanmean(sq, axis=0)
    msd_se = np.nanstd(sq, axis=0, ddof=1) / math.sqrt(max(n_ok, 2))
    circ = np.array([np.mean(nonwander[ok] <= t) for t in time_grid])
    return MsdResult(time_grid, msd, msd_se, circ, n_replicas,
                     n_replicas - n_ok)


@dataclass(frozen=True)
class EventRateRow:
    eps: float
    eta: float
    p_recollision: float
    p_recollision_se: float
    p_interference: float
    p_interference_se: float
    p_daisy: float
    p_daisy_se: float
    p_circling: float
    p_circling_se: float


@dataclass(frozen=True)
class EventRateResult:
    rows: list
    exponents: dict

    def probabilities(self, name: str) -> np.ndarray:
        return np.array([getattr(r, "p_" + name) for r in self.rows])


def _event_chunk(args):
    (params, seed, eps_index, lo, hi, t, k_max, max_events) = args
    flags = np.zeros((hi - lo, 4), dtype=np.int8)  # recoll, interf, daisy, circ
    valid = np.ones(hi - lo, dtype=bool)
    for r in range(lo, hi):
        field_ = ObstacleField(_rng.mix(seed, 0xE5, eps_index, r), params)
        rng = _rng.generator(seed, _rng.STREAM_START, eps_index, r)
        start = _draw_start(field_, rng)
        try:
            out = simulate_trajectory(field_, start, t,
                                      k_max_leaves=k_max, max_events=max_events)
        except ChatteringError:
            valid[r - lo] = False
            continue
        kinds = [ev.kind for ev in out.events]
        flags[r - lo, 0] = EventKind.RECOLLISION in kinds
        flags[r - lo, 1] = out.near_miss_count > 0
        flags[r - lo, 2] = out.status is TrajectoryStatus.TRAPPED_DAISY
        flags[r - lo, 3] = out.status is TrajectoryStatus.CIRCLING_FOREVER
    return flags, valid


def _fit_exponent(eps: np.ndarray, p: np.ndarray) -> float:
    """Least-squares power-law exponent of p against eps (positive entries)."""
    keep = p > 0.0
    if np.count_nonzero(keep) < 2:
        return math.nan
    slope = np.polyfit(np.log(eps[keep]), np.log(p[keep]), 1)[0]
    return float(slope)


def event_rate_study(eps_list, eta_rule, mu: float, b_magnitude: float,
                     t: float, n_replicas: int, seed: int, workers: int = 1,
                     k_max_leaves: int = DEFAULT_K_MAX_LEAVES,
                     max_events: int = DEFAULT_MAX_EVENTS) -> EventRateResult:
    """Empirical event probabilities across a decreasing radius ladder.

    ``eta_rule`` maps each radius to its divergence factor: a constant, a
    mapping, or a callable.  Power-law exponents are fitted on the positive
    probabilities of each event class (NaN when fewer than two radii show
    the event).
    """
    eps_arr = np.asarray(list(eps_list), dtype=float)
    if np.any(eps_arr <= 0.0) or np.any(eps_arr >= 1.0):
        raise ValueError("radii must lie in (0, 1)")
    if np.any(np.diff(eps_arr) >= 0.0):
        raise ValueError("radius ladder must be strictly decreasing")
    rows = []
    all_p = {name: [] for name in ("recollision", "interference", "daisy",
                                   "circling")}
    for i, eps in enumerate(eps_arr):
        if callable(eta_rule):
            eta = float(eta_rule(eps))
        elif hasattr(eta_rule, "get"):
            eta = float(eta_rule[eps])
        else:
            eta = float(eta_rule)
        params = scaling_from(eps, mu, eta, b_magnitude)
        chunks = _chunk_ranges(n_replicas, workers)
        args = [(params, seed, i, lo, hi, t, k_max_leaves, max_events)
                for lo, hi in chunks]
        results = _run_chunks(_event_chunk, args, workers)
        flags = np.concatenate([r[0] for r in results])
        valid = np.concatenate([r[1] for r in results])
        flags = flags[valid]
        n = len(flags)
        p = flags.mean(axis=0)
        se = np.sqrt(np.maximum(p * (1.0 - p), 0.0) / n)
        rows.append(EventRateRow(eps, eta, p[0], se[0], p[1], se[1],
                                 p[2], se[2], p[3], se[3]))
        for j, name in enumerate(all_p):
            all_p[name].append(p[j])
    exponents = {name: _fit_exponent(eps_arr, np.asarray(vals))
                 for name, vals in all_p.items()}
    return EventRateResult(rows, exponents)


def _chunk_ranges(n: int, workers: int):
    per = max(1, math.ceil(n / max(workers, 1) / 4)) if workers > 1 else n
    return [(lo, min(lo + per, n)) for lo in range(0, n, per)]


def _run_chunks(fn, args, workers: int):
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))
