"""Synthetic worlds: noisy scan simulation, trajectory generation with
odometry, partial-map carving from a trajectory, and production of the
view-transition training data used to fit the structural prior."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Pose, is_inside,
                   raycast_full, _ray_samples, wrap_angle)
from .pfilter import MotionNoise
from .views import ExtractionParams, RangeScan, ViewAlphabet, alphabet_build, view_of
from . import views as _views
from . import dirichlet

MAX_STEP = 0.25  # meters of travel per trajectory record


@dataclass(frozen=True)
class WorldConfig:
    beam_count: int = 181
    fov: float = math.pi
    max_range: float = 8.0
    range_noise_sigma: float = 0.02
    dropout_prob: float = 0.01
    odom_noise: MotionNoise = field(default_factory=MotionNoise)
    seed: int = 0

    def __post_init__(self):
        if self.beam_count < 3:
            raise ValueError("need at least 3 beams")
        if not (0.0 < self.fov <= 2.0 * math.pi):
            raise ValueError("fov must lie in (0, 2*pi]")
        if self.range_noise_sigma < 0 or not (0.0 <= self.dropout_prob <= 1.0):
            raise ValueError("invalid noise configuration")

    @property
    def bearings(self) -> np.ndarray:
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.beam_count)


@dataclass(frozen=True)
class TrajectoryRecord:
    true_pose: Pose
    odom: tuple[float, float, float]  # d_trans, d_rot1, d_rot2
    scan: RangeScan


@dataclass
class Trajectory:
    records: list[TrajectoryRecord]
    truncated: bool = False


def simulate_scan(grid: OccupancyGrid, pose: Pose, cfg: WorldConfig,
                  rng: np.random.Generator) -> RangeScan:
    """Raycast truth plus Gaussian range noise and random dropout to
    max-range.  Deterministic given the generator state."""
    row, col = grid.cell_of(pose.x, pose.y)
    h, w = grid.shape
    if not (0 <= row < h and 0 <= col < w) or grid.cells[row, col] != FREE:
        raise ValueError("scan pose must be in a FREE cell")
    ranges, _ = raycast_full(grid, pose, cfg.bearings, cfg.max_range)
    hit = ranges < cfg.max_range
    if cfg.range_noise_sigma > 0:
        noisy = ranges + rng.normal(0.0, cfg.range_noise_sigma, len(ranges))
        ranges = np.where(hit, np.clip(noisy, 1e-6, cfg.max_range), ranges)
    if cfg.dropout_prob > 0:
        drop = rng.random(len(ranges)) < cfg.dropout_prob
        ranges = np.where(drop, cfg.max_range, ranges)
    return RangeScan(cfg.bearings, ranges, cfg.max_range)


def _free_at(grid: OccupancyGrid, x: float, y: float) -> bool:
    row, col = grid.cell_of(x, y)
    h, w = grid.shape
    return 0 <= row < h and 0 <= col < w and grid.cells[row, col] == FREE


def _clearance(grid: OccupancyGrid, x: float, y: float, heading: float,
               dist: float) -> float:
    """Free distance ahead along heading, up to dist (noise-free, fine steps)."""
    step = grid.resolution * 0.5
    t = step
    while t <= dist:
        if not _free_at(grid, x + t * math.cos(heading), y + t * math.sin(heading)):
            return t - step
        t += step
    return dist


def _odometry_delta(prev: Pose, cur: Pose) -> tuple[float, float, float]:
    dx, dy = cur.x - prev.x, cur.y - prev.y
    d_trans = math.hypot(dx, dy)
    if d_trans > 1e-9:
        d_rot1 = wrap_angle(math.atan2(dy, dx) - prev.theta)
    else:
        d_rot1 = 0.0
    d_rot2 = wrap_angle(cur.theta - prev.theta - d_rot1)
    return d_trans, d_rot1, d_rot2


def _noisy_odom(true_delta, noise: MotionNoise, rng: np.random.Generator):
    d_trans, d_rot1, d_rot2 = true_delta
    s_trans, s_rot = noise.sigmas(d_trans, d_rot1, d_rot2)
    return (d_trans + (rng.normal(0.0, s_trans) if s_trans > 0 else 0.0),
            d_rot1 + (rng.normal(0.0, s_rot) if s_rot > 0 else 0.0),
            d_rot2 + (rng.normal(0.0, s_rot) if s_rot > 0 else 0.0))


def _next_heading(grid: OccupancyGrid, pose: Pose, policy, waypoint,
                  rng: np.random.Generator, goal_heading: list) -> float:
    """Desired heading for one step under the given policy."""
    if policy == "waypoints":
        return math.atan2(waypoint[1] - pose.y, waypoint[0] - pose.x)
    if policy == "wall_follow":
        # hug the left wall: turn left when open, straight else, right when blocked
        for turn in (math.radians(40), 0.0, math.radians(-40),
                     math.radians(-90), math.radians(-140), math.pi):
            h = pose.theta + turn
            if _clearance(grid, pose.x, pose.y, h, 0.6) >= 0.6 - 1e-9:
                return h
        return pose.theta + math.pi
    # random_explore: hold a random goal heading, re-draw when blocked
    if goal_heading[0] is None or \
            _clearance(grid, pose.x, pose.y, goal_heading[0], 0.6) < 0.6 - 1e-9:
        candidates = wrap_angle(pose.theta + np.linspace(-math.pi, math.pi, 16,
                                                         endpoint=False))
        clear = np.array([_clearance(grid, pose.x, pose.y, h, 3.0)
                          for h in candidates])
        best = np.nonzero(clear >= clear.max() - 1e-9)[0]
        goal_heading[0] = float(candidates[best[rng.integers(0, len(best))]])
        goal_heading[0] += float(rng.normal(0.0, 0.2))
    return goal_heading[0]


def generate_trajectory(grid: OccupancyGrid, start: Pose, policy,
                        length: float, cfg: WorldConfig,
                        rng: np.random.Generator | None = None,
                        waypoints=None) -> Trajectory:
    """Collision-free true poses with step <= 0.25 m, noisy recorded odometry,
    and a simulated scan per step.

    policy: 'waypoints' (requires waypoints list of (x, y)), 'wall_follow',
    or 'random_explore'.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if not _free_at(grid, start.x, start.y):
        raise ValueError("start pose must be in a FREE cell")
    if policy == "waypoints" and not waypoints:
        raise ValueError("waypoints policy requires a waypoint list")
    if policy not in ("waypoints", "wall_follow", "random_explore"):
        raise ValueError(f"unknown policy {policy!r}")

    records: list[TrajectoryRecord] = []
    pose = start
    traveled = 0.0
    wp_idx = 0
    goal_heading = [None]
    truncated = False
    max_turn = math.radians(35.0)
    stuck = 0
    while traveled < length:
        if policy == "waypoints":
            if wp_idx >= len(waypoints):
                break
            wp = waypoints[wp_idx]
            if math.hypot(wp[0] - pose.x, wp[1] - pose.y) < 0.3:
                wp_idx += 1
                continue
        else:
            wp = None
        desired = _next_heading(grid, pose, policy, wp, rng, goal_heading)
        turn = np.clip(wrap_angle(desired - pose.theta), -max_turn, max_turn)
        heading = wrap_angle(pose.theta + turn)
        advance = min(MAX_STEP, _clearance(grid, pose.x, pose.y, heading, MAX_STEP))
        if advance < grid.resolution:
            # rotate in place toward the desired heading and try again
            new_pose = Pose(pose.x, pose.y, heading)
            stuck += 1
            if stuck > 40:
                truncated = True
                break
        else:
            stuck = 0
            new_pose = Pose(pose.x + advance * math.cos(heading),
                            pose.y + advance * math.sin(heading), heading)
            traveled += advance
        odom = _noisy_odom(_odometry_delta(pose, new_pose), cfg.odom_noise, rng)
        scan = simulate_scan(grid, new_pose, cfg, rng)
        records.append(TrajectoryRecord(true_pose=new_pose, odom=odom, scan=scan))
        pose = new_pose
    return Trajectory(records=records, truncated=truncated)


def carve_partial_map(grid: OccupancyGrid, trajectory: Trajectory,
                      cfg: WorldConfig) -> OccupancyGrid:
    """Partial map as the trajectory's robot would have built it: noise-free
    rays from every recorded pose mark traversed cells FREE and terminating
    obstacle cells OCCUPIED; everything else stays UNKNOWN."""
    carved = np.full(grid.shape, UNKNOWN, dtype=np.int8)
    bearings = cfg.bearings
    for rec in trajectory.records:
        pose = rec.true_pose
        angles = pose.theta + bearings
        ts, states, rows, cols, ok = _ray_samples(grid, pose.x, pose.y,
                                                  angles, cfg.max_range)
        occ = states == OCCUPIED
        hit_any = occ.any(axis=1)
        first = np.argmax(occ, axis=1)
        cutoff = np.where(hit_any, first, states.shape[1])
        before = np.arange(states.shape[1])[None, :] < cutoff[:, None]
        free_pts = before & ok & (states == FREE)
        carved[rows[free_pts], cols[free_pts]] = FREE
        hit_pts = ok & occ & (np.arange(states.shape[1])[None, :] == first[:, None]) \
            & hit_any[:, None]
        carved[rows[hit_pts], cols[hit_pts]] = OCCUPIED
        prow, pcol = grid.cell_of(pose.x, pose.y)
        if grid.cells[prow, pcol] == FREE:
            carved[prow, pcol] = FREE
    return OccupancyGrid(carved, grid.resolution, grid.origin)


def subsampled_views(trajectory: Trajectory, alphabet: ViewAlphabet | None,
                     params: ExtractionParams, spacing: float = 2.0):
    """Scan strings (or view ids, when an alphabet is given) sampled every
    >= spacing meters of travel along the trajectory."""
    out = []
    dist = math.inf  # emit at the first record
    prev = None
    for rec in trajectory.records:
        if prev is not None:
            dist += math.hypot(rec.true_pose.x - prev.x, rec.true_pose.y - prev.y)
        prev = rec.true_pose
        if dist < spacing:
            continue
        dist = 0.0
        s = _views.extract_scan_string(rec.scan, params)
        out.append(view_of(alphabet, s) if alphabet is not None else s)
    return out


@dataclass
class TrainingData:
    alphabet: ViewAlphabet
    counts: list[np.ndarray]        # one transition count matrix per sample
    map_index: list[int]            # source map of each count matrix
    marginals: np.ndarray           # pooled view frequencies
    true_transitions: list[np.ndarray]  # per-sample column-normalized counts
    confusion_pairs: list[list[tuple[int, int]]]  # per-sample (true, observed)


def make_training_data(maps: list[OccupancyGrid], trajectories_per_map: int,
                       cfg: WorldConfig, params: ExtractionParams,
                       max_views: int = 16, trajectory_length: float = 60.0,
                       alphabet: ViewAlphabet | None = None,
                       policy: str = "random_explore",
                       split_trajectories: bool = False,
                       partial_fraction: float = 0.5) -> TrainingData:
    """Simulate exploration of each map, subsample views every 2 m of travel,
    and count view transitions.  Each noisy view is also paired with the view
    a revisiting robot would be compared against: the expected view in a
    partial map carved from a partner trajectory of the same map (with beams
    crossing unexplored cells censored to max range), falling back to the
    noise-free full-map view where the pose lies outside that partial map.
    This makes the learned confusion model honest about frontier effects, not
    just sensor noise.  partial_fraction controls how much of the partner
    trajectory builds that partial map: smaller fractions leave more
    frontiers, mimicking sparsely explored maps.

    With split_trajectories each trajectory becomes its own training sample
    (count matrix); otherwise one sample aggregates a whole map.
    """
    if not maps:
        raise ValueError("need at least one training map")
    rng = np.random.default_rng(cfg.seed)
    # view strings per map per trajectory, noisy and reference ("true")
    noisy: list[list[list[str]]] = []
    clean: list[list[list[str]]] = []
    for grid in maps:
        trajs = []
        for _ in range(trajectories_per_map):
            start = _random_free_pose(grid, rng)
            trajs.append(generate_trajectory(grid, start, policy,
                                             trajectory_length, cfg, rng=rng))
        if not (0.0 < partial_fraction <= 1.0):
            raise ValueError("partial_fraction must lie in (0, 1]")
        partials = []
        for t in trajs:
            keep = max(1, int(len(t.records) * partial_fraction))
            prefix = Trajectory(records=t.records[:keep], truncated=t.truncated)
            partials.append(carve_partial_map(grid, prefix, cfg))
        noisy.append([])
        clean.append([])
        for j, traj in enumerate(trajs):
            partner = partials[(j + 1) % len(partials)]
            n_strings: list[str] = []
            c_strings: list[str] = []
            dist = math.inf
            prev_pose = None
            for rec in traj.records:
                if prev_pose is not None:
                    dist += math.hypot(rec.true_pose.x - prev_pose.x,
                                       rec.true_pose.y - prev_pose.y)
                prev_pose = rec.true_pose
                if dist < 2.0:
                    continue
                dist = 0.0
                n_strings.append(_views.extract_scan_string(rec.scan, params))
                if is_inside(partner, rec.true_pose):
                    ranges, crossed = raycast_full(partner, rec.true_pose,
                                                   cfg.bearings, cfg.max_range)
                    ranges = np.where(crossed, cfg.max_range, ranges)
                else:
                    ranges, _ = raycast_full(grid, rec.true_pose, cfg.bearings,
                                             cfg.max_range)
                c_strings.append(_views.extract_scan_string(
                    RangeScan(cfg.bearings, ranges, cfg.max_range), params))
            noisy[-1].append(n_strings)
            clean[-1].append(c_strings)

    if alphabet is None:
        corpus = [s for per_map in noisy for traj in per_map for s in traj]
        alphabet = alphabet_build(corpus, max_views)
    nu = alphabet.nu

    counts: list[np.ndarray] = []
    map_index: list[int] = []
    confusion: list[list[tuple[int, int]]] = []
    marg = np.zeros(nu)
    for m in range(len(maps)):
        if not split_trajectories:
            counts.append(dirichlet.new_counts(nu))
            map_index.append(m)
            confusion.append([])
        for n_strings, c_strings in zip(noisy[m], clean[m]):
            if split_trajectories:
                counts.append(dirichlet.new_counts(nu))
                map_index.append(m)
                confusion.append([])
            f, pairs = counts[-1], confusion[-1]
            prev = None  # no transition across trajectory boundaries
            for s_noisy, s_clean in zip(n_strings, c_strings):
                v = view_of(alphabet, s_noisy)
                pairs.append((view_of(alphabet, s_clean), v))
                marg[v] += 1
                if prev is not None:
                    dirichlet.increment(f, prev, v)
                prev = v

    marginals = (marg + 1.0) / (marg.sum() + nu)  # every view stays possible
    true_transitions = []
    for f in counts:
        col = f.sum(axis=0, keepdims=True).astype(float)
        true_transitions.append(np.divide(f, np.maximum(col, 1.0)))
    return TrainingData(alphabet=alphabet, counts=counts, map_index=map_index,
                        marginals=marginals, true_transitions=true_transitions,
                        confusion_pairs=confusion)


def _random_free_pose(grid: OccupancyGrid, rng: np.random.Generator) -> Pose:
    rows, cols = np.nonzero(grid.cells == FREE)
    k = rng.integers(0, len(rows))
    x = grid.origin[0] + (cols[k] + 0.5) * grid.resolution
    y = grid.origin[1] + (rows[k] + 0.5) * grid.resolution
    return Pose(x, y, float(rng.uniform(-math.pi, math.pi)))


# ---------------------------------------------------------------- log format

def dump_trajectory(traj: Trajectory, cfg: WorldConfig) -> str:
    """One header line with the beam geometry, then one record per line:
    step, true pose, odometry delta, beam ranges."""
    lines = [f"beams {cfg.beam_count} fov {cfg.fov!r} max_range {cfg.max_range!r}"
             f" truncated {int(traj.truncated)}"]
    for k, rec in enumerate(traj.records):
        p = rec.true_pose
        fields = [str(k), repr(p.x), repr(p.y), repr(p.theta),
                  repr(rec.odom[0]), repr(rec.odom[1]), repr(rec.odom[2])]
        fields.extend(repr(float(v)) for v in rec.scan.ranges)
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def load_trajectory(text: str) -> tuple[Trajectory, dict]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("beams "):
        raise ValueError("trajectory log must start with a 'beams' header")
    h = lines[0].split()
    header = {"beam_count": int(h[1]), "fov": float(h[3]),
              "max_range": float(h[5]), "truncated": bool(int(h[7]))}
    bearings = np.linspace(-header["fov"] / 2.0, header["fov"] / 2.0,
                           header["beam_count"])
    records = []
    for line in lines[1:]:
        parts = line.split()
        pose = Pose(float(parts[1]), float(parts[2]), float(parts[3]))
        odom = (float(parts[4]), float(parts[5]), float(parts[6]))
        ranges = np.array([float(v) for v in parts[7:]])
        scan = RangeScan(bearings, ranges, header["max_range"])
        records.append(TrajectoryRecord(true_pose=pose, odom=odom, scan=scan))
    return Trajectory(records=records, truncated=header["truncated"]), header
