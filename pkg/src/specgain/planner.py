"""Lattice path candidates, corrected scoring and randomized selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import DomainError, ImprovementFunction
from .gridworld import (
    OccupancyGrid,
    Pose,
    SensorConfig,
    World,
    normalized_expected_gain,
    observe_and_update,
    rollforward,
)

# east, north, west, south
MOVES = ((1, 0), (0, 1), (-1, 0), (0, -1))

EXHAUSTIVE_MAX_SIDE = 7
EXHAUSTIVE_MAX_HORIZON = 3


class PlanningError(RuntimeError):
    """No feasible path exists from the current pose."""


@dataclass(frozen=True)
class PlannerConfig:
    candidate_count: int = 8
    horizon: int = 3
    max_path_length: int = 5
    tau: float = 0.0
    selection: str = "greedy"

    def __post_init__(self):
        if self.candidate_count < 2:
            raise DomainError("candidate_count must be >= 2")
        if self.horizon < 1:
            raise DomainError("horizon must be >= 1")
        if self.max_path_length < 1:
            raise DomainError("max_path_length must be >= 1")
        if not 0 <= self.tau < 0.5:
            raise DomainError("tau must lie in [0, 0.5)")
        if self.selection not in ("greedy", "exhaustive"):
            raise DomainError(f"unknown selection mode {self.selection!r}")


@dataclass
class CandidatePath:
    cells: tuple
    poses: tuple
    raw: list = field(default_factory=list)
    corrected: list = field(default_factory=list)
    normalizers: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(self.corrected))

    @property
    def raw_total(self) -> float:
        return float(sum(self.raw))

    def __len__(self) -> int:
        return len(self.cells)


def traversable(belief: OccupancyGrid, trail: np.ndarray | None = None) -> np.ndarray:
    """Cells the planner may enter: believed free (p < 0.5) or on the robot's own trail."""
    free = belief.logodds < 0
    if trail is not None:
        free = free | trail
    return free


def enumerate_paths(free: np.ndarray, start: tuple, horizon: int, window: int, simple: bool = True) -> list[tuple]:
    """All 4-connected lattice paths of ``horizon`` moves from ``start``.

    Paths stay inside the ``(2*window+1)``-wide square around ``start``; with
    ``simple=True`` they never revisit a cell (including ``start``).  Order is
    the depth-first order with moves tried east, north, west, south.
    """
    width, height = free.shape
    sx, sy = start
    out = []
    path = []
    visited = {start}

    def dfs(x, y):
        if len(path) == horizon:
            out.append(tuple(path))
            return
        for dx, dy in MOVES:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < width and 0 <= ny < height):
                continue
            if abs(nx - sx) > window or abs(ny - sy) > window:
                continue
            if not free[nx, ny] or (simple and (nx, ny) in visited):
                continue
            fresh = (nx, ny) not in visited
            visited.add((nx, ny))
            path.append((nx, ny))
            dfs(nx, ny)
            path.pop()
            if fresh:
                visited.discard((nx, ny))

    dfs(sx, sy)
    return out


def feasible_paths(belief: OccupancyGrid, start: tuple, config: PlannerConfig, trail=None) -> list[tuple]:
    """Simple paths from ``start``; walks that revisit cells only when no simple path exists.

    The fallback keeps the robot from being trapped in pockets shorter than
    the burst (a dead-end corridor), where it must turn back.
    """
    free = traversable(belief, trail)
    paths = enumerate_paths(free, start, config.horizon, config.max_path_length)
    if not paths:
        paths = enumerate_paths(free, start, config.horizon, config.max_path_length, simple=False)
    return paths


def _poses(cells, start, resolution) -> tuple:
    poses = []
    px, py = start
    for x, y in cells:
        poses.append(Pose.at_cell(x, y, resolution, math.atan2(y - py, x - px)))
        px, py = x, y
    return tuple(poses)


def sample_candidates(
    belief: OccupancyGrid, pose: Pose, config: PlannerConfig, rng: np.random.Generator, trail=None
) -> list[CandidatePath]:
    """Up to ``candidate_count`` distinct feasible paths, drawn without replacement.

    ``trail`` optionally marks cells the robot has stood in, which stay
    traversable whatever the belief says.
    """
    start = pose.cell(belief.resolution)
    paths = feasible_paths(belief, start, config, trail)
    if not paths:
        raise PlanningError(f"no feasible path of length {config.horizon} from cell {start}")
    if len(paths) > config.candidate_count:
        # kept in draw order so the lowest-index tie-break is not biased by enumeration order
        idx = rng.choice(len(paths), size=config.candidate_count, replace=False)
        paths = [paths[i] for i in idx]
    return [CandidatePath(p, _poses(p, start, belief.resolution)) for p in paths]


class Scorer:
    """Scores paths against one belief snapshot, sharing work across prefixes.

    Position ``s`` is scored on the belief rolled forward with the most
    likely outcome of positions ``0..s-1``.
    """

    def __init__(self, belief: OccupancyGrid, sensor: SensorConfig):
        self.belief = belief
        self.sensor = sensor
        self._cache: dict[tuple, tuple[OccupancyGrid, float, int]] = {}

    def _state(self, poses: tuple) -> tuple[OccupancyGrid, float, int]:
        key = tuple((p.x, p.y) for p in poses)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(poses) == 1:
            prior = self.belief
        else:
            parent, _, _ = self._state(poses[:-1])
            prior = rollforward(parent, poses[-2], self.sensor)
        r, n = normalized_expected_gain(prior, poses[-1], self.sensor)
        out = (prior, r, n)
        self._cache[key] = out
        return out

    def raw_gains(self, path: CandidatePath) -> tuple[list, list]:
        raw, norms = [], []
        for s in range(len(path.poses)):
            _, r, n = self._state(path.poses[: s + 1])
            raw.append(r)
            norms.append(n)
        return raw, norms

    def score(self, path: CandidatePath, f: ImprovementFunction | None) -> CandidatePath:
        raw, norms = self.raw_gains(path)
        if f is None:
            corrected = list(raw)
        else:
            corrected = [f.query(min(s, f.horizon - 1), r) for s, r in enumerate(raw)]
        return CandidatePath(path.cells, path.poses, raw, corrected, norms)


def score_path(
    path: CandidatePath, f: ImprovementFunction | None, belief: OccupancyGrid, sensor: SensorConfig
) -> CandidatePath:
    """Raw expected gains per position and their corrected values.

    ``f=None`` scores with the identity (raw gains).
    """
    return Scorer(belief, sensor).score(path, f)


def path_probabilities(candidates: list[CandidatePath], tau: float) -> np.ndarray:
    """Selection probability of each candidate under the mixed rule."""
    n = len(candidates)
    best = int(np.argmax([c.total for c in candidates]))
    p = np.full(n, tau / n)
    p[best] += 1.0 - tau
    return p


def select_path(
    candidates: list[CandidatePath], tau: float, rng: np.random.Generator
) -> tuple[int, float, bool]:
    """Pick a candidate: argmax of corrected score w.p. ``1 - tau``, uniform otherwise.

    Returns ``(index, probability of that index under the rule, explored)``.
    Ties go to the lowest index.
    """
    if not candidates:
        raise DomainError("no candidates to select from")
    n = len(candidates)
    probs = path_probabilities(candidates, tau)
    explored = bool(rng.random() < tau)
    if explored:
        idx = int(rng.integers(n))
    else:
        idx = int(np.argmax([c.total for c in candidates]))
    return idx, float(probs[idx]), explored


def realized_path_gain(
    belief: OccupancyGrid, world: World, cells: tuple, start: tuple, sensor: SensorConfig
) -> tuple[float, list]:
    """Normalized realized gain of visiting ``cells`` with a noiseless sensor.

    The world is frozen (no flicker re-draws); ``belief`` is not modified.
    """
    b = belief.copy()
    gains = []
    for pose in _poses(cells, start, belief.resolution):
        _, n = normalized_expected_gain(b, pose, sensor)
        g, _, _ = observe_and_update(b, world, pose, sensor, "none")
        gains.append(g / n if n else 0.0)
    return float(sum(gains)), gains


def exhaustive_best_path(
    belief: OccupancyGrid, world: World, pose: Pose, config: PlannerConfig, sensor: SensorConfig
) -> tuple[CandidatePath, float]:
    """Feasible path with the largest realized (noiseless, truth-based) gain.

    Enumerates every feasible path, so it refuses lattices wider than
    7 cells or horizons above 3.  Returns the path (``corrected`` holds the
    realized per-position gains) and its total; ties go to the first path in
    enumeration order.
    """
    if max(belief.width, belief.height) > EXHAUSTIVE_MAX_SIDE or config.horizon > EXHAUSTIVE_MAX_HORIZON:
        raise DomainError(
            f"exhaustive search limited to {EXHAUSTIVE_MAX_SIDE}x{EXHAUSTIVE_MAX_SIDE} lattices "
            f"and horizon <= {EXHAUSTIVE_MAX_HORIZON}"
        )
    start = pose.cell(belief.resolution)
    paths = feasible_paths(belief, start, config)
    if not paths:
        raise PlanningError(f"no feasible path from cell {start}")
    best, best_gain, best_parts = None, -math.inf, None
    for cells in paths:
        total, parts = realized_path_gain(belief, world, cells, start, sensor)
        if total > best_gain:
            best, best_gain, best_parts = cells, total, parts
    out = CandidatePath(best, _poses(best, start, belief.resolution), corrected=best_parts)
    return out, best_gain


def best_score_over_all(
    belief: OccupancyGrid, pose: Pose, config: PlannerConfig, sensor: SensorConfig, f: ImprovementFunction | None
) -> float:
    """Largest corrected score over every feasible path (not just sampled ones)."""
    start = pose.cell(belief.resolution)
    paths = feasible_paths(belief, start, config)
    if not paths:
        raise PlanningError(f"no feasible path from cell {start}")
    scorer = Scorer(belief, sensor)
    return max(scorer.score(CandidatePath(p, _poses(p, start, belief.resolution)), f).total for p in paths)
