"""Synthetic 2D occupancy-grid world, range sensor, log-odds mapping and
expected/realized information gain.

Grids are indexed ``[x, y]`` with cell ``(i, j)`` covering
``[i*res, (i+1)*res) x [j*res, (j+1)*res)``.  All information quantities are
in bits.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .estimator import DomainError

L_MAX = 10.0
L_HIT = 0.85
L_MISS = -0.4

NOISE_MODELS = ("none", "gaussian", "impulse")
GAUSSIAN_SIGMA_FRACTION = 1.0 / 8.0
IMPULSE_RATE = 0.5
IMPULSE_RANGE = (1.0 / 3.0, 5.0 / 3.0)


class OccupancyGrid:
    """Occupancy probabilities stored as clamped log-odds.

    Belief grids start at log-odds 0 (p = 0.5); truth grids hold
    ``+-L_MAX``.  The shape is fixed at construction.
    """

    def __init__(self, width: int, height: int, resolution: float = 1.0, logodds=None, l_max: float = L_MAX):
        if width < 1 or height < 1 or resolution <= 0:
            raise DomainError(f"bad grid geometry {width}x{height} @ {resolution}")
        self._width = int(width)
        self._height = int(height)
        self._resolution = float(resolution)
        self.l_max = float(l_max)
        if logodds is None:
            self.logodds = np.zeros((self._width, self._height))
        else:
            arr = np.array(logodds, dtype=np.float64)
            if arr.shape != (self._width, self._height):
                raise DomainError(f"log-odds shape {arr.shape} != {(self._width, self._height)}")
            self.logodds = np.clip(arr, -self.l_max, self.l_max)

    @property
    def width(self) -> int:
        return self._width

    @property
    def height(self) -> int:
        return self._height

    @property
    def resolution(self) -> float:
        return self._resolution

    @property
    def shape(self) -> tuple[int, int]:
        return (self._width, self._height)

    @classmethod
    def from_occupancy(cls, occupied, resolution: float = 1.0) -> "OccupancyGrid":
        occ = np.asarray(occupied, dtype=bool)
        return cls(occ.shape[0], occ.shape[1], resolution, np.where(occ, L_MAX, -L_MAX))

    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logodds))

    def occupied(self) -> np.ndarray:
        return self.logodds > 0

    def entropy(self) -> np.ndarray:
        return voxel_entropy(self.probabilities())

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self._width * self._resolution and 0 <= y < self._height * self._resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self._resolution)), int(math.floor(y / self._resolution))

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self._width and 0 <= iy < self._height

    def copy(self) -> "OccupancyGrid":
        out = OccupancyGrid(self._width, self._height, self._resolution, l_max=self.l_max)
        out.logodds = self.logodds.copy()
        return out

    def to_csv(self) -> str:
        """Probabilities as CSV, one line per ``y`` row, ``x`` increasing."""
        buf = io.StringIO()
        np.savetxt(buf, self.probabilities().T, delimiter=",", fmt="%.6f")
        return buf.getvalue()

    def __repr__(self) -> str:
        return f"OccupancyGrid({self._width}x{self._height}, res={self._resolution})"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    @classmethod
    def at_cell(cls, ix: int, iy: int, resolution: float = 1.0, theta: float = 0.0) -> "Pose":
        return cls((ix + 0.5) * resolution, (iy + 0.5) * resolution, theta)

    def cell(self, resolution: float = 1.0) -> tuple[int, int]:
        return int(math.floor(self.x / resolution)), int(math.floor(self.y / resolution))


@dataclass(frozen=True)
class SensorConfig:
    """Planar range sensor and the log-odds constants of the mapper."""

    ray_count: int = 64
    max_range: float = 6.0
    fov: float = 2 * math.pi
    l_hit: float = L_HIT
    l_miss: float = L_MISS
    l_max: float = L_MAX

    def __post_init__(self):
        if self.ray_count < 0 or self.max_range < 0:
            raise DomainError("ray_count and max_range must be non-negative")
        if not self.l_hit > 0 > self.l_miss:
            raise DomainError("need l_hit > 0 > l_miss")

    def angles(self, pose: Pose) -> np.ndarray:
        n = self.ray_count
        if n == 0:
            return np.zeros(0)
        if self.fov >= 2 * math.pi:
            # full circle: fixed world-frame fan, independent of heading
            return np.arange(n) * (2 * math.pi / n)
        offsets = np.linspace(-self.fov / 2, self.fov / 2, n) if n > 1 else np.zeros(1)
        return pose.theta + offsets


@dataclass
class Observation:
    pose: Pose
    ray_angles: np.ndarray
    depths: np.ndarray
    noise_tag: str = "none"
    max_range: float = 6.0

    def __post_init__(self):
        self.ray_angles = np.asarray(self.ray_angles, dtype=np.float64)
        self.depths = np.asarray(self.depths, dtype=np.float64)
        if self.ray_angles.shape != self.depths.shape:
            raise DomainError("ray_angles and depths differ in length")
        if (self.depths < 0).any() or (self.depths > self.max_range).any():
            raise DomainError("depths must lie in [0, max_range]")


@dataclass
class StepRecord:
    """One executed (or counterfactual) observation.

    ``r`` and ``r_star`` are normalized by ``normalizer`` (the number of
    distinct cells in the viewpoint's footprint) and ``r`` is clamped to
    ``[0, 1]``; ``r_star`` keeps its sign.  ``estimate`` is the corrected gain
    the planner used for this position.
    """

    t: int
    s: int
    r: float
    r_star: float
    bin: int
    executed: bool = True
    p: float = 1.0
    estimate: float = float("nan")
    normalizer: int = 1
    explored: bool = False

    @property
    def delta_r(self) -> float:
        return self.r - self.r_star


class RayCast(NamedTuple):
    cells: np.ndarray
    depth: float
    hit: bool


class World:
    """Ground truth: static occupancy plus a flicker mask re-drawn every step."""

    def __init__(self, static_occupied, flicker=None, resolution: float = 1.0, start=None, flicker_p: float = 0.5):
        self.static = np.array(static_occupied, dtype=bool)
        self.flicker = np.zeros_like(self.static) if flicker is None else np.array(flicker, dtype=bool)
        if self.flicker.shape != self.static.shape:
            raise DomainError("flicker mask shape mismatch")
        self.flicker &= ~self.static
        self.resolution = float(resolution)
        self.flicker_p = float(flicker_p)
        self.occupied = self.static.copy()
        self.start = start

    @property
    def width(self) -> int:
        return self.static.shape[0]

    @property
    def height(self) -> int:
        return self.static.shape[1]

    @property
    def truth(self) -> OccupancyGrid:
        return OccupancyGrid.from_occupancy(self.occupied, self.resolution)

    def step(self, rng: np.random.Generator) -> None:
        """Re-draw every flicker cell; consumes one draw per flicker cell."""
        n = int(self.flicker.sum())
        if n:
            self.occupied[self.flicker] = rng.random(n) < self.flicker_p

    def free_cells(self) -> np.ndarray:
        return np.argwhere(~self.static & ~self.flicker)

    def copy(self) -> "World":
        w = World(self.static, self.flicker, self.resolution, self.start, self.flicker_p)
        w.occupied = self.occupied.copy()
        return w

    # -- world file: "width height resolution", then rows y = 0.. of '#', '.', '~'

    def dumps(self) -> str:
        lines = [f"{self.width} {self.height} {self.resolution!r}"]
        for y in range(self.height):
            row = []
            for x in range(self.width):
                row.append("#" if self.static[x, y] else "~" if self.flicker[x, y] else ".")
            lines.append("".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, flicker_p: float = 0.5) -> "World":
        lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if len(head) != 3:
            raise DomainError(f"bad world header {lines[0]!r}")
        width, height, res = int(head[0]), int(head[1]), float(head[2])
        rows = lines[1:]
        if len(rows) != height or any(len(r) != width for r in rows):
            raise DomainError("world rows do not match header")
        static = np.zeros((width, height), dtype=bool)
        flicker = np.zeros((width, height), dtype=bool)
        for y, row in enumerate(rows):
            for x, ch in enumerate(row):
                if ch == "#":
                    static[x, y] = True
                elif ch == "~":
                    flicker[x, y] = True
                elif ch != ".":
                    raise DomainError(f"unknown world character {ch!r}")
        return cls(static, flicker, res, flicker_p=flicker_p)

    @classmethod
    def load(cls, path, flicker_p: float = 0.5) -> "World":
        return cls.loads(Path(path).read_text(), flicker_p)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def _occupancy(grid) -> tuple[np.ndarray, float]:
    if isinstance(grid, World):
        return grid.occupied, grid.resolution
    return grid.occupied(), grid.resolution


def _check_pose(width: int, height: int, res: float, pose: Pose) -> None:
    if not (0 <= pose.x < width * res and 0 <= pose.y < height * res):
        raise DomainError(f"pose ({pose.x}, {pose.y}) outside the grid")


def cast_ray(grid, pose: Pose, angle: float, max_range: float) -> RayCast:
    """Walk a ray through the truth occupancy until the first occupied cell.

    ``cells`` lists every lattice cell the segment enters, in order, ending
    with the hit cell; ``depth`` is the entry distance of that cell, or
    ``max_range`` on a miss.
    """
    occ, res = _occupancy(grid)
    width, height = occ.shape
    _check_pose(width, height, res, pose)
    cells, enters = kernels.traverse(width, height, res, pose.x, pose.y, float(angle), float(max_range))
    for k, (ix, iy) in enumerate(cells):
        if occ[ix, iy]:
            return RayCast(cells[: k + 1], float(enters[k]), True)
    return RayCast(cells, float(max_range), False)


def sensor_observe(
    truth, pose: Pose, sensor: SensorConfig, noise: str = "none", rng: np.random.Generator | None = None
) -> Observation:
    """Scan the truth from ``pose`` and corrupt returns per the noise model.

    Only returns (hits) are corrupted; a corrupted depth at or beyond
    ``max_range`` becomes a miss.  Gaussian: sigma = depth/8.  Impulse: each
    return is replaced with probability 1/2 by a uniform draw in
    ``[depth/3, 5*depth/3]``.
    """
    if noise not in NOISE_MODELS:
        raise DomainError(f"unknown noise model {noise!r}")
    occ, res = _occupancy(truth)
    _check_pose(occ.shape[0], occ.shape[1], res, pose)
    angles = sensor.angles(pose)
    depths = kernels.cast_rays(occ.astype(np.uint8), res, pose.x, pose.y, angles, float(sensor.max_range))
    n = len(angles)
    if noise != "none":
        if rng is None:
            raise DomainError("noisy sensing needs an rng")
        hit = depths < sensor.max_range
        if noise == "gaussian":
            z = rng.standard_normal(n)
            noisy = depths + z * depths * GAUSSIAN_SIGMA_FRACTION
        else:
            swap = rng.random(n) < IMPULSE_RATE
            u = rng.random(n)
            lo, hi = IMPULSE_RANGE
            noisy = np.where(swap, depths * (lo + (hi - lo) * u), depths)
        noisy = np.clip(noisy, 0.0, sensor.max_range)
        depths = np.where(hit, noisy, depths)
    return Observation(pose, angles, depths, noise, float(sensor.max_range))


def logodds_update(
    belief: OccupancyGrid, obs: Observation, l_hit: float = L_HIT, l_miss: float = L_MISS
) -> np.ndarray:
    """Fold one observation into ``belief`` in place; return the touched mask."""
    if not l_hit > 0 > l_miss:
        raise DomainError("need l_hit > 0 > l_miss")
    _check_pose(belief.width, belief.height, belief.resolution, obs.pose)
    if len(obs.depths) == 0:
        return np.zeros(belief.shape, dtype=bool)
    return kernels.apply_observation(
        belief.logodds,
        belief.resolution,
        obs.pose.x,
        obs.pose.y,
        obs.ray_angles,
        obs.depths,
        obs.max_range,
        l_hit,
        l_miss,
        belief.l_max,
    )


def voxel_entropy(p):
    """Bernoulli entropy in bits, with ``0 log 0 = 0``; accepts scalars or arrays."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~((arr >= 0) & (arr <= 1))):
        raise DomainError("probability outside [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1 - arr) * np.log2(1 - arr)
    h = np.where((arr <= 0) | (arr >= 1), 0.0, h)
    return float(h) if np.ndim(h) == 0 else h


def expected_info_gain(belief: OccupancyGrid, viewpoint: Pose, sensor: SensorConfig) -> float:
    """Expected entropy reduction (bits) of a scan from ``viewpoint``.

    Per ray, every cell is reached with the belief's probability that all
    earlier cells are free, and then updated as a hit or a miss with its own
    occupancy probability.  The per-ray expectations are summed; overlap
    between rays is ignored, which overestimates the joint gain.
    """
    bits, _ = _expected(belief, viewpoint, sensor)
    return bits


def _expected(belief: OccupancyGrid, viewpoint: Pose, sensor: SensorConfig) -> tuple[float, int]:
    _check_pose(belief.width, belief.height, belief.resolution, viewpoint)
    angles = sensor.angles(viewpoint)
    if len(angles) == 0:
        return 0.0, 0
    bits, cells = kernels.expected_gain(
        belief.logodds,
        belief.resolution,
        viewpoint.x,
        viewpoint.y,
        angles,
        float(sensor.max_range),
        sensor.l_hit,
        sensor.l_miss,
        belief.l_max,
    )
    return min(max(bits, 0.0), float(len(angles) * cells)), int(cells)


def footprint(belief: OccupancyGrid, viewpoint: Pose, sensor: SensorConfig) -> np.ndarray:
    """Mask of the distinct cells a scan from ``viewpoint`` can touch."""
    _check_pose(belief.width, belief.height, belief.resolution, viewpoint)
    angles = sensor.angles(viewpoint)
    return kernels.footprint_cells(
        belief.width, belief.height, belief.resolution, viewpoint.x, viewpoint.y, angles, float(sensor.max_range)
    )


def normalized_expected_gain(belief: OccupancyGrid, viewpoint: Pose, sensor: SensorConfig) -> tuple[float, int]:
    """Expected gain per footprint cell, clamped to ``[0, 1]``, and the cell count."""
    bits, cells = _expected(belief, viewpoint, sensor)
    return (min(bits / cells, 1.0) if cells else 0.0), cells


def specific_info_gain(before: OccupancyGrid, after: OccupancyGrid, touched=None) -> float:
    """Realized entropy drop (bits) over the touched cells; may be negative."""
    if before.shape != after.shape:
        raise DomainError(f"grid shapes differ: {before.shape} vs {after.shape}")
    if touched is None:
        mask = np.ones(before.shape, dtype=bool)
    else:
        mask = np.asarray(touched, dtype=bool)
        if mask.shape != before.shape:
            raise DomainError("touched mask shape mismatch")
    pb = 1.0 / (1.0 + np.exp(-before.logodds[mask]))
    pa = 1.0 / (1.0 + np.exp(-after.logodds[mask]))
    gain = float(np.sum(voxel_entropy(pb)) - np.sum(voxel_entropy(pa)))
    n = float(mask.sum())
    return min(max(gain, -n), n)


def rollforward(belief: OccupancyGrid, viewpoint: Pose, sensor: SensorConfig) -> OccupancyGrid:
    """Copy of ``belief`` updated with the most likely outcome of a scan."""
    out = belief.copy()
    angles = sensor.angles(viewpoint)
    if len(angles):
        kernels.rollforward(
            out.logodds,
            out.resolution,
            viewpoint.x,
            viewpoint.y,
            angles,
            float(sensor.max_range),
            sensor.l_hit,
            sensor.l_miss,
            out.l_max,
        )
    return out


def observe_and_update(
    belief: OccupancyGrid,
    truth,
    pose: Pose,
    sensor: SensorConfig,
    noise: str = "none",
    rng: np.random.Generator | None = None,
) -> tuple[float, np.ndarray, Observation]:
    """Sense, update ``belief`` in place, and return the realized gain in bits."""
    obs = sensor_observe(truth, pose, sensor, noise, rng)
    before = belief.logodds.copy()
    touched = logodds_update(belief, obs, sensor.l_hit, sensor.l_miss)
    lb = before[touched]
    la = belief.logodds[touched]
    gain = float(np.sum(voxel_entropy(1.0 / (1.0 + np.exp(-lb)))) - np.sum(voxel_entropy(1.0 / (1.0 + np.exp(-la)))))
    return gain, touched, obs


# ---------------------------------------------------------------------------
# scenario worlds


def _box(width: int, height: int) -> np.ndarray:
    occ = np.zeros((width, height), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return occ


def _rooms(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    occ = _box(width, height)
    mx, my = width // 2, height // 2
    occ[mx, :] = True
    occ[:, my] = True
    # one doorway in each of the four wall segments
    for lo, hi, fixed, vertical in (
        (1, my, mx, True),
        (my + 1, height - 1, mx, True),
        (1, mx, my, False),
        (mx + 1, width - 1, my, False),
    ):
        d = int(rng.integers(lo + 1, hi - 1)) if hi - lo > 3 else (lo + hi) // 2
        if vertical:
            occ[fixed, d : d + 2] = False
        else:
            occ[d : d + 2, fixed] = False
    # a few pillars to make views overlap and occlude
    for _ in range(max(1, width * height // 150)):
        x, y = int(rng.integers(2, width - 2)), int(rng.integers(2, height - 2))
        if abs(x - mx) > 1 and abs(y - my) > 1:
            occ[x, y] = True
    return occ


def make_world(kind: str, seed: int = 0, width: int = 24, height: int = 24, resolution: float = 1.0,
               flicker_p: float = 0.5) -> World:
    """Build one of the scenario worlds: ``open``, ``rooms``, ``flicker``, ``mixed``.

    The start cell is placed in the lower-left quadrant; the flicker patch
    (when present) sits in the upper-right part of the map.
    """
    rng = np.random.default_rng(seed)
    if kind == "open":
        static = _box(width, height)
        flicker = np.zeros_like(static)
    elif kind == "rooms":
        static = _rooms(width, height, rng)
        flicker = np.zeros_like(static)
    elif kind in ("flicker", "mixed"):
        static = _box(width, height) if kind == "flicker" else _rooms(width, height, rng)
        flicker = np.zeros_like(static)
        fw, fh = max(2, width // 5), max(2, height // 5)
        x0 = width - 2 - fw - int(rng.integers(0, max(1, width // 8)))
        y0 = height - 2 - fh - int(rng.integers(0, max(1, height // 8)))
        flicker[x0 : x0 + fw, y0 : y0 + fh] = True
    else:
        raise DomainError(f"unknown world kind {kind!r}")
    world = World(static, flicker, resolution, flicker_p=flicker_p)
    free = [
        (int(x), int(y))
        for x, y in world.free_cells()
        if x < width // 2 and y < height // 2 and not world.flicker[max(x - 1, 0): x + 2, max(y - 1, 0): y + 2].any()
    ]
    if not free:
        free = [tuple(int(v) for v in c) for c in world.free_cells()]
    if not free:
        raise DomainError("world has no free cell to start in")
    world.start = free[int(rng.integers(len(free)))]
    return world


def random_small_world(size: int, rng: np.random.Generator, density: float = 0.2) -> World:
    """Walled ``size x size`` world with random interior obstacles."""
    static = _box(size, size)
    inner = rng.random((size - 2, size - 2)) < density
    static[1:-1, 1:-1] = inner
    world = World(static, None, 1.0)
    free = world.free_cells()
    if len(free) == 0:
        static[1, 1] = False
        world = World(static, None, 1.0)
        free = world.free_cells()
    c = free[int(rng.integers(len(free)))]
    world.start = (int(c[0]), int(c[1]))
    return world
