"""Time the compiled ray kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--size 24]

Both backends run on the same belief and viewpoints; results are checked for
equality before timings are printed.
"""

import argparse
import timeit

import numpy as np

from specgain.gridworld import L_HIT, L_MAX, L_MISS, OccupancyGrid, Pose, SensorConfig, make_world
from specgain.kernels import compiled_backend, python_backend


def _cases(size, seed):
    world = make_world("mixed", seed=seed, width=size, height=size)
    rng = np.random.default_rng(seed)
    belief = OccupancyGrid(world.width, world.height, world.resolution)
    belief.logodds[:] = rng.normal(0.0, 2.0, size=belief.shape)
    free = world.free_cells()
    poses = [Pose.at_cell(*free[i]) for i in rng.choice(len(free), size=8, replace=False)]
    return world, belief, poses


def _jobs(mod, world, belief, poses, sensor):
    occ = world.occupied.astype(np.uint8)
    r = float(sensor.max_range)

    def gain():
        return [mod.expected_gain(belief.logodds, 1.0, p.x, p.y, sensor.angles(p), r, L_HIT, L_MISS, L_MAX)
                for p in poses]

    def cast():
        return [mod.cast_rays(occ, 1.0, p.x, p.y, sensor.angles(p), r) for p in poses]

    def update():
        out = []
        for p in poses:
            lo = belief.logodds.copy()
            depths = mod.cast_rays(occ, 1.0, p.x, p.y, sensor.angles(p), r)
            mod.apply_observation(lo, 1.0, p.x, p.y, sensor.angles(p), depths, r, L_HIT, L_MISS, L_MAX)
            out.append(lo)
        return out

    return {"expected_gain": gain, "cast_rays": cast, "apply_observation": update}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    compiled = compiled_backend()
    if compiled is None:
        print("compiled backend not built; only the Python fallback is available")
        return 1
    world, belief, poses = _cases(args.size, args.seed)
    sensor = SensorConfig()
    py = _jobs(python_backend, world, belief, poses, sensor)
    cy = _jobs(compiled, world, belief, poses, sensor)

    print(f"{len(poses)} viewpoints, {sensor.ray_count} rays, range {sensor.max_range}, {args.repeat} repeats")
    print(f"{'kernel':20s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name in py:
        a, b = py[name](), cy[name]()
        for x, y in zip(a, b):
            assert np.allclose(x, y, rtol=0, atol=1e-12), f"{name}: backends disagree"
        tp = min(timeit.repeat(py[name], number=1, repeat=args.repeat)) / len(poses) * 1e3
        tc = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) / len(poses) * 1e3
        print(f"{name:20s} {tp:10.3f} {tc:12.3f} {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
