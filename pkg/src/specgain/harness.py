"""Episodes, sweeps and mode comparisons.

An episode alternates planning and execution in bursts of ``horizon`` steps:
plan candidates on the current belief, pick one, then for each step sense,
update the belief and record the expected/realized gain pair.  The
improvement function is updated once per burst, after its observations.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .estimator import DomainError, ImprovementFunction, randomization_level
from .gridworld import (
    NOISE_MODELS,
    OccupancyGrid,
    Pose,
    SensorConfig,
    StepRecord,
    World,
    make_world,
    observe_and_update,
)
from .planner import (
    CandidatePath,
    PlannerConfig,
    PlanningError,
    Scorer,
    best_score_over_all,
    exhaustive_best_path,
    path_probabilities,
    realized_path_gain,
    sample_candidates,
    select_path,
)
from .regret import (
    BurstOutcome,
    RegretLedger,
    fit_loglog_slope,
    mean_and_se,
    perception_regret,
    play_game,
)

__all__ = [
    "ExperimentConfig",
    "EpisodeLog",
    "SweepResult",
    "ModeComparison",
    "CSV_COLUMNS",
    "MODES",
    "FEEDBACK",
    "WORLD_KINDS",
    "build_world",
    "run_episode",
    "sweep",
    "compare_modes",
    "summary",
    "write_csv",
]

MODES = ("corrected", "raw-baseline", "random")
FEEDBACK = ("full", "bandit", "executed")
WORLD_KINDS = ("open", "rooms", "flicker", "mixed")
MAX_WAIT_BURSTS = 5
CSV_COLUMNS = (
    "T", "seed", "rho", "rho_prime", "varrho", "bound_full", "bound_bandit",
    "gamma", "lambda", "mean_abs_err_corrected", "mean_abs_err_baseline",
)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run besides the seed.

    ``world`` is a generator name (``open``, ``rooms``, ``flicker``,
    ``mixed``), ``small:<size>`` for a random walled lattice, a world file
    path, or ``game:<adversary>`` for the synthetic estimation game (sweeps
    only).  ``tau=None`` means automatic: ``T**-0.25`` under bandit feedback
    for the corrected mode, 0 otherwise.
    """

    world: str = "mixed"
    width: int = 24
    height: int = 24
    flicker_p: float = 0.5
    T: int = 1024
    horizon: int = 3
    bins: int = 10
    gain_cap: float = 1.0
    coefficient: float = 4.0
    candidates: int = 8
    max_path_length: int = 5
    tau: float | None = None
    noise: str = "impulse"
    feedback: str = "executed"
    mode: str = "corrected"
    ray_count: int = 64
    max_range: float = 6.0
    burn_in: float = 0.2
    track_perception: bool = False
    execute_exploration: bool = True
    seeds: tuple = tuple(range(20))
    output: str = "runs"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        for name in ("width", "height", "horizon", "bins", "candidates", "max_path_length", "ray_count"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.T < 0:
            raise DomainError("T must be >= 0")
        if self.gain_cap <= 0 or self.coefficient <= 0 or self.max_range <= 0:
            raise DomainError("gain_cap, coefficient and max_range must be positive")
        if self.tau is not None and not 0 < self.tau < 0.5:
            raise DomainError(f"tau override must lie in (0, 0.5), got {self.tau}")
        if not 0 <= self.flicker_p <= 1 or not 0 <= self.burn_in < 1:
            raise DomainError("flicker_p must lie in [0, 1] and burn_in in [0, 1)")
        if self.noise not in NOISE_MODELS:
            raise DomainError(f"noise must be one of {NOISE_MODELS}")
        if self.feedback not in FEEDBACK:
            raise DomainError(f"feedback must be one of {FEEDBACK}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")

    # -- flat "key = value" file format

    def dumps(self) -> str:
        out = []
        for fld in fields(self):
            v = getattr(self, fld.name)
            if v is None:
                text = "auto"
            elif isinstance(v, tuple):
                text = ", ".join(str(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            out.append(f"{fld.name} = {text}")
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        kinds = {fld.name: fld.type for fld in fields(cls)}
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"line {n}: expected 'key = value'")
            key, raw = (p.strip() for p in line.split("=", 1))
            if key not in kinds:
                raise DomainError(f"line {n}: unknown key {key!r}")
            values[key] = _parse(key, raw, kinds[key])
        return cls(**values)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def replace(self, **changes) -> "ExperimentConfig":
        data = {fld.name: getattr(self, fld.name) for fld in fields(self)}
        data.update(changes)
        return ExperimentConfig(**data)

    def effective_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        if self.mode == "corrected" and self.feedback == "bandit":
            return randomization_level(max(self.T, 1))
        return 0.0

    def planner(self) -> PlannerConfig:
        return PlannerConfig(self.candidates, self.horizon, self.max_path_length, self.effective_tau())

    def sensor(self) -> SensorConfig:
        return SensorConfig(ray_count=self.ray_count, max_range=self.max_range)


def _parse(key, raw, kind):
    kind = str(kind)
    if key == "seeds":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if key == "tau":
        return None if raw.lower() in ("auto", "none", "") else float(raw)
    if "bool" in kind:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise DomainError(f"{key}: not a boolean: {raw!r}")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def build_world(config: ExperimentConfig, seed: int) -> World:
    spec = config.world
    if spec in WORLD_KINDS:
        return make_world(spec, seed, config.width, config.height, flicker_p=config.flicker_p)
    if spec.startswith("small:"):
        from .gridworld import random_small_world

        return random_small_world(int(spec.split(":", 1)[1]), np.random.default_rng(seed))
    if spec.startswith("game:"):
        raise DomainError("the synthetic game has no world; use sweep")
    path = Path(spec)
    if not path.exists():
        raise DomainError(f"unknown world {spec!r}")
    world = World.load(path, config.flicker_p)
    if world.start is None:
        free = world.free_cells()
        if len(free) == 0:
            raise DomainError("world has no free cell")
        c = free[int(np.random.default_rng(seed).integers(len(free)))]
        world.start = (int(c[0]), int(c[1]))
    return world


@dataclass
class EpisodeLog:
    config: ExperimentConfig
    seed: int
    records: list = field(default_factory=list)
    belief: OccupancyGrid | None = None
    f: ImprovementFunction | None = None
    ledger: RegretLedger = field(default_factory=RegretLedger)
    bursts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    aborted: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    def errors(self, which: str = "estimate", burn_in: float | None = None) -> np.ndarray:
        """Absolute errors against the clamped realized gain after the burn-in.

        ``which="estimate"`` uses the value the planner scored with,
        ``which="raw"`` the raw expected gain.
        """
        burn_in = self.config.burn_in if burn_in is None else burn_in
        start = int(math.floor(burn_in * len(self.records)))
        cap = self.config.gain_cap
        out = []
        for rec in self.records[start:]:
            target = min(max(rec.r_star, 0.0), cap)
            guess = rec.estimate if which == "estimate" else rec.r
            out.append(abs(guess - target))
        return np.asarray(out)

    def mean_abs_error(self, which: str = "estimate", burn_in: float | None = None) -> float:
        e = self.errors(which, burn_in)
        return float(e.mean()) if e.size else float("nan")

    @property
    def cumulative_gain(self) -> float:
        """Total realized entropy reduction in bits."""
        return float(sum(rec.r_star * rec.normalizer for rec in self.records))

    def perception(self):
        return perception_regret(self.bursts, self.ledger, self.config.horizon, self.config.bins, len(self.records))

    def records_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        cols = [fld.name for fld in fields(StepRecord)]
        w.writerow(cols)
        for rec in self.records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(rec, c) for c in cols)])
        return out.getvalue()

    def digest(self) -> str:
        """Hash of every deterministic output (records, belief, table, ledger, bursts)."""
        h = hashlib.sha256()
        h.update(self.records_csv().encode())
        if self.belief is not None:
            h.update(self.belief.logodds.tobytes())
        if self.f is not None:
            h.update(self.f.offsets.tobytes())
            h.update(self.f.counts.tobytes())
        for c in self.ledger.cells():
            h.update(repr(c).encode())
            h.update(self.ledger.discrepancies(c).tobytes())
            h.update(self.ledger.predictions(c).tobytes())
        for b in self.bursts:
            h.update(repr(b).encode())
        h.update(repr(self.aborted).encode())
        return h.hexdigest()


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(5)]


def _execute(belief, world, start_pose, path: CandidatePath, steps, sensor, noise, world_rng, noise_rng):
    """Walk ``path`` for ``steps`` steps; returns per-step ``(pose, bits)``.

    Before each step the flicker cells are re-drawn; a move into a cell that
    is occupied in the truth is refused and the robot stays put for the rest
    of the burst.
    """
    out = []
    pose = start_pose
    blocked = False
    for s in range(steps):
        world.step(world_rng)
        if not blocked:
            x, y = path.cells[s]
            if world.occupied[x, y]:
                blocked = True
            else:
                pose = path.poses[s]
        bits, _, _ = observe_and_update(belief, world, pose, sensor, noise, noise_rng)
        out.append((pose, bits))
    return out


def run_episode(config: ExperimentConfig, seed: int, world: World | None = None) -> EpisodeLog:
    """Run one episode of ``config.T`` steps.

    Raises :class:`PlanningError` (with the partial log attached as
    ``.log``) when the robot has no feasible path.
    """
    world = build_world(config, seed) if world is None else world.copy()
    world_rng, noise_rng, plan_rng, cf_rng, init_rng = _streams(seed)
    sensor = config.sensor()
    pcfg = config.planner()
    tau = pcfg.tau
    learn = config.mode == "corrected"
    f = ImprovementFunction(config.horizon, config.bins, config.gain_cap, config.coefficient)
    belief = OccupancyGrid(world.width, world.height, world.resolution)
    log = EpisodeLog(config, seed, belief=belief, f=f)
    timings = {"plan": 0.0, "sense": 0.0, "update": 0.0, "comparator": 0.0}
    log.timings = timings

    pose = Pose.at_cell(*world.start, world.resolution)
    trail = np.zeros((world.width, world.height), dtype=bool)
    trail[world.start] = True
    if config.T > 0:
        # initial scan so the robot knows some free space around it
        observe_and_update(belief, world, pose, sensor, config.noise, init_rng)

    t = 0
    waiting = 0
    while t < config.T:
        tic = time.perf_counter()
        try:
            cands = sample_candidates(belief, pose, pcfg, plan_rng, trail)
            waiting = 0
        except PlanningError as err:
            # boxed in by the belief (often spurious hits): stay and re-sense
            waiting += 1
            if waiting > MAX_WAIT_BURSTS:
                log.aborted = str(err)
                err.log = log
                raise
            cell = pose.cell(world.resolution)
            cands = [CandidatePath((cell,) * config.horizon, (pose,) * config.horizon)]
        scorer = Scorer(belief, sensor)
        scored = [scorer.score(c, f if learn else None) for c in cands]
        n = len(scored)
        if config.mode == "random":
            idx, explored = int(plan_rng.integers(n)), True
            probs = np.full(n, 1.0 / n)
        else:
            idx, _, explored = select_path(scored, tau, plan_rng)
            probs = path_probabilities(scored, tau)
            if explored and not config.execute_exploration:
                # the randomized pick only feeds the bookkeeping; the greedy path is driven
                idx, explored = int(np.argmax(probs)), False
        chosen = scored[idx]
        timings["plan"] += time.perf_counter() - tic

        steps = min(config.horizon, config.T - t)
        plan_belief = belief.copy() if (config.feedback != "executed" or config.track_perception) else None
        plan_world = world.copy() if plan_belief is not None else None

        if config.track_perception and not waiting:
            tic = time.perf_counter()
            start = pose.cell(world.resolution)
            _, best_val = exhaustive_best_path(plan_belief, plan_world, pose, pcfg, sensor)
            chosen_val, _ = realized_path_gain(plan_belief, plan_world, chosen.cells, start, sensor)
            best_score = best_score_over_all(plan_belief, pose, pcfg, sensor, f if learn else None)
            log.bursts.append(BurstOutcome(t, best_val, chosen_val, chosen.total, best_score))
            timings["comparator"] += time.perf_counter() - tic

        tic = time.perf_counter()
        plan_pose = pose
        walked = _execute(belief, world, pose, chosen, steps, sensor, config.noise, world_rng, noise_rng)
        timings["sense"] += time.perf_counter() - tic

        tic = time.perf_counter()
        # (candidate index, position, r, r_star) for every measurement revealed this burst
        revealed = []
        for s, (p_s, bits) in enumerate(walked):
            norm = chosen.normalizers[s]
            r_star = bits / norm if norm else 0.0
            rec = StepRecord(
                t=t + s, s=s, r=chosen.raw[s], r_star=r_star, bin=f.bin(chosen.raw[s]),
                executed=True, p=float(probs[idx]), estimate=chosen.corrected[s],
                normalizer=int(norm), explored=explored,
            )
            log.records.append(rec)
            revealed.append((idx, s, rec.r, r_star))
            pose = p_s
            trail[pose.cell(world.resolution)] = True
        if config.feedback != "executed":
            for i, cand in enumerate(scored):
                if i == idx:
                    continue
                cf = _execute(plan_belief.copy(), plan_world.copy(), plan_pose, cand, steps, sensor,
                              config.noise, cf_rng, cf_rng)
                for s, (_, bits) in enumerate(cf):
                    norm = cand.normalizers[s]
                    revealed.append((i, s, cand.raw[s], bits / norm if norm else 0.0))
            revealed.sort(key=lambda x: (x[0], x[1]))
        for i, s, r, r_star in revealed:
            executed = i == idx
            k = f.bin(r)
            target = min(max(r_star, 0.0), config.gain_cap)
            if learn:
                if config.feedback == "bandit":
                    w = 1.0 / probs[i] if executed else 0.0
                else:
                    w = 1.0
                prediction = -float(f.offsets[s, k - 1])
                f.update(s, r, r_star, weight=w)
            else:
                prediction = 0.0
            log.ledger.record(s, k, f.clamp(r) - target, prediction, float(probs[i]), executed)
        timings["update"] += time.perf_counter() - tic
        t += steps
    return log


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    rows: list
    fit: object | None
    csv_path: Path | None = None
    note: str = ""

    def means(self, column: str = "rho") -> dict:
        out = {}
        for T in sorted({r["T"] for r in self.rows}):
            out[T] = mean_and_se([r[column] for r in self.rows if r["T"] == T])
        return out


def _row_from_game(config: ExperimentConfig, T: int, seed: int) -> dict:
    adversary = config.world.split(":", 1)[1] or "biased"
    feedback = "bandit" if config.feedback == "bandit" else "full"
    g = play_game(T, config.candidates, config.horizon, config.bins, adversary, feedback, seed,
                  tau=config.tau, gain_cap=config.gain_cap, coefficient=config.coefficient)
    report = perception_regret(g.bursts, g.ledger, config.horizon, config.bins, T)
    losses = np.concatenate([g.ledger.losses(c) for c in g.ledger.cells()]) if len(g.ledger) else np.zeros(0)
    raw = np.concatenate([np.abs(g.ledger.discrepancies(c)) for c in g.ledger.cells()]) if len(g.ledger) else np.zeros(0)
    return _row(config, T, seed, g.ledger, report.varrho, report.gamma, g.tau,
                float(losses.mean()) if losses.size else float("nan"),
                float(raw.mean()) if raw.size else float("nan"))


def _row(config, T, seed, ledger, varrho, gamma, tau, err_c, err_b) -> dict:
    cells = config.horizon * config.bins
    beta, n = config.gain_cap, config.candidates
    bound_bandit = (
        cells * (n * beta * (n * math.sqrt(T) + 1) / tau + tau * beta * T) if tau > 0 else float("inf")
    )
    return {
        "T": int(T),
        "seed": int(seed),
        "rho": ledger.rho,
        "rho_prime": ledger.rho_prime,
        "varrho": varrho,
        "bound_full": cells * beta * (n * math.sqrt(T) + 1),
        "bound_bandit": bound_bandit,
        "gamma": gamma,
        "lambda": ledger.lam if len(ledger) else 0.0,
        "mean_abs_err_corrected": err_c,
        "mean_abs_err_baseline": err_b,
    }


def _row_from_episode(config: ExperimentConfig, T: int, seed: int) -> dict:
    log = run_episode(config.replace(T=T), seed)
    if log.bursts:
        rep = log.perception()
        varrho, gamma = rep.varrho, rep.gamma
    else:
        varrho, gamma = float("nan"), float("nan")
    return _row(config, T, seed, log.ledger, varrho, gamma, log.config.effective_tau(),
                log.mean_abs_error("estimate"), log.mean_abs_error("raw"))


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def sweep(config: ExperimentConfig, T_values, seeds=None, csv_path=None) -> SweepResult:
    """Run every ``(T, seed)`` pair, write the CSV and fit the log-log regret slope.

    The fit is skipped (``fit=None``, with a note) when fewer than three
    distinct ``T`` values were given or a mean regret is not positive.
    """
    seeds = config.seeds if seeds is None else tuple(seeds)
    game = config.world.startswith("game:")
    rows = []
    for T in T_values:
        for seed in seeds:
            rows.append(_row_from_game(config, T, seed) if game else _row_from_episode(config, T, seed))
    result = SweepResult(rows, None)
    if csv_path is not None:
        result.csv_path = write_csv(rows, csv_path)
    means = result.means("rho")
    try:
        result.fit = fit_loglog_slope(list(means), [m for m, _ in means.values()])
    except DomainError as err:
        result.note = f"no slope fit: {err}"
    return result


# ---------------------------------------------------------------------------
# paired mode comparison


@dataclass
class ModeComparison:
    seeds: tuple
    metrics: dict  # mode -> metric -> per-seed array

    def mean_se(self, mode: str, metric: str) -> tuple[float, float]:
        return mean_and_se(self.metrics[mode][metric])

    def paired(self, a: str, b: str, metric: str, alternative: str = "two-sided"):
        """Mean and standard error of ``a - b`` and the paired t-test p-value."""
        x = np.asarray(self.metrics[a][metric])
        y = np.asarray(self.metrics[b][metric])
        d = x - y
        m, se = mean_and_se(d)
        if len(d) < 2 or np.all(d == d[0]):
            p = 0.0 if (alternative == "greater" and m > 0) or (alternative == "less" and m < 0) else 1.0
        else:
            p = float(stats.ttest_rel(x, y, alternative=alternative).pvalue)
        return m, se, p

    def error_reduction(self, a: str = "corrected", b: str = "raw-baseline") -> float:
        """Relative drop of mean post-burn-in error of ``a`` against ``b``."""
        ea = float(np.mean(self.metrics[a]["error"]))
        eb = float(np.mean(self.metrics[b]["error"]))
        return 1.0 - ea / eb if eb > 0 else float("nan")

    def report(self) -> str:
        lines = [f"paired comparison over {len(self.seeds)} seeds"]
        for mode, m in self.metrics.items():
            parts = []
            for metric in m:
                mu, se = self.mean_se(mode, metric)
                parts.append(f"{metric} {mu:.4f} +/- {se:.4f}")
            lines.append(f"  {mode:13s} " + ", ".join(parts))
        if "corrected" in self.metrics and "raw-baseline" in self.metrics:
            d, se, p = self.paired("corrected", "raw-baseline", "gain", "greater")
            lines.append(f"  error reduction corrected vs raw: {100 * self.error_reduction():.1f}%")
            lines.append(f"  gain difference corrected - raw: {d:.3f} +/- {se:.3f} bits (one-sided p = {p:.3g})")
        return "\n".join(lines) + "\n"


def compare_modes(config: ExperimentConfig, seeds=None, modes=MODES) -> ModeComparison:
    """Run each mode on the same worlds and seeds.

    Per seed and mode: post-burn-in mean absolute error of the estimate the
    planner used, cumulative realized gain (bits) and, when tracked,
    perception regret.
    """
    seeds = config.seeds if seeds is None else tuple(seeds)
    metrics = {}
    for mode in modes:
        cfg = config.replace(mode=mode)
        err, gain, varrho = [], [], []
        for seed in seeds:
            log = run_episode(cfg, seed)
            err.append(log.mean_abs_error("estimate"))
            gain.append(log.cumulative_gain)
            if log.bursts:
                varrho.append(log.perception().varrho)
        metrics[mode] = {"error": np.array(err), "gain": np.array(gain)}
        if varrho:
            metrics[mode]["varrho"] = np.array(varrho)
    return ModeComparison(seeds, metrics)


def summary(log: EpisodeLog) -> str:
    """Human-readable summary of one episode."""
    cfg = log.config
    lines = [
        f"world {cfg.world}, seed {log.seed}, mode {cfg.mode}, feedback {cfg.feedback}, T {cfg.T}",
        f"steps recorded        {len(log.records)}",
        f"cumulative gain       {log.cumulative_gain:.3f} bits",
        f"mean |error| estimate {log.mean_abs_error('estimate'):.4f} (after {cfg.burn_in:.0%} burn-in)",
        f"mean |error| raw      {log.mean_abs_error('raw'):.4f}",
        f"regret rho            {log.ledger.rho:.4f}",
        f"rho'                  {log.ledger.rho_prime:.4f}",
    ]
    if log.bursts:
        rep = log.perception()
        lines += [
            f"perception regret     {rep.varrho:.4f}",
            f"gamma                 {rep.gamma:.4f}",
            f"bound 4(rho+rho')+D   {rep.bound:.4f} ({'holds' if rep.holds else 'VIOLATED'})",
        ]
    if log.aborted:
        lines.append(f"aborted: {log.aborted}")
    lines.append("wall clock " + ", ".join(f"{k} {v:.2f}s" for k, v in log.timings.items()))
    return "\n".join(lines) + "\n"
