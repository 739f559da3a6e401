"""Command-line entry point: ``specgain run | sweep | compare | verify-bounds``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path


from . import estimator
from .harness import FEEDBACK, MODES, ExperimentConfig, compare_modes, run_episode, summary, sweep
from .gridworld import NOISE_MODELS
from .planner import PlanningError
from .regret import (
    check_bandit_bound,
    check_full_info_bound,
    estimation_regret,
    fit_loglog_slope,
    mean_and_se,
    play_game,
)

# flag name -> (config field, type, help)
_FLAGS = {
    "world": (str, "scenario name (open, rooms, flicker, mixed), small:<n>, game:<adversary> or world file"),
    "width": (int, "generated world width in cells"),
    "height": (int, "generated world height in cells"),
    "flicker_p": (float, "occupancy probability of flicker cells"),
    "T": (int, "episode length in steps"),
    "horizon": (int, "burst length (positions per plan)"),
    "bins": (int, "expected-gain bins of the improvement function"),
    "gain_cap": (float, "gain cap beta"),
    "coefficient": (float, "update coefficient c (4: published update, 2: exact FTRL)"),
    "candidates": (int, "candidate paths per plan (N)"),
    "max_path_length": (int, "planning window half-width in lattice steps"),
    "tau": (str, "exploration level, or 'auto'"),
    "noise": (str, "depth noise: " + ", ".join(NOISE_MODELS)),
    "feedback": (str, "estimator feedback: " + ", ".join(FEEDBACK)),
    "mode": (str, "planner mode: " + ", ".join(MODES)),
    "ray_count": (int, "rays per scan"),
    "max_range": (float, "sensor range in meters"),
    "burn_in": (float, "fraction of steps ignored by error statistics"),
    "output": (str, "output directory"),
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file; flags override it")
    for name, (kind, help_) in _FLAGS.items():
        flag = "-T" if name == "T" else "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, type=kind, default=None, help=help_)
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="seed list")
    p.add_argument("--track-perception", dest="track_perception", action="store_true", default=None,
                   help="compute the exhaustive comparator each burst (small worlds only)")
    p.add_argument("--no-execute-exploration", dest="execute_exploration", action="store_false", default=None,
                   help="keep randomized picks for bookkeeping but drive the greedy path")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    for fld in fields(ExperimentConfig):
        v = getattr(args, fld.name, None)
        if v is None:
            continue
        if fld.name == "tau":
            v = None if str(v).lower() == "auto" else float(v)
        changes[fld.name] = tuple(v) if fld.name == "seeds" else v
    return cfg.replace(**changes)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    cfg.save(out / "config.txt")
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds[:1])
    status = 0
    for seed in seeds:
        try:
            log = run_episode(cfg, seed)
        except PlanningError as err:
            log = err.log
            status = 2
        stem = out / f"episode_seed{seed}"
        Path(f"{stem}_steps.csv").write_text(log.records_csv())
        estimator.save(log.f, f"{stem}_f.txt")
        Path(f"{stem}_belief.csv").write_text(log.belief.to_csv())
        text = summary(log)
        Path(f"{stem}_summary.txt").write_text(text)
        print(text, end="")
    return status


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    cfg.save(out / "config.txt")
    res = sweep(cfg, args.T_values, csv_path=out / "sweep.csv")
    lines = [f"sweep over T = {list(args.T_values)}, {len(cfg.seeds)} seeds, world {cfg.world}, feedback {cfg.feedback}"]
    for T, (m, se) in res.means("rho").items():
        lines.append(f"  T {T:6d}  mean rho {m:12.4f} +/- {se:.4f}")
    if res.fit is not None:
        f = res.fit
        lines.append(f"  log-log slope {f.slope:.3f} (95% CI {f.ci_low:.3f} .. {f.ci_high:.3f})")
    else:
        lines.append("  " + res.note)
    text = "\n".join(lines) + "\n"
    (out / "sweep_summary.txt").write_text(text)
    print(text, end="")
    print(f"wrote {res.csv_path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    cfg.save(out / "config.txt")
    cmp = compare_modes(cfg)
    text = cmp.report()
    (out / "compare.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_verify(args) -> int:
    """Full-information and bandit bound checks on the synthetic game."""
    cfg = _config(args)
    failures = 0
    lines = []
    for adversary in ("alternating", "random_sign"):
        for n in args.N_values:
            for T in args.T_values:
                g = play_game(T, n, 1, 1, adversary, "full", seed=cfg.seeds[0], gain_cap=cfg.gain_cap,
                              coefficient=cfg.coefficient)
                per_cell, _ = estimation_regret(g.ledger, g.f.counts)
                chk = check_full_info_bound(per_cell, cfg.gain_cap, n, g.ledger.counts())
                failures += not chk.passed
                lines.append(f"full    {adversary:11s} N {n:3d} T {T:6d}  "
                             f"{'PASS' if chk.passed else 'FAIL'}  margin {chk.margin:10.3f}")
    # bandit feedback on a single cell per N: the appendix lemma bounds per-cell regret
    adversary = cfg.world.split(":", 1)[1] if cfg.world.startswith("game:") else "biased"
    for n in args.N_values:
        means = []
        for T in args.T_values:
            rhos = [play_game(T, n, 1, 1, adversary, "bandit", seed=s, tau=cfg.tau,
                              gain_cap=cfg.gain_cap, coefficient=cfg.coefficient).rho for s in cfg.seeds]
            m, se = mean_and_se(rhos)
            means.append(m)
            chk = check_bandit_bound(m, se, cfg.gain_cap, n, T, cfg.tau, horizon=1)
            failures += not chk.passed
            lines.append(f"bandit  {adversary:11s} N {n:3d} T {T:6d}  "
                         f"{'PASS' if chk.passed else 'FAIL'}  mean {m:.2f} +/- {se:.2f}  "
                         f"margin(N) {chk.margin:.1f}  margin(N^dt) {chk.margin_power:.1f}")
        if len(set(args.T_values)) >= 3 and all(m > 0 for m in means):
            fit = fit_loglog_slope(args.T_values, means)
            ok = fit.ci_high <= args.max_slope
            failures += not ok
            lines.append(f"slope   N {n:3d}  {fit.slope:.3f} (95% CI upper {fit.ci_high:.3f}, "
                         f"limit {args.max_slope})  {'PASS' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.output:
        out = _outdir(cfg)
        (out / "verify_bounds.txt").write_text(text)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specgain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode and write its step log, table and summary")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=None, help="single seed (default: first of --seeds)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="regret sweep over T and seeds, CSV plus slope fit")
    _add_config_flags(p)
    p.add_argument("--T-values", dest="T_values", type=int, nargs="+", default=[64, 256, 1024, 4096])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="paired comparison of corrected, raw-baseline and random modes")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify-bounds", help="check the regret bounds; nonzero exit on any failure")
    _add_config_flags(p)
    p.add_argument("--T-values", dest="T_values", type=int, nargs="+", default=[64, 256, 1024, 4096])
    p.add_argument("--N-values", dest="N_values", type=int, nargs="+", default=[2, 10])
    p.add_argument("--max-slope", dest="max_slope", type=float, default=0.80)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except estimator.DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
