"""Command-line entry point.

::

    curriculab run <config> [--seeds 0,1] [--out DIR] [--workers N] [--iterations N]
    curriculab compare <config> <config>... [--out DIR] [...]
    curriculab eval <checkpoint> <config> [--out DIR]
    curriculab plot <logdir>

Output directories default to ``$CURRICULAB_OUT/<name>`` when the variable
is set. Exit codes: 0 ok, 2 bad config or arguments, 3 training diverged,
4 output not writable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from .config import ConfigError, RunConfig

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OUTPUT = 0, 2, 3, 4
OUT_ENV = "CURRICULAB_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="curriculab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def overrides(sp):
        sp.add_argument("--seeds", type=_seeds, help="comma-separated seeds (overrides run.seeds)")
        sp.add_argument("--out", help="output directory (overrides run.output_dir)")
        sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        sp.add_argument("--iterations", type=int, help="overrides run.n_iterations")

    sp = sub.add_parser("run", help="train every seed of one configuration")
    sp.add_argument("config")
    overrides(sp)

    sp = sub.add_parser("compare", help="run several configurations on one preset and tabulate")
    sp.add_argument("configs", nargs="+")
    overrides(sp)

    sp = sub.add_parser("eval", help="evaluate a saved policy")
    sp.add_argument("checkpoint")
    sp.add_argument("config")
    sp.add_argument("--seeds", type=_seeds)
    sp.add_argument("--out")

    sp = sub.add_parser("plot", help="render SVG figures from a run directory")
    sp.add_argument("logdir")
    return p


def _default_out(cfg: RunConfig, path: str) -> str:
    root = os.environ.get(OUT_ENV)
    if root and cfg.output_dir == RunConfig().output_dir:
        return str(Path(root) / Path(path).stem)
    return cfg.output_dir


def _load(path: str, args) -> RunConfig:
    cfg = config_mod.load(path)
    changes = {"output_dir": _default_out(cfg, path)}
    if getattr(args, "seeds", None):
        changes["seeds"] = args.seeds
    if getattr(args, "iterations", None):
        changes["n_iterations"] = args.iterations
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    try:
        return cfg.replace(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_run(args) -> int:
    from .runner import run_experiment

    cfg = _load(args.config, args)
    runlog = run_experiment(cfg, workers=args.workers)
    for s in runlog.seeds:
        print(f"seed {s.seed}: final success rate {s.final_report.success_rate:.3f}")
    print(f"results in {cfg.output_dir}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .runner import compare

    cfgs = [_load(p, args) for p in args.configs]
    out = args.out or (str(Path(os.environ[OUT_ENV]) / "compare") if OUT_ENV in os.environ else "runs/compare")
    try:
        comp = compare(cfgs, out, workers=args.workers)
    except ValueError as exc:
        if isinstance(exc, ConfigError) or "differ" in str(exc):
            raise ConfigError(str(exc)) from None
        raise
    for label, runlog in zip(comp.labels, comp.logs):
        rates = [s.final_report.success_rate for s in runlog.seeds]
        print(f"{label:>10s}: mean final success rate {sum(rates) / len(rates):.3f}")
    print(f"tables in {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .learner import loads_checkpoint
    from .metrics import evaluate_policy
    from .presets import make_env
    from .runner import _write_csv
    from .seeding import Streams

    cfg = _load(args.config, args)
    try:
        policy = loads_checkpoint(Path(args.checkpoint).read_bytes())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    bundle = make_env(cfg.env_preset)
    if (policy.obs_dim, policy.act_dim) != (bundle.obs_dim, bundle.act_dim):
        raise ConfigError(f"checkpoint shape {(policy.obs_dim, policy.act_dim)} does not fit preset {cfg.env_preset}")
    seed = cfg.seeds[0]
    rep = evaluate_policy(policy, bundle.space, bundle.env, cfg.n_eval_per_task, Streams(seed))
    print(f"success rate {rep.success_rate:.3f} ({len(rep.mastered)}/{rep.size} tasks)")
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_csv(out / "eval.csv", ["task_index", "success", "mean_reward", "mean_epte_sp", "n_episodes"],
                       ((i, rep.success[i], rep.mean_reward[i], rep.mean_epte_sp[i], rep.n_episodes)
                        for i in range(rep.size)))
        except OSError as exc:
            print(f"error: cannot write {out}: {exc}", file=sys.stderr)
            return EXIT_OUTPUT
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import render_logdir

    try:
        paths = render_logdir(Path(args.logdir))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    from .runner import RunAborted

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "compare": _cmd_compare, "eval": _cmd_eval, "plot": _cmd_plot}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
