"""Multi-seed training runs, method comparison and figure data.

Per-seed files (``<out>/seed_<s>/``):

``distributions.csv``  stage, task_index, prob, reward_est, lp, score
``heatmap.csv``        stage, p0 .. p{N-1}  (one row per stage)
``reward_curves.csv``  iteration, task_index, reward_ema
``train.csv``          iteration, mean_episodic_reward, pg_loss, v_loss, entropy
``eval.csv``           task_index, success, mean_reward, mean_epte_sp, n_episodes  (final evaluation)
``eval_history.csv``   iteration, task_index, success, mean_reward, mean_epte_sp
``success_rate.csv``   iteration, success_rate, mean_reward_on_final_set
``policy.ckpt``        final policy (see :mod:`curriculab.learner` for the layout)

Run-level files (``<out>/``): ``config.cfg``, ``summary.csv``
(seed, final_success_rate, final_mean_reward_on_success_set) and
``epte_by_task.csv`` (task_index, mean, min, max across seeds).

The "final set" is the set of tasks mastered at the last evaluation of
the same seed, so ``success_rate.csv`` traces how reward on the eventually
mastered tasks developed.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as config_mod
from .config import ConfigError, RunConfig
from .curriculum import Scheduler
from .learner import (
    DivergenceError,
    LearnerConfig,
    PolicyState,
    collect_rollouts,
    dumps_checkpoint,
    init_policy,
    update_policy,
)
from .metrics import SuccessReport, aggregate_seeds, evaluate_policy
from .presets import make_env
from .seeding import Streams
from .task_space import TaskSpace

log = logging.getLogger(__name__)

REWARD_CURVE_ALPHA = 0.1


class RunAborted(RuntimeError):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class SeedLog:
    seed: int
    size: int
    distributions: list[dict] = field(default_factory=list)
    reward_curves: list[tuple[int, np.ndarray]] = field(default_factory=list)
    train: list[dict] = field(default_factory=list)
    evals: list[tuple[int, SuccessReport]] = field(default_factory=list)
    policy: PolicyState | None = None
    diverged: str | None = None

    @property
    def heatmap(self) -> np.ndarray:
        stages = sorted({r["stage"] for r in self.distributions})
        mat = np.zeros((len(stages), self.size))
        for r in self.distributions:
            mat[r["stage"], r["task_index"]] = r["prob"]
        return mat

    @property
    def final_report(self) -> SuccessReport | None:
        return self.evals[-1][1] if self.evals else None

    @property
    def final_set(self) -> frozenset[int]:
        rep = self.final_report
        return rep.mastered if rep is not None else frozenset()

    def success_curve(self, reference: frozenset[int] | None = None) -> list[tuple[int, float, float]]:
        ref = self.final_set if reference is None else reference
        return [(it, rep.success_rate, rep.mean_reward_on(ref)) for it, rep in self.evals]


@dataclass
class RunLog:
    config: RunConfig
    space: TaskSpace
    seeds: list[SeedLog]


# ---------------------------------------------------------------------------
# training


def run_seed(cfg: RunConfig, seed: int, workers: int = 1) -> SeedLog:
    """Train one seed. Never raises on divergence; the log records it instead."""
    streams = Streams(seed)
    bundle = make_env(cfg.env_preset)
    space, env = bundle.space, bundle.env
    lcfg: LearnerConfig = cfg.learner
    policy = init_policy(bundle.obs_dim, bundle.act_dim, bundle.action_kind, streams.generator("init"),
                         hidden=lcfg.hidden, init_log_std=lcfg.init_log_std)
    sched = Scheduler(space, cfg.scheduler)
    slog = SeedLog(seed, space.size)
    slog.distributions.extend(sched.snapshot())
    curve = np.full(space.size, np.nan)
    batch_size = max(1, math.ceil(cfg.episodes_per_iteration / max(1, workers)))
    stage_len = cfg.scheduler.stage_len

    for it in range(cfg.n_iterations):
        try:
            dataset, records = collect_rollouts(policy, sched, env, cfg.episodes_per_iteration, streams, it,
                                                lcfg, batch_size=batch_size)
            sched.record_episodes(records)
            for rec in records:
                i = rec.task_index
                if np.isnan(curve[i]):
                    curve[i] = rec.episodic_reward
                else:
                    curve[i] += REWARD_CURVE_ALPHA * (rec.episodic_reward - curve[i])
            slog.reward_curves.append((it, curve.copy()))
            policy, stats = update_policy(policy, dataset, lcfg, streams.generator("update", it))
        except DivergenceError as exc:
            slog.diverged = f"iteration {it}: {exc}"
            log.error("seed %d diverged at iteration %d: %s", seed, it, exc)
            break
        slog.train.append({
            "iteration": it,
            "mean_episodic_reward": float(np.mean([r.episodic_reward for r in records])),
            "pg_loss": stats.get("pg_loss", 0.0),
            "v_loss": stats.get("v_loss", 0.0),
            "entropy": stats.get("entropy", 0.0),
        })
        done = it + 1
        if done % stage_len == 0:
            sched.advance_stage(done)
            slog.distributions.extend(sched.snapshot())
        if (cfg.eval_every and done % cfg.eval_every == 0) or done == cfg.n_iterations:
            rep = evaluate_policy(policy, space, env, cfg.n_eval_per_task, streams, batch_size=batch_size)
            slog.evals.append((done, rep))
            log.info("seed %d it %d success %.3f", seed, done, rep.success_rate)
    slog.policy = policy
    return slog


def _run_seed_job(args):
    cfg, seed, workers = args
    return run_seed(cfg, seed, workers)


def run_experiment(cfg: RunConfig, workers: int = 1, write: bool = True) -> RunLog:
    """Train every seed, write all CSVs, and return the log.

    Seeds run in separate processes when ``workers > 1``; the result is
    the same for any worker count.
    """
    space = make_env(cfg.env_preset).space
    try:
        Scheduler(space, cfg.scheduler)
    except ValueError as exc:
        raise ConfigError(f"scheduler.kind {cfg.scheduler.kind.value} on {cfg.env_preset}: {exc}") from None
    out = Path(cfg.output_dir)
    if write:
        _prepare_dir(out)
    jobs = [(cfg, s, workers) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            seeds = list(pool.map(_run_seed_job, jobs))
    else:
        seeds = [_run_seed_job(j) for j in jobs]
    runlog = RunLog(cfg, space, seeds)
    if write:
        write_run(runlog, out)
    diverged = [s for s in seeds if s.diverged]
    if diverged:
        raise RunAborted(f"seed {diverged[0].seed} diverged at {diverged[0].diverged}", exit_code=3)
    return runlog


def _prepare_dir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RunAborted(f"output directory {out} is not writable: {exc}", exit_code=4) from None


# ---------------------------------------------------------------------------
# files


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def emit_plot_data(slog: SeedLog, out: Path, render: bool = False) -> list[Path]:
    """Figure-ready CSVs (and optionally SVGs) for one seed; a pure function of the log."""
    if not slog.distributions or not slog.evals:
        raise ValueError(f"incomplete log for seed {slog.seed}: missing distributions or evaluations")
    out.mkdir(parents=True, exist_ok=True)
    heat = slog.heatmap
    paths = [out / "heatmap.csv", out / "reward_curves.csv", out / "success_rate.csv"]
    _write_csv(paths[0], ["stage"] + [f"p{i}" for i in range(slog.size)],
               ([j, *row] for j, row in enumerate(heat)))
    _write_csv(paths[1], ["iteration", "task_index", "reward_ema"],
               ((it, i, v[i]) for it, v in slog.reward_curves for i in range(slog.size)))
    _write_csv(paths[2], ["iteration", "success_rate", "mean_reward_on_final_set"], slog.success_curve())
    if render:
        from .plots import render_seed_plots

        paths += render_seed_plots(out)
    return paths


def write_seed(slog: SeedLog, out: Path, render: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "distributions.csv", ["stage", "task_index", "prob", "reward_est", "lp", "score"],
               ([r["stage"], r["task_index"], r["prob"], r["reward_est"], r["lp"], r["score"]]
                for r in slog.distributions))
    _write_csv(out / "train.csv", ["iteration", "mean_episodic_reward", "pg_loss", "v_loss", "entropy"],
               ([r["iteration"], r["mean_episodic_reward"], r["pg_loss"], r["v_loss"], r["entropy"]]
                for r in slog.train))
    _write_csv(out / "eval_history.csv", ["iteration", "task_index", "success", "mean_reward", "mean_epte_sp"],
               ((it, i, rep.success[i], rep.mean_reward[i], rep.mean_epte_sp[i])
                for it, rep in slog.evals for i in range(rep.size)))
    rep = slog.final_report
    if rep is not None:
        _write_csv(out / "eval.csv", ["task_index", "success", "mean_reward", "mean_epte_sp", "n_episodes"],
                   ((i, rep.success[i], rep.mean_reward[i], rep.mean_epte_sp[i], rep.n_episodes)
                    for i in range(rep.size)))
        emit_plot_data(slog, out, render=render)
    if slog.policy is not None:
        (out / "policy.ckpt").write_bytes(dumps_checkpoint(slog.policy))


def write_run(runlog: RunLog, out: Path) -> None:
    cfg = runlog.config
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.cfg").write_text(config_mod.render(cfg), encoding="utf-8")
        for slog in runlog.seeds:
            write_seed(slog, out / f"seed_{slog.seed}", render=cfg.emit_plots)
        finished = [s for s in runlog.seeds if s.final_report is not None]
        _write_csv(out / "summary.csv", ["seed", "final_success_rate", "final_mean_reward_on_success_set"],
                   ((s.seed, s.final_report.success_rate, s.final_report.mean_reward_on(s.final_set))
                    for s in finished))
        if finished:
            mean, lo, hi = aggregate_seeds([s.final_report.mean_epte_sp for s in finished])
            _write_csv(out / "epte_by_task.csv", ["task_index", "mean", "min", "max"],
                       ((i, mean[i], lo[i], hi[i]) for i in range(len(mean))))
    except OSError as exc:
        raise RunAborted(f"cannot write results to {out}: {exc}", exit_code=4) from None


# ---------------------------------------------------------------------------
# comparison


@dataclass
class Comparison:
    labels: list[str]
    logs: list[RunLog]
    epte_rows: list[tuple]
    success_rows: list[tuple]


def check_comparable(configs: Sequence[RunConfig]) -> None:
    if not configs:
        raise ValueError("nothing to compare")
    ref = configs[0]
    for c in configs[1:]:
        for attr in ("env_preset", "seeds", "n_iterations", "episodes_per_iteration", "eval_every", "n_eval_per_task"):
            if getattr(c, attr) != getattr(ref, attr):
                raise ValueError(f"configs differ in {attr}: {getattr(ref, attr)!r} vs {getattr(c, attr)!r}")


def compare_logs(logs: Sequence[RunLog], labels: Sequence[str]) -> Comparison:
    """Tables over methods; the first method's final success sets are the reference."""
    ref = logs[0]
    ref_sets = {s.seed: s.final_set for s in ref.seeds}
    epte_rows, success_rows = [], []
    for label, runlog in zip(labels, logs):
        reports = [s.final_report for s in runlog.seeds]
        mean, lo, hi = aggregate_seeds([r.mean_epte_sp for r in reports])
        epte_rows += [(label, i, mean[i], lo[i], hi[i]) for i in range(len(mean))]
        curves = [s.success_curve(ref_sets[s.seed]) for s in runlog.seeds]
        iters = [p[0] for p in curves[0]]
        rate = aggregate_seeds([[p[1] for p in c] for c in curves])
        rew = np.nanmean(np.array([[p[2] for p in c] for c in curves], dtype=float), axis=0) \
            if any(ref_sets.values()) else np.full(len(iters), np.nan)
        success_rows += [(label, it, rate[0][k], rate[1][k], rate[2][k], rew[k]) for k, it in enumerate(iters)]
    return Comparison(list(labels), list(logs), epte_rows, success_rows)


def unique_labels(configs: Sequence[RunConfig]) -> list[str]:
    labels, seen = [], {}
    for c in configs:
        base = c.label
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return labels


def compare(configs: Sequence[RunConfig], out: str | Path, workers: int = 1) -> Comparison:
    check_comparable(configs)
    out = Path(out)
    _prepare_dir(out)
    labels = unique_labels(configs)
    logs = [run_experiment(c.replace(output_dir=str(out / label)), workers=workers)
            for c, label in zip(configs, labels)]
    comp = compare_logs(logs, labels)
    try:
        _write_csv(out / "compare_epte.csv", ["method", "task_index", "mean", "min", "max"], comp.epte_rows)
        _write_csv(out / "compare_success.csv",
                   ["method", "iteration", "success_rate_mean", "success_rate_min", "success_rate_max",
                    "mean_reward_on_reference_set"], comp.success_rows)
    except OSError as exc:
        raise RunAborted(f"cannot write comparison to {out}: {exc}", exit_code=4) from None
    return comp
