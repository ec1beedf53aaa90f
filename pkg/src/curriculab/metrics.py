"""Tracking error, EPTE-SP, success classification and seed aggregation.

EPTE-SP charges the tracking error for every step before the first fall
and the worst-case error of 1 for every step after it::

    epte_sp = (eps * k_f + (K - k_f)) / K
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

V_REF = 0.1


@dataclass(frozen=True)
class EpisodeMetrics:
    K: int
    k_f: int
    epsilon: float
    epte_sp: float


@dataclass(frozen=True)
class SuccessReport:
    success: np.ndarray
    mean_reward: np.ndarray
    mean_epte_sp: np.ndarray
    n_episodes: int

    @property
    def size(self) -> int:
        return len(self.success)

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.success))

    @property
    def mastered(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.success))

    @property
    def unmastered(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(~self.success))

    def mean_reward_on(self, tasks) -> float:
        tasks = sorted(tasks)
        if not tasks:
            return float("nan")
        return float(np.mean(self.mean_reward[tasks]))


def tracking_error(commanded, actual, k_f: int, v_ref: float = V_REF) -> float:
    """Mean clipped relative error over the first ``k_f`` steps."""
    if k_f < 0:
        raise ValueError(f"k_f must be non-negative, got {k_f}")
    if k_f == 0:
        return 0.0
    cmd = np.asarray(commanded, dtype=np.float64)[:k_f]
    act = np.asarray(actual, dtype=np.float64)[:k_f]
    if len(cmd) < k_f or len(act) < k_f:
        raise ValueError(f"series shorter than k_f={k_f}")
    rel = np.abs(cmd - act) / np.maximum(np.abs(cmd), v_ref)
    return float(np.mean(np.minimum(1.0, rel)))


def epte_sp(epsilon: float, k_f: int, K: int) -> float:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not 0 <= k_f <= K:
        raise ValueError(f"k_f={k_f} outside [0, {K}]")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon={epsilon} outside [0, 1]")
    return (epsilon * k_f + (K - k_f)) / K


def episode_metrics(traj) -> list[EpisodeMetrics]:
    """One :class:`EpisodeMetrics` per command channel of a trajectory."""
    K, k_f = traj.horizon, traj.fall_step
    out = []
    for c in range(traj.command.shape[1]):
        eps = tracking_error(traj.command[:, c], traj.actual[:, c], min(k_f, traj.length))
        out.append(EpisodeMetrics(K, k_f, eps, epte_sp(eps, k_f, K)))
    return out


def episode_tracking_error(traj) -> float:
    """Worst-channel tracking error of a trajectory."""
    return max(m.epsilon for m in episode_metrics(traj))


def classify_success(metrics: EpisodeMetrics | Sequence[EpisodeMetrics], alive_ratio: float = 0.9,
                     err_threshold: float = 0.30) -> bool:
    """Alive long enough and EPTE-SP under threshold on every channel."""
    if isinstance(metrics, EpisodeMetrics):
        metrics = [metrics]
    return all(m.k_f >= alive_ratio * m.K and m.epte_sp < err_threshold for m in metrics)


def evaluate_policy(policy, space, env, n_eval_per_task: int, streams, alive_ratio: float = 0.9,
                    err_threshold: float = 0.30, batch_size: int | None = None) -> SuccessReport:
    """Deterministic-action evaluation of every task, majority vote per task.

    Episode streams are keyed by (task, episode) only, so repeated
    evaluations see the same commands and hazard draws.
    """
    from .learner import episode_rngs, run_episodes

    if n_eval_per_task < 1:
        raise ValueError("n_eval_per_task must be >= 1")
    tasks, params, rngs = [], [], []
    for i in range(space.size):
        inst = space.instance(i)
        for e in range(n_eval_per_task):
            r_params, r_env, r_pol = episode_rngs(streams, "eval", i, e)
            tasks.append(i)
            params.append(space.draw_params(inst, r_params))
            rngs.append((r_env, r_pol))
    trajs = run_episodes(policy, env, tasks, params, rngs, deterministic=True, train=False, batch_size=batch_size)
    n = space.size
    wins = np.zeros(n, dtype=np.int64)
    reward = np.zeros(n)
    err = np.zeros(n)
    for traj in trajs:
        ms = episode_metrics(traj)
        wins[traj.task_index] += classify_success(ms, alive_ratio, err_threshold)
        reward[traj.task_index] += traj.episodic_reward
        err[traj.task_index] += max(m.epte_sp for m in ms)
    return SuccessReport(
        success=wins * 2 > n_eval_per_task,
        mean_reward=reward / n_eval_per_task,
        mean_epte_sp=err / n_eval_per_task,
        n_episodes=n_eval_per_task,
    )


def aggregate_seeds(series: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise mean, min and max across equal-length per-seed series."""
    if len(series) == 0:
        raise ValueError("need at least one series")
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"series lengths differ: {sorted(lengths)}")
    arr = np.asarray(series, dtype=np.float64)
    return arr.mean(axis=0), arr.min(axis=0), arr.max(axis=0)
