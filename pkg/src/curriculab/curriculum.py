"""Stage-wise task-sampling schedulers.

Every scheduler keeps per-task reward estimates over the current stage and
turns them into a new sampling distribution at each stage boundary::

    c <- (1 - floor_mix) * softmax(score / beta) + floor_mix * uniform

The score depends on the scheduler kind:

* ``LP_ACRL``  signed learning progress, R_j - R_{j-1}
* ``ALP``      absolute learning progress
* ``PLR``      smoothed mean |GAE| (value-prediction error)
* ``LRPC``     negative reward estimate (low reward first)
* ``UNIFORM``  constant
* ``SC``       no score; a sigmoid schedule widens the admitted range of
               the primary continuous dimension with the training iteration
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .task_space import TaskInstance, TaskSpace


class SchedulerKind(str, enum.Enum):
    LP_ACRL = "LP_ACRL"
    ALP = "ALP"
    PLR = "PLR"
    LRPC = "LRPC"
    SC = "SC"
    UNIFORM = "UNIFORM"


@dataclass(frozen=True)
class SCParams:
    base: float = 1.0
    span: float = 3.0
    rate: float = 0.002
    midpoint: float = 1000.0


@dataclass(frozen=True)
class SchedulerConfig:
    kind: SchedulerKind = SchedulerKind.LP_ACRL
    beta: float = 0.1
    floor_mix: float = 0.05
    stage_len: int = 10
    ema_alpha: float = 0.2
    stale_decay: float = 0.9
    normalize_lp: bool = True
    sc: SCParams = field(default_factory=SCParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SchedulerKind(self.kind))
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.floor_mix < 1.0:
            raise ValueError(f"floor_mix must be in [0, 1), got {self.floor_mix}")
        if int(self.stage_len) != self.stage_len or self.stage_len < 1:
            raise ValueError(f"stage_len must be a positive integer, got {self.stage_len}")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")
        if not 0.0 <= self.stale_decay <= 1.0:
            raise ValueError(f"stale_decay must be in [0, 1], got {self.stale_decay}")

    def with_(self, **changes) -> "SchedulerConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EpisodeRecord:
    task_index: int
    episodic_reward: float
    length: int
    fall_step: int
    tracking_error: float
    value_error_score: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.fall_step <= self.length:
            raise ValueError(f"fall_step {self.fall_step} outside [0, {self.length}]")
        if not 0.0 <= self.tracking_error <= 1.0:
            raise ValueError(f"tracking_error {self.tracking_error} outside [0, 1]")


@dataclass(frozen=True)
class SamplingDistribution:
    probs: np.ndarray
    stage: int

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


def softmax(scores, beta: float) -> np.ndarray:
    """Temperature softmax with max-subtraction."""
    s = np.asarray(scores, dtype=np.float64)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if np.isnan(s).any():
        raise ValueError("NaN score")
    if not np.isfinite(s).all():
        raise ValueError("non-finite score")
    with np.errstate(over="ignore"):
        # a span wider than the float range saturates to -inf, whose weight is exactly 0
        z = (s - s.max()) / beta
    e = np.exp(z)
    return e / e.sum()


def sc_vmax(k: float, sc: SCParams) -> float:
    """Upper edge of the admitted command range at training iteration ``k``."""
    x = -sc.rate * (k - sc.midpoint)
    # 1 / (1 + exp(x)) without overflow for large x
    if x > 0:
        ex = math.exp(-x)
        sig = ex / (1.0 + ex)
    else:
        sig = 1.0 / (1.0 + math.exp(x))
    return sc.base + sc.span * sig


class Scheduler:
    """Per-task statistics plus the current sampling distribution.

    Not thread-safe: feed :meth:`record_episode` from a single collector
    and call :meth:`advance_stage` with no concurrent writers.
    """

    def __init__(self, space: TaskSpace, cfg: SchedulerConfig | None = None):
        cfg = cfg or SchedulerConfig()
        if space.size < 1:
            raise ValueError("empty task space")
        if cfg.kind is SchedulerKind.SC and space.primary is None:
            raise ValueError("SC scheduler needs a continuous dimension in the task space")
        self.space = space
        self.cfg = cfg
        n = space.size
        self.stage = 0
        self.reward_current = np.zeros(n)
        self.reward_prev_stage = np.zeros(n)
        self.lp = np.zeros(n)
        self.alp = np.zeros(n)
        self.plr_score = np.zeros(n)
        self.episode_count_stage = np.zeros(n, dtype=np.int64)
        self.staleness = np.zeros(n, dtype=np.int64)
        self._plr_seen = np.zeros(n, dtype=bool)
        self.scores = np.zeros(n)
        if cfg.kind is SchedulerKind.SC:
            probs = self.sc_probs(0)
        else:
            probs = np.full(n, 1.0 / n)
        self._dist = SamplingDistribution(probs, 0)

    @property
    def distribution(self) -> SamplingDistribution:
        return self._dist

    @property
    def probs(self) -> np.ndarray:
        return self._dist.probs

    def record_episode(self, rec: EpisodeRecord) -> None:
        i = rec.task_index
        if not 0 <= i < self.space.size:
            raise IndexError(f"task index {i} out of range [0, {self.space.size})")
        a = self.cfg.ema_alpha
        if self.episode_count_stage[i] == 0:
            self.reward_current[i] = rec.episodic_reward
        else:
            self.reward_current[i] += a * (rec.episodic_reward - self.reward_current[i])
        self.episode_count_stage[i] += 1
        if self._plr_seen[i]:
            self.plr_score[i] += a * (rec.value_error_score - self.plr_score[i])
        else:
            self.plr_score[i] = rec.value_error_score
            self._plr_seen[i] = True

    def record_episodes(self, recs) -> None:
        for rec in recs:
            self.record_episode(rec)

    def _raw_scores(self) -> np.ndarray:
        kind = self.cfg.kind
        if kind is SchedulerKind.LP_ACRL:
            return self.lp.copy()
        if kind is SchedulerKind.ALP:
            return self.alp.copy()
        if kind is SchedulerKind.LRPC:
            return -self.reward_prev_stage
        if kind is SchedulerKind.PLR:
            return self.plr_score.copy()
        return np.zeros(self.space.size)

    def advance_stage(self, iteration: int | None = None) -> SamplingDistribution:
        """Close the current stage and publish the next distribution.

        ``iteration`` is the training-iteration count fed to the SC schedule;
        it defaults to ``(stage + 1) * stage_len``.
        """
        cfg = self.cfg
        seen = self.episode_count_stage > 0
        self.lp[seen] = self.reward_current[seen] - self.reward_prev_stage[seen]
        self.alp[seen] = np.abs(self.lp[seen])
        self.reward_prev_stage[seen] = self.reward_current[seen]
        self.staleness[seen] = 0
        self.lp[~seen] *= cfg.stale_decay
        self.alp[~seen] = np.abs(self.lp[~seen])
        self.staleness[~seen] += 1
        self.episode_count_stage[:] = 0

        self.stage += 1
        n = self.space.size
        if cfg.kind is SchedulerKind.SC:
            k = (self.stage * cfg.stage_len) if iteration is None else iteration
            self.scores = np.zeros(n)
            probs = self.sc_probs(k)
        elif cfg.kind is SchedulerKind.UNIFORM:
            self.scores = np.zeros(n)
            probs = np.full(n, 1.0 / n)
        else:
            s = self._raw_scores()
            if cfg.normalize_lp:
                m = np.abs(s).max()
                if m > 0:
                    s = s / m
            self.scores = s
            probs = (1.0 - cfg.floor_mix) * softmax(s, cfg.beta) + cfg.floor_mix / n
            probs /= probs.sum()
        self._dist = SamplingDistribution(probs, self.stage)
        return self._dist

    def active_mask(self, k: float) -> np.ndarray:
        """Cells whose primary-dimension bin starts below the SC range edge."""
        space = self.space
        if space.primary is None:
            raise ValueError("SC schedule needs a continuous dimension")
        dim = space.dimension(space.primary)
        vmax = sc_vmax(k, self.cfg.sc)
        lower = np.array([dim.bin_edges(i)[0] for i in range(dim.bins)])
        open_bins = lower < vmax
        grid = np.indices(space.shape)[space.axis(space.primary)].ravel()
        return open_bins[grid]

    def sc_probs(self, k: float) -> np.ndarray:
        mask = self.active_mask(k)
        if not mask.any():
            raise ValueError(f"SC schedule admits no cells at iteration {k}")
        return mask / mask.sum()

    def sc_distribution(self, k: float) -> SamplingDistribution:
        if self.space.primary is None:
            raise ValueError("SC schedule needs a continuous dimension")
        return SamplingDistribution(self.sc_probs(k), self.stage)

    def sample_task(self, rng: np.random.Generator) -> TaskInstance:
        return self.space.instance(self.sample_index(rng))

    def sample_index(self, rng: np.random.Generator) -> int:
        return inverse_cdf(self.probs, rng.random())

    def snapshot(self) -> Iterator[dict]:
        """Rows for the distribution log, one per task."""
        for i in range(self.space.size):
            yield {
                "stage": self.stage,
                "task_index": i,
                "prob": float(self.probs[i]),
                "reward_est": float(self.reward_prev_stage[i]),
                "lp": float(self.lp[i]),
                "score": float(self.scores[i]),
            }


def inverse_cdf(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    # u * total can land on the final edge through rounding
    i = min(i, len(probs) - 1)
    while probs[i] == 0.0 and i > 0:
        i -= 1
    return i


def init_scheduler(space: TaskSpace, cfg: SchedulerConfig | None = None) -> Scheduler:
    return Scheduler(space, cfg)
