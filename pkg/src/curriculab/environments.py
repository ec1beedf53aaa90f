"""Desk-scale multi-task environments.

``ChainBandit`` is a scripted learning curve: pulling task ``i`` raises its
competence, but only once its prerequisite is competent enough. It isolates
scheduler behaviour from any learner.

``PointMassEnv`` is a first-order velocity-tracking surrogate for legged
locomotion: the agent commands an acceleration per channel (forward speed
and optionally yaw rate), a level-dependent drag pulls velocity back to
zero, and a command-dependent hazard plays the role of falling. Episodes
are simulated in lock-step batches; each episode owns its random streams,
so batch composition never changes a trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

TRACKING_SCALE = 0.25
ACTION_RATE_WEIGHT = 0.01


def tracking_kernel(x) -> np.ndarray:
    """exp(-|x|^2 / 0.25), applied over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    sq = x * x if x.ndim == 0 else np.sum(x * x, axis=-1)
    return np.exp(-sq / TRACKING_SCALE)


def step_gate(threshold: float = 0.5) -> Callable[[float], float]:
    def gate(x: float) -> float:
        return 1.0 if x >= threshold else 0.0

    return gate


def linear_gate(x: float) -> float:
    return float(min(max(x, 0.0), 1.0))


class ChainBandit:
    """Prerequisite-chain competence model; one call to :meth:`pull` is one episode."""

    def __init__(
        self,
        n_tasks: int = 8,
        learn_rate: float = 0.05,
        gate_fn: Callable[[float], float] | None = None,
        noise_sd: float = 0.0,
        chain: Sequence[int | None] | None = None,
        initial_competence: float | Sequence[float] = 0.0,
    ):
        if learn_rate <= 0:
            raise ValueError("learn_rate must be positive")
        if noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        self.n_tasks = n_tasks
        self.learn_rate = learn_rate
        self.gate_fn = gate_fn or step_gate(0.5)
        self.noise_sd = noise_sd
        self.chain = list(chain) if chain is not None else [None] + list(range(n_tasks - 1))
        if len(self.chain) != n_tasks:
            raise ValueError("chain must list one prerequisite per task")
        self.competence = np.zeros(n_tasks) + np.asarray(initial_competence, dtype=np.float64)

    def gate(self, i: int) -> float:
        pre = self.chain[i]
        return 1.0 if pre is None else float(self.gate_fn(self.competence[pre]))

    def pull(self, i: int, rng: np.random.Generator | None = None, learn: bool = True) -> float:
        if not 0 <= i < self.n_tasks:
            raise IndexError(f"task {i} out of range [0, {self.n_tasks})")
        if learn:
            m = self.competence[i]
            m = m + self.learn_rate * self.gate(i) * (1.0 - m)
            self.competence[i] = min(max(m, 0.0), 1.0)
        r = float(self.competence[i])
        if self.noise_sd > 0:
            if rng is None:
                raise ValueError("noisy bandit needs an rng")
            r += float(rng.normal(0.0, self.noise_sd))
            r = min(max(r, 0.0), 1.0 + 3.0 * self.noise_sd)
        return r


def bandit_step(state: ChainBandit, task_index: int, rng: np.random.Generator | None = None) -> float:
    return state.pull(task_index, rng)


@dataclass(frozen=True)
class Level:
    """Dynamics of one difficulty level (a terrain stand-in)."""

    a_max: float = 4.0
    drag: float = 0.5
    hazard: float = 0.0
    hazard_threshold: float = math.inf
    yaw_a_max: float = 4.0
    yaw_drag: float = 0.5


@dataclass(frozen=True)
class PointMassConfig:
    """Per-episode dynamics.

    The hazard fires with probability ``level.hazard`` per step whenever the
    command intensity, sum over channels of |command| / command_scale,
    exceeds ``level.hazard_threshold``.
    """

    dt: float = 0.05
    horizon: int = 1000
    levels: Mapping[str, Level] = field(default_factory=lambda: {"default": Level()})
    v_fail: float = math.inf
    phi_scale: float = TRACKING_SCALE
    action_rate_weight: float = ACTION_RATE_WEIGHT
    channels: tuple[str, ...] = ("vx",)
    command_scale: tuple[float, ...] = (1.0,)
    channel_weights: tuple[float, ...] = (1.0,)
    level_key: str | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        if len(self.channels) not in (1, 2):
            raise ValueError("point mass supports one or two command channels")
        if not (len(self.command_scale) == len(self.channel_weights) == len(self.channels)):
            raise ValueError("per-channel settings must match the channel list")
        for name, lv in self.levels.items():
            if not 0.0 <= lv.hazard < 1.0:
                raise ValueError(f"hazard of level {name!r} must be in [0, 1)")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def obs_dim(self) -> int:
        return 3 * self.n_channels

    def level_of(self, params: Mapping[str, Any]) -> Level:
        if self.level_key is None:
            return next(iter(self.levels.values()))
        return self.levels[params[self.level_key]]

    def hazard(self, level: Level, command: np.ndarray) -> float:
        intensity = float(np.sum(np.abs(command) / np.asarray(self.command_scale)))
        return level.hazard if intensity > level.hazard_threshold else 0.0


@dataclass
class StepResult:
    observation: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    fall_step: np.ndarray
    fell: np.ndarray
    command: np.ndarray | None = None
    actual: np.ndarray | None = None


class PointMassEnv:
    """A batch of independent point-mass episodes stepped in lock-step.

    ``reset`` takes one parameter dict and one generator per episode. A batch
    of one gives the ordinary single-episode interface.
    """

    def __init__(self, cfg: PointMassConfig):
        self.cfg = cfg
        self.n = 0

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def act_dim(self) -> int:
        return self.cfg.n_channels

    @property
    def horizon(self) -> int:
        return self.cfg.horizon

    def reset(self, params: Sequence[Mapping[str, Any]], rngs: Sequence[np.random.Generator],
              train: bool = True) -> np.ndarray:
        cfg = self.cfg
        if len(params) != len(rngs):
            raise ValueError("need one rng per episode")
        n, c = len(params), cfg.n_channels
        self.n = n
        self.command = np.array([[float(p.get(ch, 0.0)) for ch in cfg.channels] for p in params]).reshape(n, c)
        levels = [cfg.level_of(p) for p in params]
        self.a_max = np.array([[lv.a_max, lv.yaw_a_max][:c] for lv in levels]).reshape(n, c)
        self.drag = np.array([[lv.drag, lv.yaw_drag][:c] for lv in levels]).reshape(n, c)
        self.hazard = np.array([cfg.hazard(lv, cmd) for lv, cmd in zip(levels, self.command)])
        # one uniform per step per episode, drawn up front from that episode's stream
        self._hazard_u = np.stack([rng.random(cfg.horizon) for rng in rngs]) if n else np.zeros((0, cfg.horizon))
        self.v = np.zeros((n, c))
        self.last_action = np.zeros((n, c))
        self.t = 0
        self.done = np.zeros(n, dtype=bool)
        self.fell = np.zeros(n, dtype=bool)
        self.fall_step = np.full(n, cfg.horizon, dtype=np.int64)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.concatenate([self.v, self.command, self.last_action], axis=1)

    def step(self, action: np.ndarray) -> StepResult:
        cfg = self.cfg
        if self.done.all():
            raise RuntimeError("step called on finished episodes")
        action = np.asarray(action, dtype=np.float64).reshape(self.n, cfg.n_channels)
        active = ~self.done
        a = np.clip(action, -self.a_max, self.a_max)
        v = self.v + cfg.dt * (a - self.drag * self.v)
        err = self.command - v
        kern = np.exp(-(err * err) / cfg.phi_scale)
        w = np.asarray(cfg.channel_weights)
        track = kern @ w / w.sum()
        rate = np.sum((a - self.last_action) ** 2, axis=1)
        reward = track - cfg.action_rate_weight * rate

        fall = (np.abs(v) > cfg.v_fail).any(axis=1) | (self._hazard_u[:, self.t] < self.hazard)
        fall &= active
        reward = np.where(fall, 0.0, reward)
        reward = np.where(active, reward, 0.0)

        self.v = np.where(active[:, None], v, self.v)
        self.last_action = np.where(active[:, None], a, self.last_action)
        self.fall_step = np.where(fall, self.t, self.fall_step)
        self.fell |= fall
        self.t += 1
        self.done = self.done | fall | (self.t >= cfg.horizon)
        return StepResult(self.observation(), reward, self.done.copy(), self.fall_step.copy(), fall,
                          command=self.command.copy(), actual=self.v.copy())


def pm_reset(cfg: PointMassConfig, params: Mapping[str, Any], rng: np.random.Generator) -> tuple[PointMassEnv, np.ndarray]:
    env = PointMassEnv(cfg)
    obs = env.reset([params], [rng])
    return env, obs[0]


def pm_step(env: PointMassEnv, action) -> StepResult:
    return env.step(np.atleast_1d(np.asarray(action, dtype=np.float64))[None, :])


class ChainBanditMDP:
    """Single-step MDP over a shared :class:`ChainBandit`.

    The observation is a one-hot task code and the policy picks one of
    ``n_arms`` arms. The episode pays the bandit's competence reading when
    the task's target arm is chosen and 0 otherwise; competence grows on
    every training episode regardless of the arm. With one arm the
    reward is exactly the scripted learning curve.

    Episodes in a batch are resolved in batch order, which is the order
    the collector sampled them.
    """

    horizon = 1

    def __init__(self, bandit: ChainBandit, n_arms: int = 1, targets: Sequence[int] | None = None,
                 task_key: str = "link"):
        self.bandit = bandit
        self.n_arms = n_arms
        self.targets = np.asarray(targets if targets is not None else [i % n_arms for i in range(bandit.n_tasks)])
        self.task_key = task_key
        self.n = 0

    @property
    def obs_dim(self) -> int:
        return self.bandit.n_tasks

    @property
    def act_dim(self) -> int:
        return self.n_arms

    def reset(self, params: Sequence[Mapping[str, Any]], rngs: Sequence[np.random.Generator],
              train: bool = True) -> np.ndarray:
        self.n = len(params)
        self.tasks = np.array([int(p[self.task_key]) for p in params], dtype=np.int64)
        self.rngs = list(rngs)
        self.train = train
        self.done = np.zeros(self.n, dtype=bool)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.eye(self.bandit.n_tasks)[self.tasks]

    def step(self, action: np.ndarray) -> StepResult:
        if self.done.all():
            raise RuntimeError("step called on finished episodes")
        action = np.asarray(action).reshape(self.n)
        reward = np.zeros(self.n)
        for e, (i, a) in enumerate(zip(self.tasks, action)):
            r = self.bandit.pull(int(i), self.rngs[e], learn=self.train)
            reward[e] = r if int(a) == self.targets[i] else 0.0
        self.done[:] = True
        ones = np.ones(self.n, dtype=np.int64)
        return StepResult(self.observation(), reward, self.done.copy(), ones, np.zeros(self.n, dtype=bool),
                          command=np.ones((self.n, 1)), actual=np.minimum(reward, 1.0)[:, None])
