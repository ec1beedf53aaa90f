"""Named environment presets: task space, environment and policy head.

``chain8``
    8-link prerequisite chain over the scripted bandit (one arm, so the
    episodic reward is the competence curve itself).
``pm_flat8``
    |v*| in [0, 4] split into eight 0.5-wide bins, random sign, one level.
    The drag caps the reachable speed at a_max / drag = 3.5, and a hazard
    switches on above |v*| = 3.5, so the top bin cannot be mastered.
``pm_scaled``
    5 forward-speed bins (|v*| in [0.5, 3]) x 4 yaw-rate bins (|w*| in
    [0.5, 2.5]) x 2 terrain modes = 40 cells. The mode is not observed. On
    ``rough``, commands whose combined normalized magnitude exceeds 0.9 carry
    a 0.5 per-step fall hazard, so those cells end within a few steps and can
    never be mastered. Their fall transitions are also the largest advantages
    in any batch that contains them, which slows learning on every other
    cell while they keep being sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from .environments import ChainBandit, ChainBanditMDP, Level, PointMassConfig, PointMassEnv, step_gate
from .task_space import Dimension, TaskSpace, build_space, velocity8_space


@dataclass
class EnvBundle:
    space: TaskSpace
    env: Any
    action_kind: str

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim

    @property
    def act_dim(self) -> int:
        return self.env.act_dim


def chain8_space(n: int = 8) -> TaskSpace:
    return build_space([Dimension.categorical("link", [str(i) for i in range(n)])])


def chain8(learn_rate: float = 0.05, threshold: float = 0.5, noise_sd: float = 0.0) -> EnvBundle:
    bandit = ChainBandit(8, learn_rate, step_gate(threshold), noise_sd)
    return EnvBundle(chain8_space(), ChainBanditMDP(bandit, n_arms=1), "categorical")


PM_FLAT8 = PointMassConfig(
    dt=0.05,
    horizon=200,
    levels={"flat": Level(a_max=1.75, drag=0.5, hazard=0.02, hazard_threshold=3.5)},
    v_fail=6.0,
    channels=("vx",),
    command_scale=(1.0,),
    channel_weights=(1.0,),
)


def pm_flat8() -> EnvBundle:
    return EnvBundle(velocity8_space(), PointMassEnv(PM_FLAT8), "gaussian")


PM_SCALED = PointMassConfig(
    dt=0.05,
    horizon=100,
    levels={
        "flat": Level(a_max=4.0, drag=0.5, yaw_a_max=4.0, yaw_drag=0.5),
        "rough": Level(a_max=2.5, drag=1.0, yaw_a_max=2.5, yaw_drag=1.0, hazard=0.5, hazard_threshold=0.9),
    },
    v_fail=math.inf,
    channels=("vx", "wz"),
    command_scale=(3.0, 2.5),
    channel_weights=(1.0, 0.5),
    level_key="mode",
)


def pm_scaled_space() -> TaskSpace:
    return build_space([
        Dimension.continuous("vx", 0.5, 3.0, 5, symmetric_sign=True),
        Dimension.continuous("wz", 0.5, 2.5, 4, symmetric_sign=True),
        Dimension.categorical("mode", ("flat", "rough")),
    ])


def pm_scaled() -> EnvBundle:
    return EnvBundle(pm_scaled_space(), PointMassEnv(PM_SCALED), "gaussian")


PRESETS = {"chain8": chain8, "pm_flat8": pm_flat8, "pm_scaled": pm_scaled}


def make_env(preset: str) -> EnvBundle:
    try:
        return PRESETS[preset]()
    except KeyError:
        raise ValueError(f"unknown env preset {preset!r}") from None
