"""Clipped-surrogate actor-critic with GAE, in plain numpy.

Actor and critic are separate one-hidden-layer tanh networks. Continuous
actions use a Gaussian with a state-independent log-std; discrete actions
use a softmax over logits. Gradients are written out by hand so they can
be checked against finite differences.
"""

from __future__ import annotations

import copy
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .curriculum import EpisodeRecord, Scheduler
from .seeding import Streams

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
LOG_2PI = math.log(2.0 * math.pi)


class DivergenceError(FloatingPointError):
    """Loss or parameters became non-finite during an update."""


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch: int = 256
    hidden: int = 64
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    reward_scale: float = 1.0
    init_log_std: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1 or self.hidden < 1:
            raise ValueError("epochs, minibatch and hidden must be positive")


@dataclass
class PolicyState:
    params: dict[str, np.ndarray]
    action_kind: str
    obs_dim: int
    act_dim: int
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    updates: int = 0

    def copy(self) -> "PolicyState":
        return copy.deepcopy(self)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])


def init_policy(obs_dim: int, act_dim: int, action_kind: str, rng: np.random.Generator,
                hidden: int = 64, init_log_std: float = 0.0) -> PolicyState:
    if action_kind not in ("gaussian", "categorical"):
        raise ValueError(f"unknown action kind {action_kind!r}")

    def dense(n_in, n_out, gain):
        return rng.normal(0.0, gain / math.sqrt(n_in), size=(n_in, n_out))

    params = {
        "pi.W1": dense(obs_dim, hidden, 1.0),
        "pi.b1": np.zeros(hidden),
        "pi.W2": dense(hidden, act_dim, 0.01),
        "pi.b2": np.zeros(act_dim),
        "vf.W1": dense(obs_dim, hidden, 1.0),
        "vf.b1": np.zeros(hidden),
        "vf.W2": dense(hidden, 1, 1.0),
        "vf.b2": np.zeros(1),
    }
    if action_kind == "gaussian":
        params["pi.log_std"] = np.full(act_dim, float(init_log_std))
    state = PolicyState(params, action_kind, obs_dim, act_dim)
    state.adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    state.adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    return state


def _mlp(params, prefix, x):
    h = np.tanh(x @ params[prefix + ".W1"] + params[prefix + ".b1"])
    return h @ params[prefix + ".W2"] + params[prefix + ".b2"], h


def _dense_rowwise(x, W, b):
    # fixed accumulation order per row: BLAS kernels round differently as the
    # row count changes, which would make rollouts depend on the batch split
    out = np.broadcast_to(b, (len(x), len(b))).copy()
    for j in range(W.shape[0]):
        out += x[:, j, None] * W[j]
    return out


def _mlp_rowwise(params, prefix, x):
    h = np.tanh(_dense_rowwise(x, params[prefix + ".W1"], params[prefix + ".b1"]))
    return _dense_rowwise(h, params[prefix + ".W2"], params[prefix + ".b2"])


def _mlp_backward(params, prefix, x, h, dout, grads):
    grads[prefix + ".W2"] = h.T @ dout
    grads[prefix + ".b2"] = dout.sum(axis=0)
    dz = (dout @ params[prefix + ".W2"].T) * (1.0 - h * h)
    grads[prefix + ".W1"] = x.T @ dz
    grads[prefix + ".b1"] = dz.sum(axis=0)


def value(policy: PolicyState, obs: np.ndarray) -> np.ndarray:
    out, _ = _mlp(policy.params, "vf", np.atleast_2d(obs))
    return out[:, 0]


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def log_prob(policy: PolicyState, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    out, _ = _mlp(policy.params, "pi", np.atleast_2d(obs))
    return _log_prob_from_out(policy, out, actions)


def _log_prob_from_out(policy, out, actions):
    if policy.action_kind == "gaussian":
        ls = policy.params["pi.log_std"]
        z = (actions.reshape(out.shape) - out) / np.exp(ls)
        return -0.5 * np.sum(z * z, axis=1) - ls.sum() - 0.5 * policy.act_dim * LOG_2PI
    lp = _log_softmax(out)
    return lp[np.arange(len(lp)), actions.astype(np.int64)]


def act(policy: PolicyState, obs: np.ndarray, noise: np.ndarray | None = None,
        deterministic: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Actions and their log-probabilities.

    ``noise`` holds standard normals (Gaussian policies) or uniforms
    (categorical policies), one row per observation.
    """
    obs = np.atleast_2d(obs)
    out = _mlp_rowwise(policy.params, "pi", obs)
    if policy.action_kind == "gaussian":
        if deterministic:
            actions = out
        else:
            actions = out + np.exp(policy.params["pi.log_std"]) * noise.reshape(out.shape)
    else:
        if deterministic:
            actions = out.argmax(axis=1)
        else:
            p = np.exp(_log_softmax(out))
            cdf = np.cumsum(p, axis=1)
            u = noise.reshape(len(obs), 1) * cdf[:, -1:]
            actions = np.minimum((cdf <= u).sum(axis=1), policy.act_dim - 1)
    return actions, _log_prob_from_out(policy, out, actions)


def loss_and_grad(params: dict[str, np.ndarray], action_kind: str, batch: dict[str, np.ndarray],
                  cfg: LearnerConfig) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Clipped surrogate + value loss - entropy bonus, and its exact gradient.

    ``batch`` carries obs, actions, logp_old, adv (already normalized) and
    returns. The gradient is taken with respect to every entry of ``params``.
    """
    obs = batch["obs"]
    n = len(obs)
    adv = batch["adv"]
    grads: dict[str, np.ndarray] = {}

    out, h = _mlp(params, "pi", obs)
    if action_kind == "gaussian":
        ls = params["pi.log_std"]
        std = np.exp(ls)
        diff = batch["actions"].reshape(out.shape) - out
        z = diff / std
        logp = -0.5 * np.sum(z * z, axis=1) - ls.sum() - 0.5 * out.shape[1] * LOG_2PI
        entropy = float(np.sum(ls) + 0.5 * out.shape[1] * (LOG_2PI + 1.0))
    else:
        lsm = _log_softmax(out)
        p = np.exp(lsm)
        a = batch["actions"].astype(np.int64)
        logp = lsm[np.arange(n), a]
        ent_i = -np.sum(p * lsm, axis=1)
        entropy = float(ent_i.mean())

    ratio = np.exp(logp - batch["logp_old"])
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr1, surr2 = ratio * adv, clipped * adv
    pg_loss = -float(np.mean(np.minimum(surr1, surr2)))
    # d pg_loss / d logp; zero where the clipped branch is the active minimum
    dlogp = np.where(surr1 <= surr2, -adv / n, 0.0) * ratio

    if action_kind == "gaussian":
        dout = dlogp[:, None] * diff / (std * std)
        grads["pi.log_std"] = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - cfg.ent_coef * np.ones_like(ls)
    else:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), a] = 1.0
        dout = dlogp[:, None] * (onehot - p)
        # d(mean entropy)/d logits = -p (log p + H_i) / n
        dout += cfg.ent_coef * p * (lsm + ent_i[:, None]) / n
    _mlp_backward(params, "pi", obs, h, dout, grads)

    v_out, hv = _mlp(params, "vf", obs)
    v = v_out[:, 0]
    v_err = v - batch["returns"]
    v_loss = 0.5 * float(np.mean(v_err * v_err))
    dv = (cfg.vf_coef * v_err / n)[:, None]
    _mlp_backward(params, "vf", obs, hv, dv, grads)

    loss = pg_loss + cfg.vf_coef * v_loss - cfg.ent_coef * entropy
    info = {
        "loss": loss,
        "pg_loss": pg_loss,
        "v_loss": v_loss,
        "entropy": entropy,
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
    }
    return loss, grads, info


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return np.zeros_like(adv)
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


# ---------------------------------------------------------------------------
# trajectories and advantage estimation


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    final_obs: np.ndarray
    logp: np.ndarray
    task_index: int
    params: dict[str, Any]
    command: np.ndarray
    actual: np.ndarray
    horizon: int
    fall_step: int

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def episodic_reward(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def fell(self) -> bool:
        return bool(self.dones[-1]) and self.fall_step < self.horizon


@dataclass
class RolloutDataset:
    trajectories: list[Trajectory]
    advantages: list[np.ndarray]
    returns: list[np.ndarray]

    def __len__(self) -> int:
        return sum(t.length for t in self.trajectories)

    def batch(self) -> dict[str, np.ndarray]:
        trajs = self.trajectories
        return {
            "obs": np.concatenate([t.obs for t in trajs]),
            "actions": np.concatenate([t.actions for t in trajs]),
            "logp_old": np.concatenate([t.logp for t in trajs]),
            "adv": np.concatenate(self.advantages),
            "returns": np.concatenate(self.returns),
        }


def gae(rewards, values, next_values, dones, gamma: float, lam: float) -> np.ndarray:
    """Backward recursion A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    delta = rewards + gamma * np.asarray(next_values) * notdone - np.asarray(values)
    adv = np.zeros_like(delta)
    running = 0.0
    for t in range(len(delta) - 1, -1, -1):
        running = delta[t] + gamma * lam * notdone[t] * running
        adv[t] = running
    return adv


def compute_gae(traj: Trajectory, value_fn: Callable[[np.ndarray], np.ndarray], gamma: float, lam: float,
                reward_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and value targets (advantages + V) for one trajectory.

    ``dones`` flags true terminations only; an episode cut by the horizon
    bootstraps from ``V(final_obs)``.
    """
    values = value_fn(traj.obs)
    last = value_fn(traj.final_obs[None, :])
    next_values = np.concatenate([values[1:], last])
    adv = gae(traj.rewards * reward_scale, values, next_values, traj.dones, gamma, lam)
    return adv, adv + values


# ---------------------------------------------------------------------------
# rollouts


def run_episodes(policy: PolicyState, env, tasks: Sequence[int], params: Sequence[dict],
                 rngs: Sequence[tuple[np.random.Generator, np.random.Generator]],
                 deterministic: bool = False, train: bool = True, batch_size: int | None = None) -> list[Trajectory]:
    """Simulate one episode per task, ``batch_size`` episodes in lock-step.

    ``rngs`` gives each episode an (environment, policy-noise) generator
    pair, so the result does not depend on ``batch_size``.
    """
    n = len(tasks)
    batch_size = batch_size or n or 1
    out: list[Trajectory] = []
    for lo in range(0, n, batch_size):
        hi = min(n, lo + batch_size)
        out.extend(_run_batch(policy, env, tasks[lo:hi], params[lo:hi], rngs[lo:hi], deterministic, train))
    return out


def _run_batch(policy, env, tasks, params, rngs, deterministic, train):
    horizon = env.horizon
    b = len(tasks)
    obs = env.reset(list(params), [r[0] for r in rngs], train=train)
    if policy.action_kind == "gaussian":
        noise = np.stack([r[1].standard_normal((horizon, policy.act_dim)) for r in rngs], axis=1)
    else:
        noise = np.stack([r[1].random(horizon) for r in rngs], axis=1)
    obs_buf, act_buf, logp_buf, rew_buf, done_buf, cmd_buf, actual_buf = [], [], [], [], [], [], []
    alive_buf = []
    active = np.ones(b, dtype=bool)
    final_obs = np.zeros((b, obs.shape[1]))
    fall_step = np.full(b, horizon, dtype=np.int64)
    fell = np.zeros(b, dtype=bool)
    t = 0
    while active.any():
        actions, logp = act(policy, obs, noise[t], deterministic)
        res = env.step(actions)
        obs_buf.append(obs)
        act_buf.append(actions)
        logp_buf.append(logp)
        rew_buf.append(res.reward)
        done_buf.append(res.fell)
        cmd_buf.append(res.command)
        actual_buf.append(res.actual)
        alive_buf.append(active.copy())
        ending = active & res.done
        final_obs[ending] = res.observation[ending]
        fall_step = np.where(ending, res.fall_step, fall_step)
        fell |= ending & res.fell
        active &= ~res.done
        obs = res.observation
        t += 1
    trajs = []
    for e in range(b):
        length = int(sum(a[e] for a in alive_buf))
        trajs.append(Trajectory(
            obs=np.array([o[e] for o in obs_buf[:length]]),
            actions=np.array([a[e] for a in act_buf[:length]]),
            rewards=np.array([r[e] for r in rew_buf[:length]]),
            dones=np.array([d[e] for d in done_buf[:length]], dtype=bool),
            final_obs=final_obs[e].copy(),
            logp=np.array([p[e] for p in logp_buf[:length]]),
            task_index=int(tasks[e]),
            params=dict(params[e]),
            command=np.array([c[e] for c in cmd_buf[:length]]),
            actual=np.array([c[e] for c in actual_buf[:length]]),
            horizon=horizon,
            fall_step=int(fall_step[e]) if fell[e] else horizon,
        ))
    return trajs


def episode_rngs(streams: Streams, *key) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(params, environment, policy-noise) generators for one episode."""
    ss = streams.seed_sequence(*key)
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3))


def collect_rollouts(policy: PolicyState, scheduler: Scheduler, env, n_episodes: int, streams: Streams,
                     iteration: int, cfg: LearnerConfig | None = None,
                     batch_size: int | None = None) -> tuple[RolloutDataset, list[EpisodeRecord]]:
    """Sample tasks from the scheduler, run them, and score each episode."""
    from .metrics import episode_tracking_error

    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    cfg = cfg or LearnerConfig()
    space = scheduler.space
    task_rng = streams.generator("tasks", iteration)
    tasks = [scheduler.sample_index(task_rng) for _ in range(n_episodes)]
    params, rngs = [], []
    for e, i in enumerate(tasks):
        r_params, r_env, r_pol = episode_rngs(streams, "episode", iteration, e)
        params.append(space.draw_params(space.instance(i), r_params))
        rngs.append((r_env, r_pol))
    trajs = run_episodes(policy, env, tasks, params, rngs, batch_size=batch_size)

    vf = lambda o: value(policy, o)  # noqa: E731
    advs, rets, records = [], [], []
    for traj in trajs:
        adv, ret = compute_gae(traj, vf, cfg.gamma, cfg.lam, cfg.reward_scale)
        advs.append(adv)
        rets.append(ret)
        records.append(EpisodeRecord(
            task_index=traj.task_index,
            episodic_reward=traj.episodic_reward,
            length=traj.horizon,
            fall_step=traj.fall_step,
            tracking_error=episode_tracking_error(traj),
            value_error_score=float(np.mean(np.abs(adv))),
        ))
    return RolloutDataset(trajs, advs, rets), records


# ---------------------------------------------------------------------------
# updates


def _adam(policy: PolicyState, grads: dict[str, np.ndarray], lr: float,
          b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> None:
    policy.adam_t += 1
    t = policy.adam_t
    for k, g in grads.items():
        m = policy.adam_m[k] = b1 * policy.adam_m[k] + (1 - b1) * g
        v = policy.adam_v[k] = b2 * policy.adam_v[k] + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        policy.params[k] = policy.params[k] - lr * mhat / (np.sqrt(vhat) + eps)


def update_policy(policy: PolicyState, dataset: RolloutDataset, cfg: LearnerConfig,
                  rng: np.random.Generator) -> tuple[PolicyState, dict[str, float]]:
    """Several epochs of minibatch Adam steps; returns a new state."""
    if len(dataset) == 0:
        raise ValueError("empty rollout dataset")
    data = dataset.batch()
    n = len(data["obs"])
    new = policy.copy()
    stats: dict[str, float] = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            idx = order[lo:lo + cfg.minibatch]
            mb = {k: v[idx] for k, v in data.items()}
            mb["adv"] = normalize_advantages(mb["adv"])
            # overflow shows up as a non-finite loss below, reported as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads, stats = loss_and_grad(new.params, new.action_kind, mb, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at update {policy.updates}: {stats}")
            if cfg.max_grad_norm > 0:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > cfg.max_grad_norm:
                    grads = {k: g * (cfg.max_grad_norm / norm) for k, g in grads.items()}
            _adam(new, grads, cfg.lr)
    if "pi.log_std" in new.params:
        np.clip(new.params["pi.log_std"], LOG_STD_MIN, LOG_STD_MAX, out=new.params["pi.log_std"])
    for k, v in new.params.items():
        if not np.isfinite(v).all():
            raise DivergenceError(f"non-finite parameter {k} after update {policy.updates}")
    new.updates += 1
    return new, stats


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (all integers little-endian):
#   b"CLAB-CKPT\n"                      magic
#   u32 version (=1)
#   u32 header length, then a UTF-8 header "key=value;..." with action_kind,
#       obs_dim, act_dim, adam_t, updates
#   u32 tensor count, then per tensor sorted by name:
#       u32 name length, name bytes, u32 ndim, ndim * u32 shape,
#       prod(shape) float64 values (C order, little-endian)
# Tensors are the parameters, then "adam_m/<name>" and "adam_v/<name>".

CKPT_MAGIC = b"CLAB-CKPT\n"
CKPT_VERSION = 1


def _tensors(policy: PolicyState) -> list[tuple[str, np.ndarray]]:
    out = [(k, policy.params[k]) for k in sorted(policy.params)]
    out += [("adam_m/" + k, policy.adam_m[k]) for k in sorted(policy.adam_m)]
    out += [("adam_v/" + k, policy.adam_v[k]) for k in sorted(policy.adam_v)]
    return out


def dumps_checkpoint(policy: PolicyState) -> bytes:
    header = (f"action_kind={policy.action_kind};obs_dim={policy.obs_dim};act_dim={policy.act_dim};"
              f"adam_t={policy.adam_t};updates={policy.updates}").encode()
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(header)), header]
    tensors = _tensors(policy)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads_checkpoint(blob: bytes) -> PolicyState:
    if not blob.startswith(CKPT_MAGIC):
        raise ValueError("not a checkpoint")
    pos = len(CKPT_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, pos)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos += 8
    header = dict(kv.split("=", 1) for kv in blob[pos:pos + hlen].decode().split(";"))
    pos += hlen
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    params = {k: v for k, v in tensors.items() if "/" not in k}
    return PolicyState(
        params=params,
        action_kind=header["action_kind"],
        obs_dim=int(header["obs_dim"]),
        act_dim=int(header["act_dim"]),
        adam_m={k[7:]: v for k, v in tensors.items() if k.startswith("adam_m/")},
        adam_v={k[7:]: v for k, v in tensors.items() if k.startswith("adam_v/")},
        adam_t=int(header["adam_t"]),
        updates=int(header["updates"]),
    )
