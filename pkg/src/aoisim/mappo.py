"""Hybrid-action multi-agent PPO with a centralized critic.

Training is centralized: per-agent actors pick a keep/drop flag
(categorical) and a transmit power (clipped Gaussian over a squashed
mean), while one shared critic scores the joint observation through
split encoders (embedding vs. local state), fusion, a global trunk, and
one value head per agent. Advantages come from generalized advantage
estimation, normalized jointly across slots and agents; updates use the
clipped probability-ratio surrogate with entropy and L2 terms. The graph
encoder takes one kernel-matching step per episode from the per-agent
advantage means.

Execution is decentralized: :func:`evaluate` needs only actors and the
graph encoder; critic parameters never enter the evaluation path.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from aoisim.env import OBS_DIM, EpisodeResult, JointAction, V2VEnv
from aoisim.gnn import GraphSpec, SageParams, encode, init_sage
from aoisim.gnn import update as sage_update
from aoisim.nets import (AdamState, DenseNet, adam_init, adam_step, backward,
                         categorical_entropy, categorical_logprob, clip_gradients,
                         dense_net, forward, forward_tape, gaussian_entropy,
                         gaussian_logprob, load_tensors, log_softmax, prefix_dict,
                         save_tensors, sigmoid, softmax)
from aoisim.queueing import ArrivalProcess
from aoisim.topology import NetworkConfig

__all__ = [
    "TrainConfig",
    "ActorParams",
    "CriticParams",
    "ActionSample",
    "AgentBatch",
    "RolloutBuffer",
    "PolicyBundle",
    "TrainResult",
    "EvalResult",
    "TrainingDiverged",
    "DigestMismatchError",
    "init_actor",
    "init_critic",
    "act",
    "critic_values",
    "critic_values_batch",
    "compute_gae",
    "normalize_advantages",
    "mean_advantage",
    "ppo_actor_loss",
    "critic_loss",
    "train",
    "evaluate",
    "rollout_policy",
    "policy_from_bundle",
    "config_digest",
    "collect_tensors",
    "save_checkpoint",
    "load_checkpoint",
]

ACTOR_HIDDEN = (64, 64)
CRITIC_GNN_WIDTH = 16
CRITIC_LOCAL_WIDTH = 32
CRITIC_GLOBAL_WIDTH = 128


@dataclass
class TrainConfig:
    """Hyperparameters of the learning loop."""

    discount: float = 0.95
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coeff: float = 0.02
    l2_coeff: float = 1e-4
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    gnn_lr: float = 1e-3
    update_epochs: int = 4   # minibatch is always the full episode
    episodes: int = 1000
    share_actor: bool = False
    use_gnn: bool = True
    tau1: float = 1.0
    tau2: float = 1.0
    log_std_init: float = -0.5
    log_std_min: float = -2.0
    log_std_max: float = 0.5
    grad_clip: float = 0.5
    checkpoint_every: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if self.entropy_coeff < 0 or self.l2_coeff < 0:
            raise ValueError("regularization coefficients must be non-negative")
        if self.update_epochs < 1 or self.episodes < 1:
            raise ValueError("update_epochs and episodes must be >= 1")
        if not self.log_std_min <= self.log_std_init <= self.log_std_max:
            raise ValueError("log_std_init must lie inside the clamp range")


# ---------------------------------------------------------------------------
# Actors
# ---------------------------------------------------------------------------

@dataclass
class ActorParams:
    """Shared trunk, discrete head (2 logits), continuous head (raw mean),
    and one learnable log standard deviation in normalized power units."""

    trunk: DenseNet
    disc_head: DenseNet
    cont_head: DenseNet
    log_std: np.ndarray  # 0-d array, clamped after every optimizer step

    def param_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        out.update(self.trunk.param_dict(prefix + "trunk."))
        out.update(self.disc_head.param_dict(prefix + "disc."))
        out.update(self.cont_head.param_dict(prefix + "cont."))
        out[prefix + "log_std"] = self.log_std
        return out


def init_actor(rng: np.random.Generator, obs_dim: int = OBS_DIM,
               log_std_init: float = -0.5) -> ActorParams:
    return ActorParams(
        trunk=dense_net([obs_dim, *ACTOR_HIDDEN], ["tanh", "tanh"], rng),
        disc_head=dense_net([ACTOR_HIDDEN[-1], 2], ["identity"], rng),
        cont_head=dense_net([ACTOR_HIDDEN[-1], 1], ["identity"], rng),
        log_std=np.array(float(log_std_init)),
    )


@dataclass(frozen=True)
class ActionSample:
    gamma: int
    power_mw: float
    raw_action: float  # pre-clip Gaussian sample in normalized [0, 1] power units
    logprob: float     # joint: categorical + Gaussian of the unclipped sample
    entropy: float


def act(actor: ActorParams, state: np.ndarray, p_max_mw: float,
        rng: np.random.Generator, deterministic: bool = False) -> ActionSample:
    """Sample (or argmax/mean in deterministic mode) one hybrid action."""
    hid = forward(actor.trunk, state)
    logits = forward(actor.disc_head, hid)
    mean = float(sigmoid(forward(actor.cont_head, hid)[0]))
    log_std = float(actor.log_std)
    if deterministic:
        gamma = int(np.argmax(logits))
        raw = mean
    else:
        gamma = int(rng.random() < softmax(logits)[1])
        raw = mean + math.exp(log_std) * rng.standard_normal()
    power = float(np.clip(raw, 0.0, 1.0) * p_max_mw)
    logprob = categorical_logprob(gamma, logits) + gaussian_logprob(raw, mean, log_std)
    entropy = categorical_entropy(logits) + gaussian_entropy(log_std)
    return ActionSample(gamma, power, float(raw), float(logprob), float(entropy))


# ---------------------------------------------------------------------------
# Centralized critic
# ---------------------------------------------------------------------------

@dataclass
class CriticParams:
    """Split encoders per agent, concat fusion, global trunk, M value heads."""

    gnn_enc: DenseNet     # 1 -> 16
    loc_enc: DenseNet     # 6 -> 32
    global_net: DenseNet  # M*48 -> 128 -> 128
    value_head: DenseNet  # 128 -> M
    num_agents: int

    def param_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        out.update(self.gnn_enc.param_dict(prefix + "gnn_enc."))
        out.update(self.loc_enc.param_dict(prefix + "loc_enc."))
        out.update(self.global_net.param_dict(prefix + "global."))
        out.update(self.value_head.param_dict(prefix + "value."))
        return out


def init_critic(rng: np.random.Generator, num_agents: int) -> CriticParams:
    fused = CRITIC_GNN_WIDTH + CRITIC_LOCAL_WIDTH
    return CriticParams(
        gnn_enc=dense_net([1, CRITIC_GNN_WIDTH], ["tanh"], rng),
        loc_enc=dense_net([OBS_DIM - 1, CRITIC_LOCAL_WIDTH], ["tanh"], rng),
        global_net=dense_net([num_agents * fused, CRITIC_GLOBAL_WIDTH,
                              CRITIC_GLOBAL_WIDTH], ["tanh", "tanh"], rng),
        value_head=dense_net([CRITIC_GLOBAL_WIDTH, num_agents], ["identity"], rng),
        num_agents=num_agents,
    )


def _critic_tape(critic: CriticParams, batch: np.ndarray):
    b, m, d = batch.shape
    flat = batch.reshape(b * m, d)
    z_gnn, tape_g = forward_tape(critic.gnn_enc, flat[:, :1])
    z_loc, tape_l = forward_tape(critic.loc_enc, flat[:, 1:])
    fused = np.concatenate([z_gnn, z_loc], axis=1)
    flat_fused = fused.reshape(b, m * fused.shape[1])
    g_feat, tape_gl = forward_tape(critic.global_net, flat_fused)
    values, tape_v = forward_tape(critic.value_head, g_feat)
    return values, (tape_g, tape_l, tape_gl, tape_v, fused.shape[1], b, m)


def _critic_backward(critic: CriticParams, tape, dvalues: np.ndarray) -> dict[str, np.ndarray]:
    tape_g, tape_l, tape_gl, tape_v, fused_dim, b, m = tape
    g_val, d_gfeat = backward(critic.value_head, tape_v, dvalues)
    g_glob, d_fused = backward(critic.global_net, tape_gl, d_gfeat)
    dz = d_fused.reshape(b * m, fused_dim)
    split = critic.gnn_enc.output_dim
    g_gnn, _ = backward(critic.gnn_enc, tape_g, dz[:, :split])
    g_loc, _ = backward(critic.loc_enc, tape_l, dz[:, split:])
    grads: dict[str, np.ndarray] = {}
    grads.update(prefix_dict("gnn_enc.", g_gnn))
    grads.update(prefix_dict("loc_enc.", g_loc))
    grads.update(prefix_dict("global.", g_glob))
    grads.update(prefix_dict("value.", g_val))
    return grads


def critic_values_batch(critic: CriticParams, joint_states: np.ndarray) -> np.ndarray:
    """(B, M, 7) joint observations -> (B, M) value estimates."""
    values, _ = _critic_tape(critic, np.asarray(joint_states, dtype=float))
    return values


def critic_values(critic: CriticParams, joint_state: np.ndarray) -> np.ndarray:
    """(M, 7) joint observation -> (M,) value estimates, fixed link order."""
    return critic_values_batch(critic, np.asarray(joint_state)[None])[0]


# ---------------------------------------------------------------------------
# Advantage estimation
# ---------------------------------------------------------------------------

def compute_gae(rewards, values, bootstrap_value: float, discount: float,
                gae_lambda: float) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially weighted TD-error sums; returns (advantages, returns)."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    adv = np.empty_like(r)
    next_value = float(bootstrap_value)
    acc = 0.0
    for t in reversed(range(len(r))):
        delta = r[t] + discount * next_value - v[t]
        acc = delta + discount * gae_lambda * acc
        adv[t] = acc
        next_value = v[t]
    return adv, adv + v


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance jointly across slots and agents."""
    a = np.asarray(advantages, dtype=float)
    return (a - a.mean()) / (a.std() + 1e-8)


@dataclass
class ValueNormalizer:
    """Running mean/variance of value targets (training-side only).

    The critic regresses to normalized targets and its raw outputs are
    de-normalized before entering the advantage estimator; without this,
    an adaptive-moment optimizer needs O(|target| / lr) steps just to
    reach the return scale.
    """

    mean: float = 0.0
    var: float = 1.0
    count: float = 1e-4

    def update(self, batch: np.ndarray) -> None:
        b = np.asarray(batch, dtype=float).ravel()
        b_mean, b_var, b_count = float(b.mean()), float(b.var()), float(b.size)
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean += delta * b_count / total
        m2 = self.var * self.count + b_var * b_count \
            + delta ** 2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return math.sqrt(self.var + 1e-8)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.std + self.mean


@dataclass
class RolloutBuffer:
    """One episode of per-agent trajectories plus derived advantage arrays."""

    states: np.ndarray          # (N, M, 7)
    gammas: np.ndarray          # (N, M)
    raw_actions: np.ndarray     # (N, M)
    old_logprobs: np.ndarray    # (N, M)
    rewards: np.ndarray         # (N, M)
    entropies: np.ndarray       # (N, M)
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    norm_advantages: np.ndarray | None = None

    def finalize(self, critic: CriticParams, cfg: TrainConfig,
                 normalizer: "ValueNormalizer | None" = None) -> None:
        """Value estimates, per-agent GAE with zero bootstrap, joint normalization."""
        raw = critic_values_batch(critic, self.states)
        self.values = raw if normalizer is None else normalizer.denormalize(raw)
        n, m = self.rewards.shape
        self.advantages = np.empty((n, m))
        self.returns = np.empty((n, m))
        for agent in range(m):
            self.advantages[:, agent], self.returns[:, agent] = compute_gae(
                self.rewards[:, agent], self.values[:, agent], 0.0,
                cfg.discount, cfg.gae_lambda)
        self.norm_advantages = normalize_advantages(self.advantages)

    def agent_batch(self, m: int) -> "AgentBatch":
        return AgentBatch(self.states[:, m], self.gammas[:, m],
                          self.raw_actions[:, m], self.old_logprobs[:, m],
                          self.norm_advantages[:, m])

    def flat_batch(self) -> "AgentBatch":
        n, m, d = self.states.shape
        return AgentBatch(self.states.reshape(n * m, d), self.gammas.reshape(-1),
                          self.raw_actions.reshape(-1), self.old_logprobs.reshape(-1),
                          self.norm_advantages.reshape(-1))


def mean_advantage(buffer: RolloutBuffer) -> np.ndarray:
    """Per-agent time average of the normalized advantages."""
    return buffer.norm_advantages.mean(axis=0)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentBatch:
    states: np.ndarray        # (B, 7)
    gammas: np.ndarray        # (B,)
    raw_actions: np.ndarray   # (B,)
    old_logprobs: np.ndarray  # (B,)
    advantages: np.ndarray    # (B,) normalized


def ppo_actor_loss(actor: ActorParams, batch: AgentBatch,
                   cfg: TrainConfig) -> tuple[float, dict[str, np.ndarray], dict]:
    """Clipped-surrogate objective (to be maximized) and its exact gradients.

    objective = mean(min(ratio*A, clip(ratio)*A)) + beta*mean(entropy)
                - l2_coeff * ||theta||^2
    """
    states = np.asarray(batch.states, dtype=float)
    n = states.shape[0]
    gammas = np.asarray(batch.gammas, dtype=int)
    raw = np.asarray(batch.raw_actions, dtype=float)
    adv = np.asarray(batch.advantages, dtype=float)

    hid, trunk_tape = forward_tape(actor.trunk, states)
    logits, disc_tape = forward_tape(actor.disc_head, hid)
    raw_mean, cont_tape = forward_tape(actor.cont_head, hid)
    mean = sigmoid(raw_mean[:, 0])
    log_std = float(actor.log_std)

    logprob = (categorical_logprob(gammas, logits)
               + gaussian_logprob(raw, mean, log_std))
    ratio = np.exp(logprob - batch.old_logprobs)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv
    surrogate = np.minimum(unclipped, clipped)
    ent_disc = categorical_entropy(logits)
    entropy = ent_disc + gaussian_entropy(log_std)

    params = actor.param_dict("")
    l2 = sum(float((p ** 2).sum()) for p in params.values())
    objective = float(surrogate.mean() + cfg.entropy_coeff * entropy.mean()
                      - cfg.l2_coeff * l2)

    # d objective / d logprob: the clipped branch (when strictly smaller)
    # has zero ratio-derivative because the clip saturates there.
    dlp = np.where(unclipped <= clipped, adv, 0.0) * ratio / n

    probs = softmax(logits)
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), gammas] = 1.0
    dlogits = dlp[:, None] * (onehot - probs)
    lsm = log_softmax(logits)
    dlogits += (cfg.entropy_coeff / n) * (-probs * (lsm + ent_disc[:, None]))

    inv_var = math.exp(-2.0 * log_std)
    dmean = dlp * (raw - mean) * inv_var
    draw_mean = dmean * mean * (1.0 - mean)
    dlog_std = float((dlp * (((raw - mean) ** 2) * inv_var - 1.0)).sum()
                     + cfg.entropy_coeff)

    g_disc, dhid_disc = backward(actor.disc_head, disc_tape, dlogits)
    g_cont, dhid_cont = backward(actor.cont_head, cont_tape, draw_mean[:, None])
    g_trunk, _ = backward(actor.trunk, trunk_tape, dhid_disc + dhid_cont)

    grads: dict[str, np.ndarray] = {}
    grads.update(prefix_dict("trunk.", g_trunk))
    grads.update(prefix_dict("disc.", g_disc))
    grads.update(prefix_dict("cont.", g_cont))
    grads["log_std"] = np.array(dlog_std)
    for name, p in params.items():
        grads[name] = grads[name] - 2.0 * cfg.l2_coeff * p

    stats = {
        "surrogate": float(surrogate.mean()),
        "entropy": float(entropy.mean()),
        "l2": l2,
        "ratios": ratio,
    }
    return objective, grads, stats


def critic_loss(critic: CriticParams, joint_states: np.ndarray,
                returns: np.ndarray) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """0.5 * MSE against the GAE returns, with exact gradients."""
    states = np.asarray(joint_states, dtype=float)
    target = np.asarray(returns, dtype=float)
    values, tape = _critic_tape(critic, states)
    err = values - target
    loss = 0.5 * float((err ** 2).mean())
    grads = _critic_backward(critic, tape, err / err.size)
    return loss, grads, values


# ---------------------------------------------------------------------------
# Bundles, checkpoints
# ---------------------------------------------------------------------------

@dataclass
class PolicyBundle:
    """Everything decentralized execution needs; deliberately excludes the critic."""

    actors: list[ActorParams]   # length M, or 1 when shared
    sage: SageParams | None
    share_actor: bool
    use_gnn: bool

    def actor_for(self, m: int) -> ActorParams:
        return self.actors[0] if self.share_actor else self.actors[m]


@dataclass
class TrainResult:
    bundle: PolicyBundle
    critic: CriticParams
    curve: list[dict]
    config_digest: str
    rng_state: dict


class TrainingDiverged(RuntimeError):
    """Raised when any loss turns non-finite; carries a diagnostic snapshot."""

    def __init__(self, episode: int, tensors: dict[str, np.ndarray], row: dict):
        super().__init__(f"non-finite loss at episode {episode}: {row}")
        self.episode = episode
        self.tensors = tensors
        self.row = row


class DigestMismatchError(ValueError):
    """Checkpoint was produced under an incompatible configuration."""


def config_digest(net_config: NetworkConfig, arrival: ArrivalProcess,
                  cfg: TrainConfig) -> str:
    """Digest of everything that must match between training and evaluation.

    Sweepable quantities (packet length, arrival probability, powers) are
    deliberately excluded so a default-trained policy can be evaluated on
    perturbed test conditions.
    """
    payload = {
        "num_links": net_config.num_links,
        "episode_slots": net_config.episode_slots,
        "batch_size": arrival.batch_size,
        "share_actor": cfg.share_actor,
        "use_gnn": cfg.use_gnn,
        "obs_dim": OBS_DIM,
        "actor_hidden": list(ACTOR_HIDDEN),
        "critic_widths": [CRITIC_GNN_WIDTH, CRITIC_LOCAL_WIDTH, CRITIC_GLOBAL_WIDTH],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def collect_tensors(actors: list[ActorParams], critic: CriticParams | None = None,
                    sage: SageParams | None = None) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for i, actor in enumerate(actors):
        out.update(actor.param_dict(f"actor{i}."))
    if critic is not None:
        out.update(critic.param_dict("critic."))
    if sage is not None:
        out.update(sage.param_dict("sage."))
    return out


def save_checkpoint(path, actors: list[ActorParams], critic: CriticParams | None,
                    sage: SageParams | None, digest: str, episode: int,
                    rng_state: dict, share_actor: bool, use_gnn: bool,
                    num_links: int) -> None:
    header = {
        "config_digest": digest,
        "episode": episode,
        "rng_state": rng_state,
        "share_actor": share_actor,
        "use_gnn": use_gnn,
        "num_links": num_links,
        "num_actors": len(actors),
    }
    save_tensors(path, collect_tensors(actors, critic, sage), header)


def _fill_params(target: dict[str, np.ndarray], tensors: dict[str, np.ndarray],
                 prefix: str) -> None:
    for name, arr in target.items():
        key = prefix + name
        if key not in tensors:
            raise ValueError(f"checkpoint is missing tensor {key!r}")
        arr[...] = tensors[key]


def load_checkpoint(path, expected_digest: str | None = None,
                    log_std_init: float = -0.5):
    """Rebuild (header, PolicyBundle, critic-or-None) from a checkpoint file.

    Raises :class:`DigestMismatchError` when ``expected_digest`` disagrees
    with the stored one. A checkpoint without critic tensors loads fine;
    the critic slot is then ``None``.
    """
    header, tensors = load_tensors(path)
    if expected_digest is not None and header.get("config_digest") != expected_digest:
        raise DigestMismatchError(
            f"{path}: checkpoint digest {header.get('config_digest')!r} does not "
            f"match the current configuration {expected_digest!r}")
    scratch = np.random.default_rng(0)
    actors = []
    for i in range(header["num_actors"]):
        actor = init_actor(scratch, log_std_init=log_std_init)
        _fill_params(actor.param_dict(""), tensors, f"actor{i}.")
        actors.append(actor)
    sage = None
    if header.get("use_gnn", False):
        sage = init_sage(scratch)
        _fill_params(sage.param_dict(""), tensors, "sage.")
    critic = None
    if any(k.startswith("critic.") for k in tensors):
        critic = init_critic(scratch, header["num_links"])
        _fill_params(critic.param_dict(""), tensors, "critic.")
    bundle = PolicyBundle(actors=actors, sage=sage,
                          share_actor=header["share_actor"],
                          use_gnn=header["use_gnn"])
    return header, bundle, critic


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _collect_episode(env: V2VEnv, actors: list[ActorParams], cfg: TrainConfig,
                     net_config: NetworkConfig, env_rng: np.random.Generator,
                     action_rng: np.random.Generator) -> RolloutBuffer:
    n = net_config.episode_slots
    m_links = net_config.num_links
    states = np.empty((n, m_links, OBS_DIM))
    gammas = np.empty((n, m_links), dtype=int)
    raws = np.empty((n, m_links))
    old_lp = np.empty((n, m_links))
    ents = np.empty((n, m_links))
    rewards = np.empty((n, m_links))
    obs = env.reset(env_rng)
    for slot in range(n):
        states[slot] = obs
        flags = np.empty(m_links, dtype=int)
        powers = np.empty(m_links)
        for m in range(m_links):
            actor = actors[0] if cfg.share_actor else actors[m]
            sample = act(actor, obs[m], net_config.max_power_mw, action_rng)
            flags[m] = sample.gamma
            powers[m] = sample.power_mw
            raws[slot, m] = sample.raw_action
            old_lp[slot, m] = sample.logprob
            ents[slot, m] = sample.entropy
        gammas[slot] = flags
        obs, step_rewards, _, _ = env.step(JointAction(flags, powers))
        rewards[slot] = step_rewards
    return RolloutBuffer(states, gammas, raws, old_lp, rewards, ents)


def train(net_config: NetworkConfig, arrival: ArrivalProcess, cfg: TrainConfig,
          seed: int,
          env_factory: Optional[Callable[..., V2VEnv]] = None,
          checkpoint_cb: Optional[Callable[[int, dict, dict], None]] = None,
          verbose: bool = False) -> TrainResult:
    """Centralized training: per episode, fresh topology and embeddings, N slot
    interactions, then actor/critic updates and one graph-encoder step.

    ``checkpoint_cb(episode, tensors, header)`` fires every
    ``cfg.checkpoint_every`` episodes. Any non-finite loss raises
    :class:`TrainingDiverged` with a diagnostic parameter snapshot attached.
    """
    master = np.random.SeedSequence(seed)
    init_ss, action_ss, gnn_ss, env_ss = master.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    action_rng = np.random.default_rng(action_ss)
    gnn_rng = np.random.default_rng(gnn_ss)

    m_links = net_config.num_links
    num_actors = 1 if cfg.share_actor else m_links
    actors = [init_actor(init_rng, log_std_init=cfg.log_std_init)
              for _ in range(num_actors)]
    critic = init_critic(init_rng, m_links)
    sage_ref: list[SageParams | None] = [init_sage(init_rng) if cfg.use_gnn else None]
    spec = GraphSpec.for_nodes(m_links)

    actor_params = [a.param_dict("") for a in actors]
    actor_opts = [adam_init(p, cfg.actor_lr) for p in actor_params]
    critic_params = critic.param_dict("")
    critic_opt = adam_init(critic_params, cfg.critic_lr)

    if cfg.use_gnn:
        def embedder(features: np.ndarray) -> np.ndarray:
            return encode(features, sage_ref[0], spec, gnn_rng)
    else:
        embedder = None
    env = env_factory(embedder) if env_factory is not None else V2VEnv(
        net_config, arrival, embedder)

    digest = config_digest(net_config, arrival, cfg)
    normalizer = ValueNormalizer()
    curve: list[dict] = []
    for episode in range(cfg.episodes):
        env_rng = np.random.default_rng(env_ss.spawn(1)[0])
        buffer = _collect_episode(env, actors, cfg, net_config, env_rng, action_rng)
        buffer.finalize(critic, cfg, normalizer)
        normalizer.update(buffer.returns)
        value_targets = normalizer.normalize(buffer.returns)

        actor_losses: list[float] = []
        critic_losses: list[float] = []
        for _ in range(cfg.update_epochs):
            if cfg.share_actor:
                groups = [(actors[0], actor_params[0], actor_opts[0],
                           buffer.flat_batch())]
            else:
                groups = [(actors[m], actor_params[m], actor_opts[m],
                           buffer.agent_batch(m)) for m in range(m_links)]
            for actor, params, opt, batch in groups:
                objective, grads, _ = ppo_actor_loss(actor, batch, cfg)
                actor_losses.append(-objective)
                descent = clip_gradients({k: -g for k, g in grads.items()},
                                         cfg.grad_clip)
                adam_step(opt, params, descent)
                actor.log_std[...] = np.clip(actor.log_std, cfg.log_std_min,
                                             cfg.log_std_max)
            closs, cgrads, _ = critic_loss(critic, buffer.states, value_targets)
            critic_losses.append(closs)
            adam_step(critic_opt, critic_params,
                      clip_gradients(cgrads, cfg.grad_clip))

        gnn_loss = 0.0
        if cfg.use_gnn:
            sage_ref[0], gnn_loss = sage_update(
                sage_ref[0], env.features_std, spec, mean_advantage(buffer),
                cfg.tau1, cfg.tau2, cfg.gnn_lr, gnn_rng)

        mean_aoi_slots = float(-buffer.rewards.mean())
        row = {
            "episode": episode,
            "mean_return": float(buffer.rewards.sum()),
            "mean_aoi": mean_aoi_slots * net_config.slot_duration_s * 1e3,
            "actor_loss": float(np.mean(actor_losses)),
            "critic_loss": float(np.mean(critic_losses)),
            "gnn_loss": float(gnn_loss),
            "entropy": float(buffer.entropies.mean()),
        }
        curve.append(row)
        if verbose and (episode % 50 == 0 or episode == cfg.episodes - 1):
            print(f"episode {episode}: mean_aoi={row['mean_aoi']:.3f} ms "
                  f"return={row['mean_return']:.1f}")
        if not all(math.isfinite(v) for k, v in row.items() if k != "episode"):
            raise TrainingDiverged(episode, collect_tensors(actors, critic,
                                                            sage_ref[0]), row)
        if checkpoint_cb is not None and (episode + 1) % cfg.checkpoint_every == 0:
            header = {"config_digest": digest, "episode": episode,
                      "rng_state": action_rng.bit_generator.state,
                      "share_actor": cfg.share_actor, "use_gnn": cfg.use_gnn,
                      "num_links": m_links, "num_actors": num_actors}
            checkpoint_cb(episode, collect_tensors(actors, critic, sage_ref[0]),
                          header)

    bundle = PolicyBundle(actors=actors, sage=sage_ref[0],
                          share_actor=cfg.share_actor, use_gnn=cfg.use_gnn)
    return TrainResult(bundle=bundle, critic=critic, curve=curve,
                       config_digest=digest,
                       rng_state=action_rng.bit_generator.state)


# ---------------------------------------------------------------------------
# Decentralized execution
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    episodes: list[EpisodeResult]

    @property
    def mean_aoi_slots(self) -> float:
        return float(np.mean([e.mean_aoi_slots for e in self.episodes]))

    @property
    def episode_aoi_slots(self) -> np.ndarray:
        return np.array([e.mean_aoi_slots for e in self.episodes])

    @property
    def mean_return(self) -> float:
        return float(np.mean([e.total_return for e in self.episodes]))


def policy_from_bundle(bundle: PolicyBundle, action_rng: np.random.Generator,
                       deterministic: bool = False):
    """Decentralized policy: each actor sees only its own 7-dim observation."""
    def policy(obs: np.ndarray, env: V2VEnv) -> JointAction:
        m_links = env.config.num_links
        flags = np.empty(m_links, dtype=int)
        powers = np.empty(m_links)
        for m in range(m_links):
            sample = act(bundle.actor_for(m), obs[m], env.config.max_power_mw,
                         action_rng, deterministic=deterministic)
            flags[m] = sample.gamma
            powers[m] = sample.power_mw
        return JointAction(flags, powers)
    return policy


def _episode_streams(seed: int, episode: int):
    env_rng = np.random.default_rng(np.random.SeedSequence([seed, episode, 0]))
    action_rng = np.random.default_rng(np.random.SeedSequence([seed, episode, 1]))
    gnn_rng = np.random.default_rng(np.random.SeedSequence([seed, episode, 2]))
    return env_rng, action_rng, gnn_rng


def rollout_policy(policy_factory, net_config: NetworkConfig,
                   arrival: ArrivalProcess, episodes: int, seed: int,
                   embedder_factory=None) -> EvalResult:
    """Evaluate any policy over paired episode seeds.

    The environment stream (geometry, arrivals, fading) is derived from
    ``(seed, episode)`` only, so two policies evaluated with the same seed
    face identical conditions; policy randomness lives on its own stream.
    """
    out: list[EpisodeResult] = []
    for episode in range(episodes):
        env_rng, action_rng, gnn_rng = _episode_streams(seed, episode)
        embedder = embedder_factory(gnn_rng) if embedder_factory is not None else None
        env = V2VEnv(net_config, arrival, embedder)
        policy = policy_factory(action_rng)
        out.append(env.run_episode(policy, env_rng))
    return EvalResult(out)


def evaluate(bundle: PolicyBundle, net_config: NetworkConfig,
             arrival: ArrivalProcess, episodes: int, seed: int,
             deterministic: bool = False) -> EvalResult:
    """Decentralized execution of a trained bundle (no critic anywhere)."""
    embedder_factory = None
    if bundle.use_gnn and bundle.sage is not None:
        spec = GraphSpec.for_nodes(net_config.num_links)
        def embedder_factory(gnn_rng):
            def embedder(features: np.ndarray) -> np.ndarray:
                return encode(features, bundle.sage, spec, gnn_rng)
            return embedder
    return rollout_policy(
        lambda action_rng: policy_from_bundle(bundle, action_rng, deterministic),
        net_config, arrival, episodes, seed, embedder_factory)
