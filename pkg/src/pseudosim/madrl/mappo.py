"""Multi-agent clipped policy-gradient trainer with centralized critics.

Per agent: a softmax policy over generation counts and a centralized
critic that maps the joint observation plus the other agents' actions to
a Q value per own action.  Critic targets are lambda-weighted sums of TD
errors on top of a delayed critic copy; advantages subtract a
counterfactual baseline (the policy-weighted average of the critic's Q
vector), which settles the per-agent credit assignment under the shared
team reward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import PseudonymGenEnv
from .nets import (
    CriticNetwork,
    PolicyNetwork,
    log_softmax,
    make_optimizer,
    softmax,
)


class NaNGuardError(FloatingPointError):
    """Non-finite loss or gradient encountered; training is aborted."""


@dataclass
class TrainConfig:
    episodes: int = 500
    steps: int = 120          # slots per episode
    history: int = 3          # observation window length
    epochs: int = 15          # passes over the buffer per episode
    batch: int = 16           # minibatch size
    lr: float = 0.001         # actor and critic
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    hidden: int = 64
    seed: int = 0
    optimizer: str = "adam"         # "adam" or "sgd"
    advantage_norm: bool = True
    reward_scale: float = 300.0     # divisor applied to rewards inside the learner
    reward_center: bool = True      # subtract a running reward mean inside the learner
    zero_init_heads: bool = False   # start output layers at zero (uniform policy, flat critic)
    action_encoding: str = "scalar"  # critic encoding of other agents' actions
    clip_literal: bool = False       # min(r*A, 1 +/- eps) instead of min(r*A, clip(r)*A)

    def __post_init__(self) -> None:
        if not (0.0 < self.clip < 1.0):
            raise ValueError("clip must lie in (0, 1)")
        for name in ("episodes", "steps", "history", "epochs", "batch", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.action_encoding not in ("scalar", "onehot"):
            raise ValueError("action_encoding must be 'scalar' or 'onehot'")


def compute_q_hat(
    rewards: np.ndarray, q_taken: np.ndarray, gamma: float, gae_lambda: float
) -> np.ndarray:
    """Critic targets: Q_target[t] plus the lambda-discounted tail of TD errors.

    delta[t] = r[t] + gamma * Q_target[t+1] - Q_target[t], with the value
    beyond the final step taken as zero.
    """
    rewards = np.asarray(rewards, dtype=float)
    q_taken = np.asarray(q_taken, dtype=float)
    horizon = len(rewards)
    q_next = np.append(q_taken[1:], 0.0)
    deltas = rewards + gamma * q_next - q_taken
    tail = np.zeros(horizon)
    acc = 0.0
    for t in range(horizon - 1, -1, -1):
        acc = deltas[t] + gamma * gae_lambda * acc
        tail[t] = acc
    return q_taken + tail


def counterfactual_advantage(
    q_hat: np.ndarray, action_probs: np.ndarray, q_vector: np.ndarray
) -> np.ndarray:
    """A = Q_hat - b with b the policy-weighted mean of the critic's Q vector."""
    baseline = np.sum(action_probs * q_vector, axis=-1)
    return np.asarray(q_hat, dtype=float) - baseline


@dataclass
class AgentBatch:
    obs: np.ndarray            # (B, obs_dim)
    central: np.ndarray        # (B, central_dim)
    actions: np.ndarray        # (B,) int
    old_log_probs: np.ndarray  # (B,)
    q_hat: np.ndarray          # (B,)
    advantages: np.ndarray     # (B,)


def _check_finite(value: float, label: str) -> None:
    if not np.isfinite(value):
        raise NaNGuardError(f"non-finite {label}")


def ppo_update(
    policy: PolicyNetwork,
    critic: CriticNetwork,
    batch: AgentBatch,
    cfg: TrainConfig,
    policy_opt,
    critic_opt,
) -> tuple[float, float]:
    """One clipped-surrogate actor step and one squared-error critic step.

    Gradients are exact backpropagation through the one-hidden-layer
    networks; returns (actor loss, critic loss).
    """
    n = len(batch.actions)
    idx = np.arange(n)

    # --- actor ---------------------------------------------------------
    logits, cache = policy.logits(batch.obs)
    log_probs_all = log_softmax(logits)
    probs = np.exp(log_probs_all)
    log_probs = log_probs_all[idx, batch.actions]
    ratios = np.exp(log_probs - batch.old_log_probs)
    adv = batch.advantages

    unclipped = ratios * adv
    if cfg.clip_literal:
        clipped = np.where(adv < 0.0, 1.0 - cfg.clip, 1.0 + cfg.clip)
    else:
        clipped = np.clip(ratios, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    entropy = -np.sum(probs * log_probs_all, axis=-1)
    actor_loss = -float(np.mean(surrogate)) - cfg.entropy_coef * float(np.mean(entropy))

    # d surrogate / d log_prob: the unclipped branch moves with the policy,
    # the clipped branch is constant in it
    active = unclipped <= clipped
    dsurr_dlogp = np.where(active, ratios * adv, 0.0)
    dlogits = -(dsurr_dlogp[:, None] / n) * (
        np.eye(policy.n_actions)[batch.actions] - probs
    )
    if cfg.entropy_coef != 0.0:
        # d entropy / d logits = -p * (log p + H)
        dlogits += (cfg.entropy_coef / n) * probs * (log_probs_all + entropy[:, None])
    _check_finite(actor_loss, "actor loss")
    policy_opt.step(policy.net, policy.net.backward(cache, dlogits))

    # --- critic --------------------------------------------------------
    q_all, critic_cache = critic.q_values(batch.central)
    q_pred = q_all[idx, batch.actions]
    err = batch.q_hat - q_pred
    critic_loss = float(np.mean(err**2))
    dq = np.zeros_like(q_all)
    dq[idx, batch.actions] = -2.0 * err / n
    _check_finite(critic_loss, "critic loss")
    critic_opt.step(critic.net, critic.net.backward(critic_cache, dq))

    return actor_loss, critic_loss


@dataclass
class TrainResult:
    episode_rewards: np.ndarray           # mean team reward per episode
    policies: list[PolicyNetwork]
    critics: list[CriticNetwork]
    config: TrainConfig
    episode_mean_actions: np.ndarray = None  # (episodes, agents) mean generation

    @property
    def per_agent_mean_actions(self) -> np.ndarray:
        return self.episode_mean_actions.mean(axis=0)


def _encode_other_actions(actions: np.ndarray, j: int, n_actions: int, encoding: str) -> np.ndarray:
    others = np.delete(actions, j)
    if encoding == "scalar":
        return others / float(n_actions - 1)
    return np.eye(n_actions)[others].ravel()


def central_input(
    joint_obs: np.ndarray, actions: np.ndarray, j: int, n_actions: int, encoding: str
) -> np.ndarray:
    return np.concatenate([joint_obs, _encode_other_actions(actions, j, n_actions, encoding)])


def train_mappo(cfg: TrainConfig, env: PseudonymGenEnv) -> TrainResult:
    """Collect -> target/advantage computation -> K shuffled epochs of
    minibatch updates -> sync of the delayed copies, per episode."""
    rng = np.random.default_rng(cfg.seed)
    n_agents = env.n_agents
    n_actions = env.n_actions
    if cfg.action_encoding == "scalar":
        central_dim = n_agents * env.obs_dim + (n_agents - 1)
    else:
        central_dim = n_agents * env.obs_dim + (n_agents - 1) * n_actions

    policies = [PolicyNetwork(env.obs_dim, n_actions, cfg.hidden, rng) for _ in range(n_agents)]
    critics = [CriticNetwork(central_dim, n_actions, cfg.hidden, rng) for _ in range(n_agents)]
    if cfg.zero_init_heads:
        for net in [p.net for p in policies] + [c.net for c in critics]:
            net.W2[:] = 0.0
    old_policies = [p.clone() for p in policies]
    target_critics = [c.clone() for c in critics]
    policy_opts = [make_optimizer(cfg.optimizer, cfg.lr) for _ in range(n_agents)]
    critic_opts = [make_optimizer(cfg.optimizer, cfg.lr) for _ in range(n_agents)]

    episode_rewards = np.zeros(cfg.episodes)
    episode_mean_actions = np.zeros((cfg.episodes, n_agents))
    reward_offset = 0.0
    offset_initialized = False

    for episode in range(cfg.episodes):
        obs = env.reset()
        obs_buf = [np.zeros((cfg.steps, env.obs_dim)) for _ in range(n_agents)]
        central_buf = [np.zeros((cfg.steps, central_dim)) for _ in range(n_agents)]
        act_buf = np.zeros((cfg.steps, n_agents), dtype=int)
        logp_buf = np.zeros((cfg.steps, n_agents))
        reward_buf = np.zeros(cfg.steps)

        for t in range(cfg.steps):
            actions = np.zeros(n_agents, dtype=int)
            for j in range(n_agents):
                action, log_prob = old_policies[j].sample(obs[j], rng)
                actions[j] = action
                logp_buf[t, j] = log_prob
                obs_buf[j][t] = obs[j]
            joint = np.concatenate(obs)
            for j in range(n_agents):
                central_buf[j][t] = central_input(
                    joint, actions, j, n_actions, cfg.action_encoding
                )
            act_buf[t] = actions
            obs, reward, done, _ = env.step(actions)
            reward_buf[t] = reward

        episode_rewards[episode] = reward_buf.mean()
        episode_mean_actions[episode] = act_buf.mean(axis=0)
        if cfg.reward_center:
            # slow running mean; a constant shift cancels in the advantage
            # but keeps critic targets near zero where learning is fastest
            if not offset_initialized:
                reward_offset = float(reward_buf.mean())
                offset_initialized = True
            else:
                reward_offset += 0.05 * (float(reward_buf.mean()) - reward_offset)
            scaled_rewards = (reward_buf - reward_offset) / cfg.reward_scale
        else:
            scaled_rewards = reward_buf / cfg.reward_scale

        batches = []
        for j in range(n_agents):
            q_target_all, _ = target_critics[j].q_values(central_buf[j])
            q_taken = q_target_all[np.arange(cfg.steps), act_buf[:, j]]
            q_hat = compute_q_hat(scaled_rewards, q_taken, cfg.gamma, cfg.gae_lambda)
            q_current_all, _ = critics[j].q_values(central_buf[j])
            probs_old = np.exp(log_softmax(old_policies[j].logits(obs_buf[j])[0]))
            advantages = counterfactual_advantage(q_hat, probs_old, q_current_all)
            if cfg.advantage_norm:
                advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
            batches.append(
                AgentBatch(
                    obs=obs_buf[j],
                    central=central_buf[j],
                    actions=act_buf[:, j],
                    old_log_probs=logp_buf[:, j],
                    q_hat=q_hat,
                    advantages=advantages,
                )
            )

        n_minibatches = max(cfg.steps // cfg.batch, 1)
        for _ in range(cfg.epochs):
            order = rng.permutation(cfg.steps)
            for m in range(n_minibatches):
                sel = order[m * cfg.batch : (m + 1) * cfg.batch]
                if sel.size == 0:
                    continue
                for j in range(n_agents):
                    b = batches[j]
                    minibatch = AgentBatch(
                        obs=b.obs[sel],
                        central=b.central[sel],
                        actions=b.actions[sel],
                        old_log_probs=b.old_log_probs[sel],
                        q_hat=b.q_hat[sel],
                        advantages=b.advantages[sel],
                    )
                    ppo_update(
                        policies[j], critics[j], minibatch, cfg, policy_opts[j], critic_opts[j]
                    )

        for j in range(n_agents):
            old_policies[j].net.copy_from(policies[j].net)
            target_critics[j].net.copy_from(critics[j].net)

    return TrainResult(
        episode_rewards=episode_rewards,
        policies=policies,
        critics=critics,
        config=cfg,
        episode_mean_actions=episode_mean_actions,
    )


def greedy_joint_action(policies: list[PolicyNetwork], obs: list[np.ndarray]) -> np.ndarray:
    return np.asarray([p.greedy_action(o) for p, o in zip(policies, obs)], dtype=int)


def evaluate_mappo(
    policies: list[PolicyNetwork], env: PseudonymGenEnv, episodes: int, greedy: bool = True,
    seed: int | None = None,
) -> np.ndarray:
    """Mean team reward per evaluation episode under the trained policies."""
    rng = np.random.default_rng(seed)
    curve = np.zeros(episodes)
    for e in range(episodes):
        obs = env.reset()
        total = 0.0
        for _ in range(env.episode_len):
            if greedy:
                actions = greedy_joint_action(policies, obs)
            else:
                actions = [p.sample(o, rng)[0] for p, o in zip(policies, obs)]
            obs, reward, done, _ = env.step(actions)
            total += reward
        curve[e] = total / env.episode_len
    return curve


# --- parameter serialization -----------------------------------------------


def save_policies(path, policies: list[PolicyNetwork], history_len: int, g_max: int) -> None:
    """Flat float64 array file with a one-line JSON header."""
    header = {
        "agents": len(policies),
        "layers": [policies[0].net.n_in, policies[0].net.n_hidden, policies[0].net.n_out],
        "history": history_len,
        "g_max": g_max,
    }
    flat = np.concatenate([p.net.get_flat() for p in policies])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(flat.astype("<f8").tobytes())


def load_policies(path) -> tuple[list[PolicyNetwork], dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        flat = np.frombuffer(fh.read(), dtype="<f8")
    n_in, hidden, n_out = header["layers"]
    per_policy = n_in * hidden + hidden + hidden * n_out + n_out
    policies = []
    rng = np.random.default_rng(0)
    for j in range(header["agents"]):
        policy = PolicyNetwork(n_in, n_out, hidden, rng)
        policy.net.set_flat(flat[j * per_policy : (j + 1) * per_policy])
        policies.append(policy)
    return policies, header
