"""Goal-conditioned DDPG with hindsight goal substitution and learning-progress replay bias."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from le2.env import ACTION_DIM, OBS_DIM
from le2.goal_sampler import probability_matching
from le2.memory import TransitionBatch
from le2.nets import MLP, Adam, Normalizer


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LearnerParams:
    hidden: int = 256
    gamma: float = 0.98
    polyak: float = 0.95
    batch_size: int = 256
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    noise_scale: float = 0.2
    random_eps: float = 0.3
    action_l2: float = 1.0
    n_cycles: int = 2
    n_batches: int = 40
    rho_pos: float = 0.5
    eps_replay: float = 0.2
    clip_target: bool = True
    norm_eps: float = 0.01
    norm_clip: float = 5.0
    lp_window: int = 5
    rollouts_per_goal: int = 1
    final_layer_scale: float = 1e-3


@dataclass
class AugmentedBatch:
    obs: np.ndarray
    obs0: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    goal_ids: np.ndarray
    goals: np.ndarray  # substituted encodings
    rewards: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


# ----------------------------------------------------------------------------- learning progress


class LPTracker:
    """Per-goal competence from self-evaluations and absolute learning progress.

    Competence is the mean of the last ``window`` self-evaluation success
    rates; ALP is its absolute change w.r.t. the ``window`` evaluations before.
    """

    def __init__(self, window: int = 5):
        self.window = int(window)
        self.history: dict[int, list[float]] = {}

    def record(self, goal_id: int, success_rate: float) -> None:
        if not 0.0 <= success_rate <= 1.0:
            raise ValueError("success rate must lie in [0, 1]")
        self.history.setdefault(int(goal_id), []).append(float(success_rate))

    def competence(self, goal_id: int) -> float:
        h = self.history.get(goal_id)
        return float(np.mean(h[-self.window:])) if h else 0.0

    def alp(self, goal_id: int) -> float:
        h = self.history.get(goal_id, [])
        recent = h[-self.window:]
        previous = h[-2 * self.window: -self.window] if len(h) > self.window else []
        if not previous:
            return 0.0
        return abs(float(np.mean(recent)) - float(np.mean(previous)))

    def alp_vector(self, n_goals: int) -> np.ndarray:
        return np.array([self.alp(g) for g in range(n_goals)], dtype=np.float64)


# ----------------------------------------------------------------------------- hindsight


def _pick(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF choice; rows of ``weights`` need a positive sum."""
    cum = np.cumsum(weights, axis=1)
    target = u * cum[:, -1]
    idx = (cum <= target[:, None]).sum(axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


def substitution_probabilities(achieved_row: np.ndarray, alp: np.ndarray, eps: float) -> np.ndarray:
    """ALP probability matching restricted to the achieved goals of one transition."""
    p = np.zeros(len(achieved_row))
    members = np.flatnonzero(achieved_row)
    if len(members):
        p[members] = probability_matching(alp[members], eps)
    return p


def hindsight_augment(batch: TransitionBatch, encodings: np.ndarray, reward_fn: Callable,
                      alp: np.ndarray, rho_pos: float, eps_replay: float,
                      rng: np.random.Generator, episode_length: int) -> AugmentedBatch:
    """Substitute a discovered goal into every transition and attach its reward.

    ``reward_fn(batch)`` returns the (n, n_goals) boolean matrix of goals judged
    achieved at ``next_obs``. With probability ``rho_pos`` (and a non-empty
    achieved set) the substitute is an achieved goal chosen by ALP matching;
    otherwise a uniformly drawn non-achieved goal, reward 0.
    """
    n, n_goals = len(batch), len(encodings)
    if n_goals == 0:
        raise ValueError("hindsight substitution needs at least one discovered goal")
    achieved = np.asarray(reward_fn(batch), dtype=bool).reshape(n, n_goals)
    alp = np.asarray(alp, dtype=np.float64)[:n_goals]
    u_pos = rng.random(n)
    u_goal = rng.random(n)
    n_ach = achieved.sum(axis=1)
    has_pos = n_ach > 0
    has_neg = n_ach < n_goals
    positive = has_pos & ((u_pos < rho_pos) | ~has_neg)

    goal_ids = np.empty(n, dtype=np.int64)
    if positive.any():
        a = achieved[positive]
        k = a.sum(axis=1, keepdims=True)
        mass = (a * alp).sum(axis=1, keepdims=True)
        match = np.where(mass > 0, a * alp / np.where(mass > 0, mass, 1.0), a / k)
        w = a * (eps_replay / k + (1.0 - eps_replay) * match)
        goal_ids[positive] = _pick(w, u_goal[positive])
    negative = ~positive
    if negative.any():
        goal_ids[negative] = _pick((~achieved[negative]).astype(np.float64), u_goal[negative])
    rewards = achieved[np.arange(n), goal_ids].astype(np.float64)
    return AugmentedBatch(
        obs=batch.obs, obs0=batch.obs0, actions=batch.actions, next_obs=batch.next_obs,
        goal_ids=goal_ids, goals=encodings[goal_ids], rewards=rewards,
        done=(batch.t == episode_length - 1).astype(np.float64),
    )


# ----------------------------------------------------------------------------- DDPG


def policy_input(obs, obs0, goal) -> np.ndarray:
    obs, obs0, goal = np.atleast_2d(obs), np.atleast_2d(obs0), np.atleast_2d(goal)
    if len(goal) != len(obs):
        goal = np.broadcast_to(goal, (len(obs), goal.shape[1]))
    return np.hstack([obs, obs - obs0, goal])


class DDPG:
    def __init__(self, goal_dim: int, params: Optional[LearnerParams] = None,
                 rng: Optional[np.random.Generator] = None):
        self.params = p = params or LearnerParams()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.goal_dim = int(goal_dim)
        self.input_dim = 2 * OBS_DIM + self.goal_dim
        h = p.hidden
        self.actor = MLP([self.input_dim, h, h, ACTION_DIM], "tanh", rng, final_scale=p.final_layer_scale)
        self.critic = MLP([self.input_dim + ACTION_DIM, h, h, 1], "linear", rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.n_params, p.lr_actor)
        self.critic_opt = Adam(self.critic.n_params, p.lr_critic)
        self.normalizer = Normalizer(self.input_dim, p.norm_eps, p.norm_clip)
        self.updates = 0

    # -- acting

    def act(self, obs, obs0, goal, noise_scale: float = 0.0, rng: Optional[np.random.Generator] = None,
            random_eps: float = 0.0) -> np.ndarray:
        x = self.normalizer(policy_input(obs, obs0, goal))
        a = self.actor.forward(x)[0]
        if noise_scale > 0.0:
            a = a + noise_scale * rng.standard_normal(ACTION_DIM)
        a = np.clip(a, -1.0, 1.0)
        if random_eps > 0.0 and rng.random() < random_eps:
            a = rng.uniform(-1.0, 1.0, ACTION_DIM)
        return a

    # -- losses and gradients (also used by the finite-difference checks)

    def critic_targets(self, x2: np.ndarray, rewards: np.ndarray, done: np.ndarray) -> np.ndarray:
        a2 = self.actor_target.forward(x2)
        q2 = self.critic_target.forward(np.hstack([x2, a2]))[:, 0]
        y = rewards + self.params.gamma * (1.0 - done) * q2
        if self.params.clip_target:
            y = np.clip(y, 0.0, 1.0 / (1.0 - self.params.gamma))
        return y

    def critic_loss_grad(self, x, actions, y):
        q, acts = self.critic.forward(np.hstack([x, actions]), keep=True)
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        grad, _ = self.critic.backward(acts, (2.0 / len(y)) * err[:, None])
        return loss, grad

    def actor_loss_grad(self, x):
        pi, a_acts = self.actor.forward(x, keep=True)
        q, c_acts = self.critic.forward(np.hstack([x, pi]), keep=True)
        n = len(x)
        loss = float(-np.mean(q) + self.params.action_l2 * np.mean(pi ** 2))
        _, g_in = self.critic.backward(c_acts, np.full((n, 1), -1.0 / n), want_input=True)
        g_pi = g_in[:, self.input_dim:] + self.params.action_l2 * 2.0 * pi / pi.size
        grad, _ = self.actor.backward(a_acts, g_pi)
        return loss, grad

    def update(self, batch: AugmentedBatch, update_normalizer: bool = True) -> dict:
        if len(batch) == 0:
            raise ValueError("empty batch")
        raw = policy_input(batch.obs, batch.obs0, batch.goals)
        if update_normalizer:
            self.normalizer.update(raw)
        x = self.normalizer(raw)
        x2 = self.normalizer(policy_input(batch.next_obs, batch.obs0, batch.goals))
        y = self.critic_targets(x2, batch.rewards, batch.done)
        c_loss, c_grad = self.critic_loss_grad(x, batch.actions, y)
        a_loss, a_grad = self.actor_loss_grad(x)
        if not (math.isfinite(c_loss) and math.isfinite(a_loss)):
            raise NonFiniteLossError(
                f"non-finite loss after {self.updates} updates: critic={c_loss} actor={a_loss}; "
                f"|theta_actor|max={np.abs(self.actor.params).max():.3g} "
                f"|theta_critic|max={np.abs(self.critic.params).max():.3g}"
            )
        self.critic_opt.step(self.critic.params, c_grad)
        self.actor_opt.step(self.actor.params, a_grad)
        self.soft_update()
        self.updates += 1
        return {"critic_loss": c_loss, "actor_loss": a_loss, "q_target_mean": float(y.mean())}

    def soft_update(self, tau: Optional[float] = None) -> None:
        tau = self.params.polyak if tau is None else tau
        for tgt, src in ((self.actor_target, self.actor), (self.critic_target, self.critic)):
            tgt.params *= tau
            tgt.params += (1.0 - tau) * src.params

    # -- flat parameter views for worker merging

    def main_params(self) -> np.ndarray:
        return np.concatenate([self.actor.params, self.critic.params])

    def target_params(self) -> np.ndarray:
        return np.concatenate([self.actor_target.params, self.critic_target.params])

    def set_main_params(self, flat: np.ndarray) -> None:
        na = self.actor.n_params
        self.actor.params[:] = flat[:na]
        self.critic.params[:] = flat[na:]

    def set_target_params(self, flat: np.ndarray) -> None:
        na = self.actor_target.n_params
        self.actor_target.params[:] = flat[:na]
        self.critic_target.params[:] = flat[na:]


def merge_worker_updates(params: np.ndarray, deltas: Sequence[np.ndarray]) -> np.ndarray:
    """Add the elementwise sum of the workers' parameter deltas to ``params`` in place."""
    if not deltas:
        return np.zeros_like(params)
    for d in deltas:
        if np.shape(d) != params.shape:
            raise ValueError(f"delta shape {np.shape(d)} does not match parameters {params.shape}")
    total = np.sum(deltas, axis=0)
    params += total
    return total


# ----------------------------------------------------------------------------- rollouts


def run_episode(env, learner: DDPG, goal_encoding: np.ndarray, noise_scale: float = 0.0,
                random_eps: float = 0.0, rng: Optional[np.random.Generator] = None):
    """One fixed-length episode; returns (observations (T+1, 17), actions (T, 4))."""
    T = env.T
    obs = np.empty((T + 1, OBS_DIM))
    actions = np.empty((T, ACTION_DIM))
    obs[0] = env.reset()
    for t in range(T):
        actions[t] = learner.act(obs[t], obs[0], goal_encoding, noise_scale, rng, random_eps)
        obs[t + 1] = env.step(actions[t])
    return obs, actions


def self_evaluate(env, learner: DDPG, encodings: np.ndarray, goal_ids: Sequence[int], judge: Callable,
                  lp: LPTracker, rollouts_per_goal: int = 1) -> dict[int, float]:
    """Noiseless rollouts per goal; ``judge(initial, final, goal_id) -> bool`` decides success."""
    rates = {}
    for g in goal_ids:
        wins = 0
        for _ in range(rollouts_per_goal):
            obs, _ = run_episode(env, learner, encodings[g])
            wins += bool(judge(obs[0], obs[-1], g))
        if rollouts_per_goal:
            rates[g] = wins / rollouts_per_goal
            lp.record(g, rates[g])
    return rates
