"""Episodic double deep Q-learning for the frequency governor.

One execution of the task set is one episode. The terminal reward blends the
share of time spent at the cheap frequency with the average utilization, and
is zeroed (or scaled down) when deadline misses push the exceed rate past a
threshold. Rewards are sparse: only the final transition of an episode is
non-zero. Episodes are stored in a 10-bucket replay pool keyed by terminal
reward, and sampling favors the higher buckets.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoders import (
    EncodedState,
    EncoderConfig,
    TegmState,
    initial_tegm_state,
    initial_tem_state,
    state_digest,
    tegm_network_inputs,
    tegm_update,
    tem_network_inputs,
    tem_update,
)
from .network import (
    QNetworkParams,
    apply_update,
    backward,
    clone_params,
    gru_step,
    init_adam,
    init_params,
    build_descriptor,
    q_forward_batch,
    q_from_hidden,
)
from .simcore import EpisodeSummary, PeriodObservation, SimConfig, run_episode
from .taskmodel import TaskSetSpec

N_BUCKETS = 10


class RlError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    state: EncodedState
    action: float  # Hz, one of the two candidate frequencies
    reward: float
    next_state: EncodedState
    terminal: bool


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; every value is configuration, none is tuned
    per task set."""

    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    epsilon_decay_episodes: int = 300
    batch_size: int = 32
    target_sync_every: int = 10  # training iterations between target syncs
    episodes: int = 500
    eval_runs_per_training: int = 5
    ddl_threshold: float = 0.05  # acceptable exceed rate
    learning_rate: float = 1e-3
    replay_bucket_capacity: int = 200

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma <= 1.0):
            raise RlError("gamma must be in [0, 1]")
        if not (0.0 < self.ddl_threshold < 1.0):
            raise RlError("ddl_threshold must be in (0, 1)")
        if self.batch_size < 1 or self.episodes < 1:
            raise RlError("batch_size and episodes must be >= 1")
        if self.target_sync_every < 1 or self.eval_runs_per_training < 1:
            raise RlError("target_sync_every and eval_runs_per_training must be >= 1")
        for name in ("epsilon_start", "epsilon_final"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise RlError(f"{name} must be in [0, 1]")
        if self.epsilon_decay_episodes < 1:
            raise RlError("epsilon_decay_episodes must be >= 1")


def epsilon_at(cfg: TrainConfig, episode_idx: int) -> float:
    """Linear decay over the first epsilon_decay_episodes, then constant."""
    if episode_idx >= cfg.epsilon_decay_episodes:
        return cfg.epsilon_final
    frac = episode_idx / cfg.epsilon_decay_episodes
    return cfg.epsilon_start + (cfg.epsilon_final - cfg.epsilon_start) * frac


def compute_reward(
    summary: EpisodeSummary,
    rl_freqs: Sequence[float],
    taskset: TaskSetSpec,
    threshold: float,
) -> float:
    """Terminal episode reward in [0, 1].

    Miss-free episodes score the mean of the cheap-frequency time share and
    the average utilization. With misses, the exceed rate (one minus the mean
    deadline/execution ratio over all tasks, missed tasks contributing) either
    zeroes the reward or scales the halved reward, never exceeding it.
    """
    if len(set(rl_freqs)) != 2:
        raise RlError("reward expects exactly two candidate frequencies")
    if not (summary.total_time > 0):
        raise RlError("episode has zero total time")
    f_lo, f_hi = min(rl_freqs), max(rl_freqs)
    denom = f_hi**3 - f_lo**3
    r_freq = 0.0
    for f in rl_freqs:
        share = summary.time_at_freq.get(f, 0.0) / summary.total_time
        r_freq += (1.0 - (f**3 - f_lo**3) / denom) * share
    r_util = summary.avg_utilization
    reward = 0.5 * r_freq + 0.5 * r_util
    if summary.any_missed:
        n = taskset.n_tasks
        e_r = (
            sum(
                taskset.tasks[i].relative_deadline / summary.exet[i]
                for i in range(n)
                if summary.missed[i]
            )
            / n
        )
        if 1.0 - e_r > threshold:
            reward = 0.0
        else:
            reward = min(0.5 * reward, 0.5 * reward * e_r * 10.0)
    return reward


def bucket_index(reward: float) -> int:
    if not (0.0 <= reward <= 1.0):
        raise RlError(f"reward must be in [0, 1], got {reward}")
    return min(int(reward * N_BUCKETS), N_BUCKETS - 1)


class ReplayPool:
    """Ten FIFO buckets of transitions, keyed by the episode's terminal reward.
    Bucket b holds rewards in [b/10, (b+1)/10); sampling weights bucket b by
    b + 1 among the non-empty buckets."""

    def __init__(self, bucket_capacity: int = 200):
        if bucket_capacity < 1:
            raise RlError("bucket_capacity must be >= 1")
        self.capacity = bucket_capacity
        self.buckets: list[deque[Transition]] = [deque() for _ in range(N_BUCKETS)]
        self.inserted = [0] * N_BUCKETS
        self.evicted = [0] * N_BUCKETS

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets)

    def insert_episode(self, transitions: Sequence[Transition], terminal_reward: float) -> int:
        """Store a whole episode in the bucket of its terminal reward."""
        b = bucket_index(terminal_reward)
        bucket = self.buckets[b]
        for tr in transitions:
            bucket.append(tr)
            self.inserted[b] += 1
            if len(bucket) > self.capacity:
                bucket.popleft()
                self.evicted[b] += 1
        return b

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        nonempty = [b for b in range(N_BUCKETS) if self.buckets[b]]
        if not nonempty:
            raise RlError("cannot sample from an empty replay pool")
        weights = np.array([b + 1 for b in nonempty], dtype=np.float64)
        probs = weights / weights.sum()
        picks = rng.choice(len(nonempty), size=batch_size, p=probs)
        out = []
        for pick in picks:
            bucket = self.buckets[nonempty[int(pick)]]
            out.append(bucket[int(rng.integers(len(bucket)))])
        return out


def encode_inputs(
    params: QNetworkParams, state: EncodedState, action: float, cfg: EncoderConfig
):
    if params.desc.variant == "tegm":
        return tegm_network_inputs(state, action, cfg)
    return tem_network_inputs(state, action, cfg)


def ddqn_targets(
    online: QNetworkParams,
    target: QNetworkParams,
    batch: Sequence[Transition],
    gamma: float,
    cfg: EncoderConfig,
) -> np.ndarray:
    """Regression targets: the online net picks the next action, the target
    net scores it; terminal transitions regress on the raw reward."""
    if online.desc != target.desc:
        raise RlError("online and target networks must share a descriptor")
    freqs = cfg.rl_freqs
    targets = np.array([tr.reward for tr in batch], dtype=np.float64)
    live = [k for k, tr in enumerate(batch) if not tr.terminal]
    if not live:
        return targets
    per_action = []
    for action in freqs:
        inputs = [encode_inputs(online, batch[k].next_state, action, cfg) for k in live]
        per_action.append(q_forward_batch(online, inputs)[0])
    q_online = np.stack(per_action, axis=1)  # (n_live, n_actions)
    best = np.argmax(q_online, axis=1)  # ties resolve to the lower frequency
    chosen_inputs = [
        encode_inputs(target, batch[k].next_state, freqs[int(best[j])], cfg)
        for j, k in enumerate(live)
    ]
    q_target = q_forward_batch(target, chosen_inputs)[0]
    for j, k in enumerate(live):
        targets[k] += gamma * q_target[j]
    return targets


def rl_decide(
    params: QNetworkParams,
    state: EncodedState,
    rl_freqs: Sequence[float],
    epsilon: float,
    rng: np.random.Generator,
    cfg: EncoderConfig,
) -> float:
    """Epsilon-greedy action: explore uniformly, otherwise argmax Q with ties
    broken toward the lower frequency."""
    if not (0.0 <= epsilon <= 1.0):
        raise RlError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return float(rl_freqs[int(rng.integers(len(rl_freqs)))])
    qs = [
        q_forward_batch(params, [encode_inputs(params, state, action, cfg)])[0][0]
        for action in rl_freqs
    ]
    return float(rl_freqs[int(np.argmax(qs))])


class RlGovernor:
    """Per-episode decision callback: updates the encoder state with each new
    observation, then picks a frequency. Keeps the recurrent hidden state
    incrementally (one cell step per period), which matches evaluating the
    whole history from scratch."""

    def __init__(
        self,
        params: QNetworkParams,
        cfg: EncoderConfig,
        epsilon: float,
        rng: Optional[np.random.Generator] = None,
    ):
        self.params = params
        self.cfg = cfg
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.variant = params.desc.variant
        self.state: EncodedState = (
            initial_tegm_state(cfg) if self.variant == "tegm" else initial_tem_state(cfg)
        )
        self.hidden = np.zeros(params.desc.gru_hidden)
        self.states: list[EncodedState] = []
        self.actions: list[float] = []

    def _advance(self, obs: PeriodObservation) -> None:
        if self.variant == "tegm":
            self.state = tegm_update(self.state, obs.labels, obs, self.cfg)
            combo = self.cfg.combo_index(obs.freq, obs.util_max)
            x = np.array(
                [combo / (self.cfg.n_combos - 1), obs.duration / self.cfg.t_norm]
            )
            self.hidden = gru_step(self.params.gru, x, self.hidden)
        else:
            self.state = tem_update(self.state, obs.labels, obs, self.cfg)

    def _greedy_action(self) -> float:
        freqs = self.cfg.rl_freqs
        if self.variant == "tegm":
            tails = np.stack(
                [tegm_network_inputs(self.state, a, self.cfg)[1] for a in freqs]
            )
            qs = q_from_hidden(self.params, self.hidden, tails)
        else:
            vecs = [tem_network_inputs(self.state, a, self.cfg) for a in freqs]
            qs = q_forward_batch(self.params, vecs)[0]
        return float(freqs[int(np.argmax(qs))])

    def __call__(self, obs: Optional[PeriodObservation]) -> float:
        if obs is not None:
            self._advance(obs)
        self.states.append(self.state)
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            action = float(self.cfg.rl_freqs[int(self.rng.integers(len(self.cfg.rl_freqs)))])
        else:
            action = self._greedy_action()
        self.actions.append(action)
        return action

    def final_state(self, last_obs: PeriodObservation) -> EncodedState:
        if self.variant == "tegm":
            return tegm_update(self.state, last_obs.labels, last_obs, self.cfg)
        return tem_update(self.state, last_obs.labels, last_obs, self.cfg)


@dataclass(frozen=True)
class EpisodeResult:
    summary: EpisodeSummary
    transitions: tuple[Transition, ...]
    observations: tuple[PeriodObservation, ...]
    reward: float


def run_rl_episode(
    taskset: TaskSetSpec,
    sim_cfg: SimConfig,
    enc_cfg: EncoderConfig,
    params: QNetworkParams,
    epsilon: float,
    ddl_threshold: float,
    rng: Optional[np.random.Generator] = None,
) -> EpisodeResult:
    """Run one episode under the network's policy and record its transitions.
    Only the final transition carries the (terminal) reward."""
    governor = RlGovernor(params, enc_cfg, epsilon, rng)
    summary, observations = run_episode(taskset, sim_cfg, governor, record=True)
    assert observations is not None
    reward = compute_reward(summary, enc_cfg.rl_freqs, taskset, ddl_threshold)
    states = governor.states + [governor.final_state(observations[-1])]
    n = len(governor.actions)
    transitions = tuple(
        Transition(
            state=states[k],
            action=governor.actions[k],
            reward=reward if k == n - 1 else 0.0,
            next_state=states[k + 1],
            terminal=(k == n - 1),
        )
        for k in range(n)
    )
    return EpisodeResult(
        summary=summary,
        transitions=transitions,
        observations=tuple(observations),
        reward=reward,
    )


@dataclass(frozen=True)
class TrainResult:
    params: QNetworkParams
    reward_curve: tuple[tuple[float, float], ...]  # (mean, stderr) per training
    eval_exets: tuple[tuple[float, ...], ...]  # per training: mean exet per task
    eval_rewards: tuple[tuple[float, ...], ...]  # per training: raw eval rewards


def train(
    taskset: TaskSetSpec,
    sim_cfg: SimConfig,
    train_cfg: TrainConfig,
    variant: str = "tegm",
    mlp_hidden: int = 30,
    seed: int = 0,
    enc_cfg: Optional[EncoderConfig] = None,
) -> TrainResult:
    """Alternate episode generation and one gradient iteration per training,
    then evaluate the updated policy greedily. Deterministic given the seed."""
    if enc_cfg is None:
        enc_cfg = EncoderConfig(
            n_tasks=taskset.n_tasks,
            rl_freqs=tuple(sim_cfg.rl_freqs),
            t_norm=taskset.hyperperiod_T,
        )
    desc = build_descriptor(variant, enc_cfg, mlp_hidden)
    seq = np.random.SeedSequence(seed)
    init_seed, explore_seed, sample_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    online = init_params(desc, init_seed)
    target = clone_params(online)
    opt = init_adam(online)
    pool = ReplayPool(train_cfg.replay_bucket_capacity)
    explore_rng = np.random.default_rng(explore_seed)
    sample_rng = np.random.default_rng(sample_seed)
    curve: list[tuple[float, float]] = []
    exets: list[tuple[float, ...]] = []
    all_eval_rewards: list[tuple[float, ...]] = []
    for episode in range(train_cfg.episodes):
        eps = epsilon_at(train_cfg, episode)
        rollout = run_rl_episode(
            taskset, sim_cfg, enc_cfg, online, eps, train_cfg.ddl_threshold, explore_rng
        )
        pool.insert_episode(rollout.transitions, rollout.reward)
        batch = pool.sample(train_cfg.batch_size, sample_rng)
        targets = ddqn_targets(online, target, batch, train_cfg.gamma, enc_cfg)
        inputs = [encode_inputs(online, tr.state, tr.action, enc_cfg) for tr in batch]
        grads, _ = backward(online, inputs, targets)
        online, opt = apply_update(online, grads, opt, train_cfg.learning_rate)
        if (episode + 1) % train_cfg.target_sync_every == 0:
            target = clone_params(online)
        eval_rewards = []
        eval_exets = np.zeros(taskset.n_tasks)
        for _ in range(train_cfg.eval_runs_per_training):
            ev = run_rl_episode(
                taskset, sim_cfg, enc_cfg, online, 0.0, train_cfg.ddl_threshold
            )
            eval_rewards.append(ev.reward)
            eval_exets += np.array(ev.summary.exet)
        eval_exets /= train_cfg.eval_runs_per_training
        mean = float(np.mean(eval_rewards))
        if len(set(eval_rewards)) > 1:
            stderr = float(np.std(eval_rewards, ddof=1) / np.sqrt(len(eval_rewards)))
        else:
            stderr = 0.0
        curve.append((mean, stderr))
        exets.append(tuple(float(v) for v in eval_exets))
        all_eval_rewards.append(tuple(eval_rewards))
    return TrainResult(
        params=online,
        reward_curve=tuple(curve),
        eval_exets=tuple(exets),
        eval_rewards=tuple(all_eval_rewards),
    )


def export_episode_log(transitions: Sequence[Transition], path: str) -> None:
    """Debug dump: one row per transition with a short state digest. Format is
    for inspection only and may change."""
    lines = ["# dvfslab episode-log v1", "idx,state,action,reward,terminal"]
    for k, tr in enumerate(transitions):
        lines.append(
            f"{k},{state_digest(tr.state)},{tr.action:.0f},{tr.reward:.12g},{int(tr.terminal)}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
