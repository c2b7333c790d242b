"""Tabular Q-learning over (discretized observation, monitor state).

The learner state couples a discrete observation index with the state of
the specification monitor, which makes the optimal policy stationary on
the pair even though it is history dependent on the raw environment. The
Q-update uses the monitor's per-transition discount, never a global
constant. An optional shield filters each action before execution; no
reward is attached to an intervention.

Episode semantics: accept-reset keeps the episode running after each
acceptance; a monitor sink (training) and spacecraft failure (always)
terminate; evaluation runs the full horizon through safety violations,
ending early only on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rewards
from .dfa import Dfa
from .env import POINTING_TOL, SpacecraftEnv
from .rewards import EpisodeEvent, RewardConfig

_TRAIN_STREAM = 2
_EVAL_STREAM = 3

QTable = dict  # (obs_index, monitor_state) -> np.ndarray of action values


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    episodes: int = 5000
    episode_length: int = 100
    seed: int = 0
    update_on: str = "executed"  # or "proposed": credit the agent's choice
    # fraction of episodes over which epsilon anneals; it holds at
    # epsilon_end afterwards
    epsilon_decay_fraction: float = 1.0
    # starting value for newly seen state rows; safe to raise above zero
    # only when a shield filters execution
    optimistic_init: float = 0.0
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.episodes < 1 or self.episode_length < 1:
            raise ValueError("episodes and episode_length must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.update_on not in ("executed", "proposed"):
            raise ValueError(f"update_on must be 'executed' or 'proposed'")


class Discretizer:
    """Observation binning: the safety partition for (rate, wheel, charge)
    plus coarse pointing-error bins and the two access indicators."""

    def __init__(self, partition, pointing_edges=(POINTING_TOL, 0.04)):
        self.partition = partition
        self.pointing_edges = np.asarray(pointing_edges)
        s = partition.spec
        self._rate_edges = np.asarray(s.attitude_rate_edges[1:-1])
        self._wheel_edges = np.asarray(s.wheel_edges[1:-1])
        self._charge_edges = np.asarray(s.charge_edges[1:-1])
        self._dims = (
            len(s.attitude_rate_edges) - 1,
            len(s.wheel_edges) - 1,
            len(s.charge_edges) - 1,
            len(self.pointing_edges) + 1,
            2,
            2,
        )

    @property
    def capacity(self) -> int:
        return int(np.prod(self._dims))

    def __call__(self, observation) -> int:
        err, rate, wheel, charge, sun, target = observation[:6]
        ri = int(np.searchsorted(self._rate_edges, rate, side="right"))
        wi = int(np.searchsorted(self._wheel_edges, wheel, side="right"))
        ci = int(np.searchsorted(self._charge_edges, charge, side="right"))
        pi = int(np.searchsorted(self.pointing_edges, err, side="right"))
        nr, nw, nc, np_, _, _ = self._dims
        ri, wi, ci = min(ri, nr - 1), min(wi, nw - 1), min(ci, nc - 1)
        idx = ((ri * nw + wi) * nc + ci) * np_ + pi
        return (idx * 2 + int(sun)) * 2 + int(target)


def discretize(observation, partition, pointing_edges=(POINTING_TOL, 0.04)) -> int:
    return Discretizer(partition, pointing_edges)(observation)


@dataclass
class StepOutcome:
    obs_index: int
    labels: int
    failed: bool = False
    observation: np.ndarray | None = None
    coords: tuple | None = None


class SpacecraftSession:
    """Adapter presenting a SpacecraftEnv as a discrete learning session."""

    def __init__(self, env: SpacecraftEnv, discretizer: Discretizer):
        self.env = env
        self.discretizer = discretizer
        self.n_actions = len(env.action_names)

    def _outcome(self, obs, labels, failed=False) -> StepOutcome:
        return StepOutcome(
            obs_index=self.discretizer(obs),
            labels=labels,
            failed=failed,
            observation=obs,
            coords=self.env.coords(),
        )

    def reset(self, rng) -> StepOutcome:
        obs, labels = self.env.reset(rng)
        return self._outcome(obs, labels)

    def step(self, action: int, rng) -> StepOutcome:
        obs, labels, failed = self.env.step(action, rng)
        return self._outcome(obs, labels, failed)


def _q_row(q: QTable, key, n_actions, init=0.0) -> np.ndarray:
    row = q.get(key)
    if row is None:
        row = np.full(n_actions, init, dtype=float)
        q[key] = row
    return row


def _greedy(q: QTable, key, n_actions) -> int:
    row = q.get(key)
    if row is None:
        return 0
    return int(np.argmax(row))


@dataclass
class TrainResult:
    qtable: QTable
    episode_log: list  # (episode, value, terminal_event)
    avg_vf: float
    # mean over the final quarter of episodes, past the exploration
    # burn-in; this is the value reported next to deployment metrics
    settled_avg_vf: float


def train(session, monitor: Dfa, cfg: LearnerConfig, shield_runtime=None) -> TrainResult:
    """Q-learn against the monitored specification.

    The executed action is the shield-corrected one when a shield runtime
    is supplied; `cfg.update_on` chooses whether the update credits the
    executed or the proposed action.
    """
    q: QTable = {}
    n_actions = session.n_actions
    log = []
    denom = max(1.0, cfg.episodes * cfg.epsilon_decay_fraction)
    for ep in range(cfg.episodes):
        rng = np.random.default_rng([cfg.seed, _TRAIN_STREAM, ep])
        anneal = min(1.0, ep / denom)
        epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * anneal
        out = session.reset(rng)
        init = rewards.advance(monitor.z0, out.labels, monitor, cfg.reward)
        z = init.z_next
        reward_steps = [init.step]
        terminal_event = "horizon"
        if shield_runtime is not None:
            shield_runtime.reset(out.labels)
        if init.step.event is EpisodeEvent.SINK_TERMINATE:
            terminal_event = "sink"
        else:
            obs_idx = out.obs_index
            coords = out.coords
            for _t in range(cfg.episode_length):
                if rng.random() < epsilon:
                    proposed = int(rng.integers(n_actions))
                else:
                    proposed = int(
                        np.argmax(_q_row(q, (obs_idx, z), n_actions, cfg.optimistic_init))
                    )
                if shield_runtime is not None:
                    executed = shield_runtime.filter(coords, proposed).action
                else:
                    executed = proposed
                out = session.step(executed, rng)
                adv = rewards.advance(z, out.labels, monitor, cfg.reward)
                reward_steps.append(adv.step)
                terminal = adv.step.event is EpisodeEvent.SINK_TERMINATE or out.failed
                target = adv.step.reward
                if not terminal:
                    nxt = _q_row(q, (out.obs_index, adv.z_next), n_actions, cfg.optimistic_init)
                    target += adv.step.discount * float(np.max(nxt))
                update_action = executed if cfg.update_on == "executed" else proposed
                row = _q_row(q, (obs_idx, z), n_actions, cfg.optimistic_init)
                row[update_action] += cfg.alpha * (target - row[update_action])
                if shield_runtime is not None:
                    shield_runtime.update(out.labels)
                z = adv.z_next
                obs_idx = out.obs_index
                coords = out.coords
                if terminal:
                    terminal_event = (
                        "sink" if adv.step.event is EpisodeEvent.SINK_TERMINATE else "failure"
                    )
                    break
        value = rewards.cumulative_value(reward_steps)
        log.append((ep, value, terminal_event))
    values = [v for _ep, v, _event in log]
    tail = values[-max(1, len(values) // 4):]
    return TrainResult(
        qtable=q,
        episode_log=log,
        avg_vf=sum(values) / len(values),
        settled_avg_vf=sum(tail) / len(tail),
    )


@dataclass(frozen=True)
class Metrics:
    episodes: int
    avg_vf: float
    sat_pct: float
    violate_pct: float
    failure_pct: float
    interventions_sat: float
    interventions_unsat: float
    interventions_mean: float


@dataclass
class EpisodeRecord:
    episode: int
    satisfied_liveness: bool
    first_liveness: int | None
    violated_safety: bool
    first_violation: int | None
    failed: bool
    interventions: int
    value: float
    steps: int


@dataclass
class EvalResult:
    metrics: Metrics
    episodes: list
    trajectories: list


def evaluate(
    qtable: QTable,
    session,
    monitor: Dfa,
    dfa_liveness: Dfa,
    dfa_violation: Dfa,
    reward_cfg: RewardConfig,
    episodes: int = 1000,
    episode_length: int = 100,
    seed: int = 0,
    shield_runtime=None,
    record_trajectories: int = 0,
) -> EvalResult:
    """Greedy rollouts with ground-truth trace checking.

    Liveness satisfaction is first-accept on the liveness DFA; safety
    violation is first-accept on the violation DFA; failure is domain
    exit. The policy's own monitor keeps running (with accept-reset) so
    Q lookups stay on-distribution.
    """
    n_actions = session.n_actions
    records = []
    trajectories = []
    for ep in range(episodes):
        rng = np.random.default_rng([seed, _EVAL_STREAM, ep])
        out = session.reset(rng)
        adv0 = rewards.advance(monitor.z0, out.labels, monitor, reward_cfg)
        z = adv0.z_next
        reward_steps = [adv0.step]
        zl = dfa_liveness.step(dfa_liveness.z0, out.labels)
        zv = dfa_violation.step(dfa_violation.z0, out.labels)
        first_sat = 0 if zl in dfa_liveness.accepting else None
        first_viol = 0 if zv in dfa_violation.accepting else None
        if shield_runtime is not None:
            shield_runtime.reset(out.labels)
        interventions = 0
        failed = False
        steps = 0
        trajectory = None
        if ep < record_trajectories:
            trajectory = [_trajectory_row(0, None, out, adv0.step.reward, z, False)]
        obs_idx = out.obs_index
        coords = out.coords
        for t in range(episode_length):
            proposed = _greedy(qtable, (obs_idx, z), n_actions)
            intervened = False
            executed = proposed
            if shield_runtime is not None:
                decision = shield_runtime.filter(coords, proposed)
                executed = decision.action
                intervened = decision.intervened
                interventions += int(intervened)
            out = session.step(executed, rng)
            steps = t + 1
            adv = rewards.advance(z, out.labels, monitor, reward_cfg)
            reward_steps.append(adv.step)
            zl = dfa_liveness.step(zl, out.labels)
            zv = dfa_violation.step(zv, out.labels)
            if first_sat is None and zl in dfa_liveness.accepting:
                first_sat = steps
            if first_viol is None and zv in dfa_violation.accepting:
                first_viol = steps
            if shield_runtime is not None:
                shield_runtime.update(out.labels)
            z = adv.z_next
            obs_idx = out.obs_index
            coords = out.coords
            if trajectory is not None:
                trajectory.append(
                    _trajectory_row(steps, executed, out, adv.step.reward, z, intervened)
                )
            if out.failed:
                failed = True
                break
        records.append(
            EpisodeRecord(
                episode=ep,
                satisfied_liveness=first_sat is not None,
                first_liveness=first_sat,
                violated_safety=first_viol is not None,
                first_violation=first_viol,
                failed=failed,
                interventions=interventions,
                value=rewards.cumulative_value(reward_steps),
                steps=steps,
            )
        )
        if trajectory is not None:
            trajectories.append(trajectory)
    return EvalResult(
        metrics=_aggregate(records), episodes=records, trajectories=trajectories
    )


def _trajectory_row(step, mode, out: StepOutcome, reward, z, intervened):
    obs = out.observation
    return {
        "step": step,
        "mode": mode,
        "observation": None if obs is None else [float(x) for x in obs],
        "labels": out.labels,
        "reward": reward,
        "dfa_state": z,
        "intervened": bool(intervened),
    }


def _aggregate(records) -> Metrics:
    n = len(records)
    if n == 0:
        raise ValueError("no episodes to aggregate")
    sat = [r for r in records if r.satisfied_liveness]
    unsat = [r for r in records if not r.satisfied_liveness]

    def mean_interventions(group):
        if not group:
            return float("nan")
        return sum(r.interventions for r in group) / len(group)

    return Metrics(
        episodes=n,
        avg_vf=sum(r.value for r in records) / n,
        sat_pct=100.0 * len(sat) / n,
        violate_pct=100.0 * sum(r.violated_safety for r in records) / n,
        failure_pct=100.0 * sum(r.failed for r in records) / n,
        interventions_sat=mean_interventions(sat),
        interventions_unsat=mean_interventions(unsat),
        interventions_mean=sum(r.interventions for r in records) / n,
    )


# --- policy serialization ---------------------------------------------------


def qtable_to_json(q: QTable) -> dict:
    return {
        f"{obs},{z}": [float(v) for v in row] for (obs, z), row in sorted(q.items())
    }


def qtable_from_json(data: dict) -> QTable:
    q: QTable = {}
    for key, values in data.items():
        obs, z = key.split(",")
        q[(int(obs), int(z))] = np.asarray(values, dtype=float)
    return q
