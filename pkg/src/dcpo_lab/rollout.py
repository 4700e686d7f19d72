"""Group sampling and group-relative advantages."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .policy import Context, PolicyParams, sample_token, token_logprobs
from .tasks import Task, reward


@dataclass(frozen=True)
class Trajectory:
    query_id: int
    tokens: tuple[int, ...]
    behavior_logps: np.ndarray  # log pi_old at the sampling temperature
    base_logps: np.ndarray  # log pi_old at T = 1
    tempered_logps: np.ndarray  # log pi_old at the schedule temperature
    reward: int

    @property
    def contexts(self) -> list[Context]:
        return [Context(self.query_id, self.tokens[:t]) for t in range(len(self.tokens))]

    @property
    def log_rho(self) -> np.ndarray:
        return self.tempered_logps - self.base_logps

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)


@dataclass(frozen=True)
class RolloutGroup:
    query_id: int
    trajectories: tuple[Trajectory, ...]
    sampling_T: float
    schedule_T: float
    advantages: np.ndarray | None = None

    @property
    def G(self) -> int:
        return len(self.trajectories)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([tr.reward for tr in self.trajectories], dtype=float)


def _logps_along(params: PolicyParams, query_id: int, tokens, T: float) -> np.ndarray:
    ctx = Context(query_id)
    out = np.empty(len(tokens))
    for t, tok in enumerate(tokens):
        out[t] = token_logprobs(params, ctx, T)[tok]
        ctx = ctx.extend(tok)
    return out


def sample_trajectory(params: PolicyParams, task: Task, query_id: int, sampling_T: float,
                      schedule_T: float, rng: np.random.Generator) -> Trajectory:
    eos = task.vocab.eos
    ctx = Context(query_id)
    tokens, behav, base, temp = [], [], [], []
    for _ in range(task.horizon):
        lp_base = token_logprobs(params, ctx, 1.0)
        lp_samp = lp_base if sampling_T == 1.0 else token_logprobs(params, ctx, sampling_T)
        lp_sched = lp_base if schedule_T == 1.0 else (
            lp_samp if schedule_T == sampling_T else token_logprobs(params, ctx, schedule_T))
        tok = sample_token(lp_samp, rng.random())
        tokens.append(tok)
        behav.append(lp_samp[tok])
        base.append(lp_base[tok])
        temp.append(lp_sched[tok])
        if tok == eos:
            break
        ctx = ctx.extend(tok)
    tokens = tuple(tokens)
    return Trajectory(query_id, tokens, np.array(behav), np.array(base), np.array(temp),
                      reward(task, query_id, tokens))


def sample_group(params: PolicyParams, task: Task, query_id: int, G: int, sampling_T: float = 1.0,
                 schedule_T: float = 1.0, rng_seed=None) -> RolloutGroup:
    """Draw ``G`` responses for one query at ``sampling_T``.

    ``rng_seed`` may be an int, a sequence of ints (hashed by SeedSequence) or a
    ``numpy.random.Generator``.
    """
    if G < 2:
        raise ValueError(f"group size must be >= 2, got {G}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    trajs = tuple(sample_trajectory(params, task, query_id, sampling_T, schedule_T, rng) for _ in range(G))
    return RolloutGroup(query_id, trajs, float(sampling_T), float(schedule_T))


def retemper(params: PolicyParams, group: RolloutGroup, schedule_T: float) -> RolloutGroup:
    """Recompute tempered log-probs of an existing group for a new schedule temperature."""
    trajs = tuple(
        replace(tr, tempered_logps=tr.base_logps.copy() if schedule_T == 1.0
                else _logps_along(params, tr.query_id, tr.tokens, schedule_T))
        for tr in group.trajectories)
    return replace(group, trajectories=trajs, schedule_T=float(schedule_T))


def group_advantages(group: RolloutGroup) -> RolloutGroup:
    """(R - mean) / population std; a zero-std group gets all-zero advantages."""
    r = group.rewards
    std = r.std()
    adv = np.zeros_like(r) if std == 0 else (r - r.mean()) / std
    return replace(group, advantages=adv)


def group_to_records(group: RolloutGroup) -> list[dict]:
    return [{
        "query_id": tr.query_id,
        "tokens": list(tr.tokens),
        "reward": tr.reward,
        "behavior_logps": tr.behavior_logps.tolist(),
        "base_logps": tr.base_logps.tolist(),
        "tempered_logps": tr.tempered_logps.tolist(),
    } for tr in group.trajectories]


def dump_groups(groups, path) -> None:
    """Write trajectories as JSON lines, one record per trajectory."""
    with open(path, "w") as f:
        for g in groups:
            for rec in group_to_records(g):
                f.write(json.dumps(rec) + "\n")
