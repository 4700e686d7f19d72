"""The training protocol behind the dynamics checks, in one place.

Every comparison run (J3 vs J4, DCPO at several entropy targets against GRPO,
and the two DCPO ablations) uses the same task, optimizer and temperature
pair; only the objective kind and H0 change. ``run_protocol`` trains each
(kind, H0, seed) once and caches the records for the session.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .objectives import ObjectiveSpec
from .trainer import TrainConfig, detect_collapse, train, trailing_mean

PROTOCOL = dict(
    task="multipath",
    steps=300,
    G=8,
    n_minibatch=4,
    optimizer="adam",
    learning_rate=0.05,
)
PROTOCOL_OBJECTIVE = dict(alpha_mode="fixed", alpha=10.0, T_high=1.5, T_low=1 / 1.5)
FLOOR = 0.05
WINDOW = 50
SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class RunSummary:
    kind: str
    H0: float
    seed: int
    trailing_entropy: float
    terminal_reward: float
    collapsed: bool
    seconds: float


def protocol_config(kind: str, H0: float = 0.25, seed: int = 0, **overrides) -> TrainConfig:
    spec = ObjectiveSpec(kind, H0=H0, **PROTOCOL_OBJECTIVE)
    return TrainConfig(objective=spec, seed=seed, **{**PROTOCOL, **overrides})


_CACHE: dict[tuple, RunSummary] = {}


def run_protocol(kind: str, H0: float = 0.25, seed: int = 0) -> RunSummary:
    """Train one protocol run (memoized per process)."""
    key = (kind, float(H0), int(seed))
    if key not in _CACHE:
        t0 = time.perf_counter()
        res = train(protocol_config(kind, H0, seed))
        recs = res.records
        _CACHE[key] = RunSummary(kind, H0, seed,
                                 trailing_mean(recs, "policy_entropy", WINDOW),
                                 trailing_mean(recs, "mean_reward", WINDOW),
                                 detect_collapse(recs, FLOOR, WINDOW),
                                 time.perf_counter() - t0)
    return _CACHE[key]
