"""Training loop: rollout, advantages, schedule and alpha, gradient, update."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .objectives import (GradientEstimate, ObjectiveSpec, batch_entropy, objective_gradient,
                         resolve_alpha, schedule_temperature)
from .oracle import MAX_SEQUENCES, exact_policy_entropy
from .policy import FULL_PREFIX, TABULAR, Keying, PolicyParams
from .rollout import RolloutGroup, group_advantages, retemper, sample_group
from .tasks import Task, get_task

log = logging.getLogger(__name__)


class NonFiniteGradient(RuntimeError):
    def __init__(self, step: int, groups, detail: str):
        super().__init__(f"non-finite gradient at step {step}: {detail}")
        self.step = step
        self.groups = groups


@dataclass
class TrainConfig:
    task: str | Task = "multipath"
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    G: int = 8
    batch_queries: int = 0  # 0 means every query each step
    steps: int = 300
    learning_rate: float = 0.05
    optimizer: str = "adam"  # sgd | momentum | adam
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_num: float = 1e-8
    n_minibatch: int = 4
    seed: int = 0
    entropy_floor: float = 0.05
    eval_every: int = 1
    entropy_refresh: str = "batch"  # batch | minibatch
    policy_kind: str = TABULAR
    keying: Keying = field(default_factory=Keying)
    init: str = "uniform"  # uniform | task | random
    init_scale: float = 1.0
    exact_entropy: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.G < 2:
            raise ValueError("G must be >= 2")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.entropy_refresh not in ("batch", "minibatch"):
            raise ValueError(f"entropy_refresh must be 'batch' or 'minibatch'")
        if self.n_minibatch < 1 or self.n_minibatch > self.G:
            raise ValueError(f"n_minibatch must be in [1, G]")

    def resolve_task(self) -> Task:
        return self.task if isinstance(self.task, Task) else get_task(self.task)


@dataclass
class MetricsRecord:
    step: int
    policy_entropy: float
    mean_reward: float
    batch_accuracy: float
    temperature_in_effect: float
    alpha_in_effect: float
    grad_norm: float
    clip_fraction: float
    mean_rho: float
    max_rho: float


METRIC_FIELDS = [f.name for f in fields(MetricsRecord)]


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    params: PolicyParams
    config: TrainConfig


class Optimizer:
    """Gradient ascent with optional heavy-ball momentum or Adam moments."""

    def __init__(self, kind: str, lr: float, shape, momentum=0.9, beta1=0.9, beta2=0.999, eps=1e-8):
        self.kind, self.lr = kind, lr
        self.momentum, self.beta1, self.beta2, self.eps = momentum, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, values: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        if self.kind == "sgd":
            return values + self.lr * grad
        if self.kind == "momentum":
            self.m = self.momentum * self.m + grad
            return values + self.lr * self.m
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return values + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_params(config: TrainConfig, task: Task) -> PolicyParams:
    params = PolicyParams.init(task.vocab, task.queries, task.horizon, config.policy_kind, config.keying)
    if config.init == "uniform":
        return params
    if config.init == "random":
        rng = np.random.default_rng([config.seed, 7919])
        return params.with_values(config.init_scale * rng.standard_normal(params.shape))
    if config.init == "task":
        values = params.zeros_like()
        for tok, b in task.init_bias.items():
            if params.kind == TABULAR:
                values[:, tok] += b
            else:
                values[0, tok] += b  # bias feature
        return params.with_values(values)
    raise ValueError(f"unknown init {config.init!r}")


def policy_entropy(params: PolicyParams, task: Task, groups=None, exact: bool = True) -> float:
    if exact and task.sequence_space_size() <= MAX_SEQUENCES:
        return exact_policy_entropy(params, task)
    return batch_entropy(params, groups)


def _split(group: RolloutGroup, n: int) -> list[RolloutGroup]:
    idx = np.array_split(np.arange(group.G), n)
    out = []
    for ix in idx:
        adv = None if group.advantages is None else group.advantages[ix]
        out.append(replace(group, trajectories=tuple(group.trajectories[i] for i in ix), advantages=adv))
    return out


def _check_finite(est: GradientEstimate, step: int, groups) -> None:
    if not np.all(np.isfinite(est.grad)):
        raise NonFiniteGradient(step, groups, "gradient has non-finite entries")


def train(config: TrainConfig, on_record=None) -> TrainResult:
    """Run ``config.steps`` rollout/update rounds. ``on_record`` is called per step."""
    task = config.resolve_task()
    spec = config.objective
    params = init_params(config, task)
    opt = Optimizer(config.optimizer, config.learning_rate, params.shape, config.momentum,
                    config.beta1, config.beta2, config.eps_num)
    queries = task.queries
    nq = config.batch_queries or len(queries)
    records = []
    for step in range(config.steps):
        if nq >= len(queries):
            chosen = list(queries)
        else:
            pick = np.random.default_rng([config.seed, step, 104729]).choice(len(queries), nq, replace=False)
            chosen = [queries[i] for i in sorted(pick)]
        groups = [group_advantages(sample_group(params, task, q, config.G, 1.0, 1.0,
                                                rng_seed=[config.seed, step, qi]))
                  for qi, q in enumerate(chosen)]
        accuracy = float(np.mean([g.rewards.mean() for g in groups]))
        h_batch = batch_entropy(params, groups)
        T = schedule_temperature(h_batch, spec) if spec.uses_schedule else 1.0
        alpha = resolve_alpha(spec, h_batch, accuracy) if spec.uses_schedule else 0.0
        if T != 1.0:
            groups = [retemper(params, g, T) for g in groups]
        reg_groups = None
        if spec.samples_tempered:
            reg_groups = [sample_group(params, task, q, config.G, T, T, rng_seed=[config.seed, step, qi, 1])
                          for qi, q in enumerate(chosen)]
        h_exact = policy_entropy(params, task, groups, config.exact_entropy)

        parts = list(zip(*[_split(g, config.n_minibatch) for g in groups]))
        reg_parts = (list(zip(*[_split(g, config.n_minibatch) for g in reg_groups]))
                     if reg_groups is not None else [None] * len(parts))
        grads, clip_fracs, rhos_mean, rho_max = [], [], [], 1.0
        T_mb, alpha_mb = T, alpha
        for j, (mb, reg_mb) in enumerate(zip(parts, reg_parts)):
            if j > 0 and config.entropy_refresh == "minibatch" and spec.uses_schedule:
                h_mb = batch_entropy(params, list(mb))
                T_mb = schedule_temperature(h_mb, spec)
                alpha_mb = resolve_alpha(spec, h_mb, accuracy)
            est = objective_gradient(params, list(mb), spec, alpha_mb, reg_mb)
            _check_finite(est, step, groups)
            params = params.with_values(opt.step(params.values, est.grad))
            grads.append(est.grad)
            clip_fracs.append(est.clip_fraction)
            rhos_mean.append(est.mean_rho)
            rho_max = max(rho_max, est.max_rho)

        rec = MetricsRecord(
            step=step,
            policy_entropy=h_exact,
            mean_reward=accuracy,
            batch_accuracy=accuracy,
            temperature_in_effect=T,
            alpha_in_effect=alpha,
            grad_norm=float(np.linalg.norm(np.mean(grads, axis=0))),
            clip_fraction=float(np.mean(clip_fracs)),
            mean_rho=float(np.mean(rhos_mean)),
            max_rho=float(rho_max),
        )
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        if config.eval_every and step % config.eval_every == 0:
            log.debug("step %d H=%.4f R=%.3f T=%.2f alpha=%.4f", step, rec.policy_entropy,
                      rec.mean_reward, T, alpha)
    return TrainResult(records, params, config)


def detect_collapse(records, floor: float = 0.05, window: int = 50) -> bool:
    """True iff the mean policy entropy over the trailing ``window`` records is below ``floor``."""
    if window > len(records) or window < 1:
        raise ValueError(f"window {window} must be in [1, {len(records)}]")
    tail = [r.policy_entropy if isinstance(r, MetricsRecord) else float(r) for r in records[-window:]]
    return float(np.mean(tail)) < floor


def trailing_mean(records, name: str, window: int = 50) -> float:
    return float(np.mean([getattr(r, name) for r in records[-window:]]))


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in METRIC_FIELDS])


def _fmt(x) -> str:
    return str(x) if isinstance(x, int) else f"{x:.17g}"


class MetricsWriter:
    """Appends one CSV row per step; the file is valid after every row."""

    def __init__(self, path):
        self.f = open(path, "w", newline="")
        self.w = csv.writer(self.f)
        self.w.writerow(METRIC_FIELDS)
        self.f.flush()

    def __call__(self, rec: MetricsRecord) -> None:
        self.w.writerow([_fmt(getattr(rec, k)) for k in METRIC_FIELDS])
        self.f.flush()

    def close(self):
        self.f.close()


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != METRIC_FIELDS:
        raise ValueError(f"{path}: header does not match the metrics schema {METRIC_FIELDS}")
    out = []
    for row in rows[1:]:
        vals = {k: (int(v) if k == "step" else float(v)) for k, v in zip(METRIC_FIELDS, row)}
        out.append(MetricsRecord(**vals))
    return out


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    if isinstance(config.task, Task):
        d["task"] = config.task.name
    return d
