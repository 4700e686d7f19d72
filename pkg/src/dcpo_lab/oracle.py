"""Ground truth by exhaustive enumeration and finite differences.

Nothing in here samples unless explicitly asked to (``mc_vs_exact``); every
expectation is an exact sum over the complete response space of a query.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb
from typing import Callable

import numpy as np

from .objectives import J_WEIGHTING, ObjectiveSpec, objective_gradient, reinforce_term_gradient
from .policy import (Context, PolicyParams, Vocab, entropy_from_logp, entropy_logit_grad, score_logits,
                     token_logprobs)
from .rollout import group_advantages, retemper, sample_group
from .tasks import Task

MAX_SEQUENCES = 10 ** 6


@dataclass
class EnumerationResult:
    query_id: int
    T: float
    sequences: list[tuple[int, ...]]
    probs_base: np.ndarray
    probs_tempered: np.ndarray
    rewards: np.ndarray
    # per sequence, per token log pi and log pi^T
    logps_base: list[np.ndarray] = field(repr=False, default_factory=list)
    logps_tempered: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def expected_reward(self) -> float:
        return float(self.probs_base @ self.rewards)


def enumerate_responses(params: PolicyParams, task: Task, query_id: int, T: float = 1.0) -> EnumerationResult:
    """Every complete response of ``query_id`` with its exact probability under pi and pi^T."""
    if task.sequence_space_size() > MAX_SEQUENCES:
        raise ValueError(f"sequence space of {task.sequence_space_size()} exceeds {MAX_SEQUENCES}")
    refs = task.reference_set(query_id)
    eos = task.vocab.eos
    seqs, lb, lt = [], [], []
    cache: dict = {}

    def rows(ctx):
        if ctx not in cache:
            base = token_logprobs(params, ctx, 1.0)
            cache[ctx] = (base, base if T == 1.0 else token_logprobs(params, ctx, T))
        return cache[ctx]

    def walk(ctx: Context, acc_b: list, acc_t: list):
        base, temp = rows(ctx)
        last = len(ctx.prefix) == task.horizon - 1
        for tok in range(task.vocab.size):
            b, t = acc_b + [base[tok]], acc_t + [temp[tok]]
            if tok == eos or last:
                seqs.append(ctx.prefix + (tok,))
                lb.append(np.array(b))
                lt.append(np.array(t))
            else:
                walk(ctx.extend(tok), b, t)

    walk(Context(query_id), [], [])
    pb = np.exp([x.sum() for x in lb])
    pt = np.exp([x.sum() for x in lt])
    rewards = np.array([float(s in refs) for s in seqs])
    return EnumerationResult(query_id, float(T), seqs, pb, pt, rewards, lb, lt)


# -- exact expectations ------------------------------------------------------

def exact_policy_entropy(params: PolicyParams, task: Task) -> float:
    """E_q E_{o ~ pi} 1/|o| sum_t H_t, queries uniform."""
    total = 0.0
    for q in task.queries:
        en = enumerate_responses(params, task, q)
        for seq, p in zip(en.sequences, en.probs_base):
            ctx = Context(q)
            h = 0.0
            for tok in seq:
                h += float(entropy_from_logp(token_logprobs(params, ctx, 1.0)))
                ctx = ctx.extend(tok)
            total += p * h / len(seq)
    return total / len(task.queries)


def exact_entropy_gradient(params: PolicyParams, task: Task) -> np.ndarray:
    """Analytic gradient of ``exact_policy_entropy`` (score term plus pathwise term)."""
    grad = params.zeros_like()
    for q in task.queries:
        en = enumerate_responses(params, task, q)
        for seq, p in zip(en.sequences, en.probs_base):
            L = len(seq)
            ctx = Context(q)
            h = 0.0
            ctxs = []
            for tok in seq:
                logp = token_logprobs(params, ctx, 1.0)
                h += float(entropy_from_logp(logp))
                params.add_logit_grad(grad, ctx, (p / L) * entropy_logit_grad(logp))
                ctxs.append((ctx, tok, logp))
                ctx = ctx.extend(tok)
            for c, tok, logp in ctxs:
                params.add_logit_grad(grad, c, (p * h / L) * score_logits(logp, tok))
    return grad / len(task.queries)


VARIANTS = ("j1", "j2", "j3", "j4", "dcpo-term")


def _sequence_score(params, q, seq, weights, out, scale):
    ctx = Context(q)
    for t, tok in enumerate(seq):
        logp = token_logprobs(params, ctx, 1.0)
        params.add_logit_grad(out, ctx, (scale * weights[t]) * score_logits(logp, tok))
        ctx = ctx.extend(tok)


def exact_regularizer_gradient(params: PolicyParams, task: Task, T: float, variant: str) -> np.ndarray:
    """Expected gradient of a REINFORCE regularizer at theta = theta_old.

    j1: o ~ pi,   weights 1       j2: o ~ pi^T, weights 1
    j3: o ~ pi,   weights rho     j4: o ~ pi^T, weights 1/rho
    ``dcpo-term`` is the rho-weighted reward part of the fused coefficient (= j3).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    grad = params.zeros_like()
    for q in task.queries:
        en = enumerate_responses(params, task, q, T)
        tempered_sampling = variant in ("j2", "j4")
        probs = en.probs_tempered if tempered_sampling else en.probs_base
        for i, seq in enumerate(en.sequences):
            if en.rewards[i] == 0 or probs[i] == 0:
                continue
            log_rho = en.logps_tempered[i] - en.logps_base[i]
            if variant in ("j1", "j2"):
                w = np.ones(len(seq))
            elif variant == "j4":
                w = np.exp(-log_rho)
            else:
                w = np.exp(log_rho)
            _sequence_score(params, q, seq, w, grad, probs[i] * en.rewards[i] / len(seq))
    return grad / len(task.queries)


def _expected_advantage(r: float, p: float, G: int) -> float:
    """E[A_1 | R_1 = r] when the other G-1 rewards are iid Bernoulli(p)."""
    total = 0.0
    for k in range(G):
        w = comb(G - 1, k) * p ** k * (1 - p) ** (G - 1 - k)
        m = (r + k) / G
        s = np.sqrt(m * (1 - m))
        total += w * ((r - m) / s if s > 0 else 0.0)
    return total


def exact_grpo_gradient(params: PolicyParams, task: Task, G: int) -> np.ndarray:
    """Expected GRPO gradient at theta = theta_old, by exchangeability over the group."""
    grad = params.zeros_like()
    for q in task.queries:
        en = enumerate_responses(params, task, q)
        p = en.expected_reward
        a = {r: _expected_advantage(r, p, G) for r in (0.0, 1.0)}
        for i, seq in enumerate(en.sequences):
            coef = a[en.rewards[i]]
            if coef == 0 or en.probs_base[i] == 0:
                continue
            _sequence_score(params, q, seq, np.ones(len(seq)), grad, en.probs_base[i] * coef / len(seq))
    return grad / len(task.queries)


def exact_objective_gradient(params: PolicyParams, task: Task, spec: ObjectiveSpec, G: int,
                             T: float, alpha: float) -> np.ndarray:
    """Expected gradient of a full objective at theta = theta_old."""
    kind = spec.kind
    grpo = exact_grpo_gradient(params, task, G)
    if kind == "grpo":
        return grpo
    if kind in ("j1", "j2", "j3", "j4"):
        return grpo + alpha * exact_regularizer_gradient(params, task, T, kind)
    if kind == "dcpo":
        return grpo + alpha * exact_regularizer_gradient(params, task, T, "dcpo-term")
    if kind == "dcpo_no_double_is":
        return grpo + alpha * exact_regularizer_gradient(params, task, T, "j1")
    if kind == "dcpo_no_reinforce":
        return grpo + alpha * _exact_rho_advantage_gradient(params, task, G, T)
    if kind == "grpo_entropy_reg":
        return grpo + spec.lam * _exact_visited_entropy_gradient(params, task)
    raise ValueError(f"no exact oracle for objective kind {kind!r}")


def _exact_rho_advantage_gradient(params: PolicyParams, task: Task, G: int, T: float) -> np.ndarray:
    """Expectation of the ``rho * A`` part of the no-REINFORCE coefficient."""
    grad = params.zeros_like()
    for q in task.queries:
        en = enumerate_responses(params, task, q, T)
        p = en.expected_reward
        a = {r: _expected_advantage(r, p, G) for r in (0.0, 1.0)}
        for i, seq in enumerate(en.sequences):
            coef = a[en.rewards[i]]
            if coef == 0 or en.probs_base[i] == 0:
                continue
            rho = np.exp(en.logps_tempered[i] - en.logps_base[i])
            _sequence_score(params, q, seq, rho, grad, en.probs_base[i] * coef / len(seq))
    return grad / len(task.queries)


def _exact_visited_entropy_gradient(params: PolicyParams, task: Task) -> np.ndarray:
    """E_o of the pathwise gradient of 1/|o| sum_t H_t, with o held fixed.

    This is what the sampled entropy bonus estimates: it differentiates the
    entropies at the visited contexts, not the visiting probabilities.
    """
    grad = params.zeros_like()
    for q in task.queries:
        en = enumerate_responses(params, task, q)
        for seq, p in zip(en.sequences, en.probs_base):
            ctx = Context(q)
            for tok in seq:
                logp = token_logprobs(params, ctx, 1.0)
                params.add_logit_grad(grad, ctx, (p / len(seq)) * entropy_logit_grad(logp))
                ctx = ctx.extend(tok)
    return grad / len(task.queries)


# -- finite differences ----------------------------------------------------

def finite_diff_gradient(f: Callable[[PolicyParams], float], params: PolicyParams,
                         step: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``params.values``."""
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step must be in [1e-7, 1e-3], got {step}")
    base = params.values
    grad = np.zeros(base.shape)
    for idx in np.ndindex(base.shape):
        up, dn = base.copy(), base.copy()
        up[idx] += step
        dn[idx] -= step
        grad[idx] = (f(params.with_values(up)) - f(params.with_values(dn))) / (2 * step)
    return grad


# -- identity and direction checks ------------------------------------------

@dataclass
class DirectionReport:
    T: float
    fraction_increasing: float
    n_used: int
    n_excluded: int
    deltas: np.ndarray = field(repr=False)


def random_tiny_task(rng: np.random.Generator, vocab: int = 4, horizon: int = 2, name: str = "random") -> Task:
    """Random reference subset of the eos-terminated responses (never empty)."""
    v = Vocab(vocab)
    eos = v.eos
    pool = [(eos,)]
    for n in range(1, horizon):
        pool += [p + (eos,) for p in product(v.content_tokens, repeat=n)]
    k = int(rng.integers(2, len(pool)))
    chosen = rng.choice(len(pool), size=k, replace=False)
    return Task(name, v, horizon, {0: frozenset(pool[i] for i in chosen)})


def reinforce_step(params: PolicyParams, task: Task, T: float, lr: float) -> PolicyParams:
    g = exact_regularizer_gradient(params, task, T, "j2")
    return params.with_values(params.values + lr * g)


def entropy_direction_test(n_policies: int = 100, T: float = 1.5, lr: float = 1e-3, seed: int = 0,
                           vocab: int = 4, horizon: int = 2, logit_scale: float = 1.0) -> DirectionReport:
    """Fraction of random policies whose entropy change after one exact
    temperature-``T`` REINFORCE step exceeds the change after the T = 1 step."""
    rng = np.random.default_rng(seed)
    deltas = []
    excluded = 0
    while len(deltas) < n_policies:
        task = random_tiny_task(rng, vocab, horizon)
        params = PolicyParams.init(task.vocab, task.queries, task.horizon, scale=logit_scale, rng=rng)
        en = enumerate_responses(params, task, 0)
        if en.rewards.all() or not en.rewards.any():
            excluded += 1
            continue
        h0 = exact_policy_entropy(params, task)
        d_T = exact_policy_entropy(reinforce_step(params, task, T, lr), task) - h0
        d_1 = exact_policy_entropy(reinforce_step(params, task, 1.0, lr), task) - h0
        deltas.append(d_T - d_1)
    deltas = np.array(deltas)
    return DirectionReport(T, float(np.mean(deltas > 0)), len(deltas), excluded, deltas)


# -- Monte Carlo vs exact ----------------------------------------------------

@dataclass
class MCReport:
    max_abs_deviation: float
    z_scores: np.ndarray = field(repr=False)
    frac_within_3sigma: float = 1.0
    frac_within_4sigma: float = 1.0
    max_abs_z: float = 0.0
    # coordinates no sample touched; their exact value is reported, not scored
    n_unobserved: int = 0
    max_abs_unobserved: float = 0.0


def mc_vs_exact(params: PolicyParams, task: Task, spec: ObjectiveSpec, samples: int = 10_000, G: int = 8,
                T: float | None = None, alpha: float = 1.0, seed: int = 0, exact=None,
                variant: str | None = None) -> MCReport:
    """Mean of ``samples`` single-query gradient estimates vs the exact expectation.

    Each sample is one rollout group per query. ``variant`` restricts the
    comparison to a regularizer term (j1..j4, dcpo-term) instead of the full
    objective.
    """
    T = spec.T_high if T is None else T
    if exact is None:
        exact = (exact_regularizer_gradient(params, task, T, variant) if variant
                 else exact_objective_gradient(params, task, spec, G, T, alpha))
    n_q = len(task.queries)
    draws = np.empty((samples,) + params.shape)
    for s in range(samples):
        g = params.zeros_like()
        for qi, q in enumerate(task.queries):
            key = variant or spec.kind
            tempered = key in ("j2", "j4")
            grp = sample_group(params, task, q, G, T if tempered else 1.0, T, rng_seed=[seed, s, qi])
            grp = group_advantages(grp)
            if variant:
                w = "rho" if variant in ("j3", "dcpo-term") else J_WEIGHTING[variant][0]
                est = reinforce_term_gradient(params, grp, spec, w, "tempered" if tempered else "base")
            else:
                base = grp
                reg = None
                if tempered:
                    base = group_advantages(retemper(params, sample_group(
                        params, task, q, G, 1.0, 1.0, rng_seed=[seed, s, qi, 1]), T))
                    reg = grp
                est = objective_gradient(params, base, spec, alpha, reg)
            g += est.grad
        draws[s] = g / n_q
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(samples)
    dev = mean - exact
    live = se > 0
    z = np.full_like(dev, np.nan)
    z[live] = dev[live] / se[live]
    # A zero-spread coordinate was never moved by any sample (a context too rare
    # to be visited, or identically zero). It carries no z-score.
    absz = np.abs(z[live])
    if absz.size == 0:
        absz = np.zeros(1)
    dead = np.abs(dev[~live])
    return MCReport(float(np.abs(dev).max()), z, float(np.mean(absz <= 3)), float(np.mean(absz <= 4)),
                    float(absz.max()), int((~live).sum()), float(dead.max()) if dead.size else 0.0)
