"""Named verification suites built on the oracles.

Each suite returns a list of :class:`Check` results; the CLI prints one line
per check and exits non-zero if any fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tasks as tasks_mod
from .objectives import KINDS, ObjectiveSpec, objective_gradient
from .oracle import (entropy_direction_test, enumerate_responses, exact_entropy_gradient,
                     exact_policy_entropy, exact_regularizer_gradient, finite_diff_gradient, mc_vs_exact,
                     random_tiny_task)
from .policy import (LAST_K, LINEAR, TABULAR, Context, Keying, PolicyParams, Vocab, grad_log_prob,
                     grad_token_entropy, log_prob, token_entropy, token_logprobs)
from .rollout import group_advantages, retemper, sample_group
from .tasks import Task

SUITES = ("gradients", "theorem2", "theorem1", "mc-consistency")

GRAD_RTOL = 1e-6
IDENTITY_ATOL = 1e-10
DIRECTION_BAR = 0.95
MC_COVERAGE = 0.99


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm error scaled by the larger max-norm of the two, floored at 1e-8."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


# -- gradients ---------------------------------------------------------------

def _random_policy(rng, task: Task) -> PolicyParams:
    kind = TABULAR if rng.random() < 0.7 else LINEAR
    keying = Keying(LAST_K, 1) if kind == TABULAR and rng.random() < 0.3 else Keying()
    return PolicyParams.init(task.vocab, task.queries, task.horizon, kind, keying,
                             scale=float(rng.uniform(0.3, 1.5)), rng=rng)


def _random_context(rng, task: Task) -> Context:
    n = int(rng.integers(0, task.horizon))
    return Context(int(rng.choice(task.queries)), tuple(int(t) for t in rng.choice(task.vocab.content_tokens, n)))


def gradient_case(rng: np.random.Generator, what: str, step: float = 1e-5) -> tuple[str, float]:
    """One randomized finite-difference comparison; returns ``(label, relative_error)``."""
    task = random_tiny_task(rng, vocab=int(rng.integers(3, 5)), horizon=int(rng.integers(2, 4)))
    params = _random_policy(rng, task)
    T = float(rng.choice([0.7, 1.0, 1.3]))
    if what == "log_prob":
        ctx, tok = _random_context(rng, task), int(rng.integers(task.vocab.size))
        a = grad_log_prob(params, ctx, tok, T)
        n = finite_diff_gradient(lambda p: log_prob(p, ctx, tok, T), params, step)
        return f"log_prob T={T} {params.kind}", relative_error(a, n)
    if what == "token_entropy":
        ctx = _random_context(rng, task)
        a = grad_token_entropy(params, ctx, T)
        n = finite_diff_gradient(lambda p: token_entropy(p, ctx, T), params, step)
        return f"token_entropy T={T} {params.kind}", relative_error(a, n)
    if what == "policy_entropy":
        a = exact_entropy_gradient(params, task)
        n = finite_diff_gradient(lambda p: exact_policy_entropy(p, task), params, step)
        return f"policy_entropy {params.kind}", relative_error(a, n)
    # an objective kind, differentiated at theta = theta_old
    spec = ObjectiveSpec(what, T_high=1.3, T_low=0.7)
    T = float(rng.choice([spec.T_low, spec.T_high]))
    alpha = float(rng.uniform(-1.0, 2.0))
    seed = int(rng.integers(2 ** 31))
    groups = [group_advantages(retemper(params, sample_group(params, task, q, 4, 1.0, 1.0, [seed, q]), T))
              for q in task.queries]
    reg = None
    if spec.samples_tempered:
        reg = [sample_group(params, task, q, 4, T, T, [seed, q, 1]) for q in task.queries]
    a = objective_gradient(params, groups, spec, alpha, reg).grad
    n = finite_diff_gradient(lambda p: objective_gradient(p, groups, spec, alpha, reg).value, params, step)
    return f"objective {what} T={T} alpha={alpha:.2f} {params.kind}", relative_error(a, n)


GRADIENT_TARGETS = ("log_prob", "token_entropy", "policy_entropy") + KINDS


def suite_gradients(n_cases: int = 120, seed: int = 0, rtol: float = GRAD_RTOL) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for i in range(n_cases):
        what = GRADIENT_TARGETS[i % len(GRADIENT_TARGETS)]
        label, err = gradient_case(rng, what)
        checks.append(Check(f"gradient[{i}] {label}", err < rtol, f"rel err {err:.2e}"))
    return checks


# -- theorem 2 ---------------------------------------------------------------

def identity_tasks() -> list[Task]:
    """The shipped tasks at their smallest size (vocab 4, horizon 3)."""
    return [tasks_mod.needle(4, 3), tasks_mod.multipath(4, 3), tasks_mod.staircase(4, 3)]


def token_level_is_gap(params: PolicyParams, task: Task, T: float) -> float:
    """Max over contexts of |E_pi[rho f] - E_pi^T[f]| for f = score vectors.

    This is the one-token importance identity that the sequence-level claim
    assumes; it holds to rounding error at every context.
    """
    worst = 0.0
    for key in params.keys or [(q, ()) for q in task.queries]:
        ctx = Context(*key)
        lp, lt = token_logprobs(params, ctx, 1.0), token_logprobs(params, ctx, T)
        p, pt = np.exp(lp), np.exp(lt)
        rho = pt / p
        f = np.eye(task.vocab.size) - p  # score of each token w.r.t. the logits
        worst = max(worst, float(np.abs((p * rho) @ f - pt @ f).max()))
    return worst


def suite_theorem2(T: float = 1.2, seed: int = 0, atol: float = IDENTITY_ATOL) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for task in identity_tasks():
        params = PolicyParams.init(task.vocab, task.queries, task.horizon, scale=1.0, rng=rng)
        g = {v: exact_regularizer_gradient(params, task, T, v) for v in ("j1", "j2", "j3", "j4")}
        for lhs, rhs in (("j3", "j2"), ("j4", "j1")):
            gap = float(np.abs(g[lhs] - g[rhs]).max())
            scale = float(np.abs(g[rhs]).max())
            checks.append(Check(f"theorem2 {task.name}(V=4,H=3) E[{lhs}] == E[{rhs}]", gap <= atol,
                                f"max |diff| {gap:.3e}, max |{rhs}| {scale:.3e}"))
        tok_gap = token_level_is_gap(params, task, T)
        checks.append(Check(f"theorem2 {task.name} token-level IS identity per context", tok_gap <= atol,
                            f"max |diff| {tok_gap:.1e}"))
    # with a single-token rewarded response the token identity is the whole story
    one = Task("one-token", Vocab(4), 1, {0: frozenset({(3,)})})
    params = PolicyParams.init(one.vocab, one.queries, 1, scale=1.0, rng=rng)
    for lhs, rhs in (("j3", "j2"), ("j4", "j1")):
        gap = float(np.abs(exact_regularizer_gradient(params, one, T, lhs)
                           - exact_regularizer_gradient(params, one, T, rhs)).max())
        checks.append(Check(f"theorem2 one-token task E[{lhs}] == E[{rhs}]", gap <= atol, f"max |diff| {gap:.1e}"))
    return checks


# -- theorem 1 ---------------------------------------------------------------

def suite_theorem1(T_high: float = 1.5, T_low: float = 0.7, n: int = 100, lr: float = 1e-3,
                   seed: int = 0, bar: float = DIRECTION_BAR) -> list[Check]:
    hi = entropy_direction_test(n, T_high, lr, seed)
    lo = entropy_direction_test(n, T_low, lr, seed)
    return [
        Check(f"theorem1 T_high={T_high} raises entropy vs T=1", hi.fraction_increasing >= bar,
              f"fraction {hi.fraction_increasing:.2f} of {hi.n_used}, need >= {bar}"),
        Check(f"theorem1 T_low={T_low} lowers entropy vs T=1", lo.fraction_increasing <= 1 - bar,
              f"fraction {lo.fraction_increasing:.2f} of {lo.n_used}, need <= {1 - bar:.2f}"),
    ]


# -- Monte Carlo consistency -------------------------------------------------

MC_KINDS = ("grpo", "j1", "j2", "j3", "j4", "dcpo", "dcpo_no_double_is", "dcpo_no_reinforce", "grpo_entropy_reg")


def suite_mc_consistency(samples: int = 10_000, seed: int = 0, kinds=MC_KINDS, task_list=None,
                         policy_scale: float = 0.5, alpha: float = 0.7,
                         coverage: float = MC_COVERAGE) -> list[Check]:
    checks = []
    for ti, task in enumerate(task_list or tasks_mod.builtin_tasks()):
        params = PolicyParams.init(task.vocab, task.queries, task.horizon, scale=policy_scale,
                                   rng=[seed, ti])
        for kind in kinds:
            spec = ObjectiveSpec(kind)
            r = mc_vs_exact(params, task, spec, samples=samples, alpha=alpha, seed=seed)
            ok = r.frac_within_3sigma >= coverage
            z2 = float(np.nanmean(r.z_scores ** 2))  # about 1 when the deviations are pure noise
            checks.append(Check(
                f"mc {task.name} {kind}", ok,
                f"{r.frac_within_3sigma:.4f} of coords within 3 se, max |z| {r.max_abs_z:.2f}, mean z^2 {z2:.2f}, "
                f"{r.n_unobserved} unvisited (max |exact| {r.max_abs_unobserved:.1e})"))
    return checks


def run_suite(name: str, **kw) -> list[Check]:
    if name == "gradients":
        return suite_gradients(**kw)
    if name == "theorem2":
        return suite_theorem2(**kw)
    if name == "theorem1":
        return suite_theorem1(**kw)
    if name == "mc-consistency":
        return suite_mc_consistency(**kw)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES} or 'all'")
