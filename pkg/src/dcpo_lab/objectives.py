"""Clipped policy-gradient objectives over rollout groups.

Every objective here is a clipped surrogate

    mean_i  1/|o_i| sum_t  min(r_it * c_it, clip(r_it, 1-eps, 1+eps) * c_it)

with ``r_it = pi_theta / pi_old`` (both at T = 1) and a per-token coefficient
``c_it`` that is constant w.r.t. theta. The objectives differ only in ``c_it``
and in which samples they average over:

=====================  =========================================  ===========
kind                   coefficient                                samples
=====================  =========================================  ===========
grpo                   A_i                                        pi_old
j1 / j2 regularizer    R_i                                        pi_old / pi_old^T
j3 / j4 regularizer    rho_it * R_i  /  R_i / rho_it              pi_old / pi_old^T
dcpo                   A_i + alpha * rho_it * R_i                 pi_old
dcpo_no_double_is      A_i + alpha * R_i                          pi_old
dcpo_no_reinforce      (1 + alpha * rho_it) * A_i                 pi_old
=====================  =========================================  ===========

``rho_it = pi_old^T / pi_old`` at the schedule temperature. The j-family adds
``alpha`` times its regularizer to the GRPO term. All gradients are for ascent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .policy import PolicyParams, entropy_from_logp, entropy_logit_grad, score_logits, token_logprobs
from .rollout import RolloutGroup, Trajectory

KINDS = ("grpo", "j1", "j2", "j3", "j4", "dcpo", "dcpo_no_double_is", "dcpo_no_reinforce",
         "grpo_entropy_reg")
J_WEIGHTING = {"j1": ("none", "base"), "j2": ("none", "tempered"),
               "j3": ("rho", "base"), "j4": ("rho_inverse", "tempered")}


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "grpo"
    alpha_mode: str = "adaptive"  # "adaptive" or "fixed"
    alpha: float = 0.0  # used when alpha_mode == "fixed"
    epsilon: float = 0.2
    T_high: float = 1.2
    T_low: float = 0.8
    H0: float = 0.25
    lam: float = 0.015
    alpha_gain: float = 0.1  # numerator constant of the adaptive rule

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha_mode not in ("adaptive", "fixed"):
            raise ValueError(f"alpha_mode must be 'adaptive' or 'fixed', got {self.alpha_mode!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 < self.T_low <= self.T_high:
            raise ValueError(f"need 0 < T_low <= T_high, got {self.T_low}, {self.T_high}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.H0 < 0:
            raise ValueError("H0 must be >= 0")

    @property
    def uses_schedule(self) -> bool:
        return self.kind not in ("grpo", "grpo_entropy_reg")

    @property
    def samples_tempered(self) -> bool:
        """j2 and j4 draw their regularizer samples from the tempered policy."""
        return self.kind in ("j2", "j4")


@dataclass
class GradientEstimate:
    grad: np.ndarray
    value: float
    clip_fraction: float = 0.0
    mean_rho: float = 1.0
    max_rho: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def __add__(self, other: "GradientEstimate") -> "GradientEstimate":
        return GradientEstimate(self.grad + other.grad, self.value + other.value,
                                max(self.clip_fraction, other.clip_fraction),
                                self.mean_rho, max(self.max_rho, other.max_rho),
                                {**self.diagnostics, **other.diagnostics})

    def scaled(self, a: float) -> "GradientEstimate":
        return GradientEstimate(a * self.grad, a * self.value, self.clip_fraction,
                                self.mean_rho, self.max_rho, dict(self.diagnostics))


# -- schedule and coefficient ----------------------------------------------

def schedule_temperature(current_entropy: float, spec: ObjectiveSpec) -> float:
    """T_high while the entropy is strictly below H0, else T_low."""
    return spec.T_high if current_entropy < spec.H0 else spec.T_low


def adaptive_alpha(current_entropy: float, H0: float, batch_accuracy: float,
                   gain: float = 0.1) -> tuple[float, bool]:
    """``gain * (H0 - H) / accuracy``; returns ``(alpha, inert)``.

    With zero accuracy no trajectory is rewarded, so the regularizer vanishes
    anyway; alpha is reported as 0 and ``inert`` is True.
    """
    if batch_accuracy <= 0:
        return 0.0, True
    return gain * (H0 - current_entropy) / batch_accuracy, False


def resolve_alpha(spec: ObjectiveSpec, current_entropy: float, batch_accuracy: float) -> float:
    if spec.alpha_mode == "fixed":
        return spec.alpha
    return adaptive_alpha(current_entropy, spec.H0, batch_accuracy, spec.alpha_gain)[0]


# -- surrogate core --------------------------------------------------------

def _as_groups(groups) -> list[RolloutGroup]:
    return [groups] if isinstance(groups, RolloutGroup) else list(groups)


def _advantages(groups: list[RolloutGroup]) -> list[float]:
    out = []
    for g in groups:
        if g.advantages is None:
            raise ValueError(f"group for query {g.query_id} has no advantages; call group_advantages")
        out.extend(float(a) for a in g.advantages)
    return out


def clipped_surrogate(params: PolicyParams, trajectories: list[Trajectory], coefs: list[np.ndarray],
                      epsilon: float) -> GradientEstimate:
    """Value and gradient of the clipped surrogate at ``params``.

    Per token the unclipped branch ``r*c`` is kept whenever it is <= the clipped
    branch; only then does the token carry gradient ``c * r * dlog pi``.
    """
    grad = params.zeros_like()
    n = len(trajectories)
    if n == 0:
        return GradientEstimate(grad, 0.0)
    total = 0.0
    clipped = tokens = 0
    lo, hi = 1.0 - epsilon, 1.0 + epsilon
    for tr, c in zip(trajectories, coefs):
        L = len(tr.tokens)
        w = 1.0 / (L * n)
        for t, ctx in enumerate(tr.contexts):
            tok = tr.tokens[t]
            logp = token_logprobs(params, ctx, 1.0)
            r = float(np.exp(logp[tok] - tr.base_logps[t]))
            ct = float(c[t])
            unclipped = r * ct
            other = min(max(r, lo), hi) * ct
            tokens += 1
            if unclipped <= other:
                total += w * unclipped
                if ct != 0.0:
                    params.add_logit_grad(grad, ctx, (w * ct * r) * score_logits(logp, tok))
            else:
                total += w * other
                clipped += 1
    return GradientEstimate(grad, total, clipped / max(tokens, 1))


def _rho_stats(trajectories) -> tuple[float, float]:
    if not trajectories:
        return 1.0, 1.0
    rho = np.concatenate([tr.rho for tr in trajectories])
    return float(rho.mean()), float(rho.max())


def _finish(est: GradientEstimate, trajectories) -> GradientEstimate:
    est.mean_rho, est.max_rho = _rho_stats(trajectories)
    return est


def _flatten(groups):
    return [tr for g in groups for tr in g.trajectories]


# -- objectives ------------------------------------------------------------

def grpo_gradient(params: PolicyParams, groups, spec: ObjectiveSpec) -> GradientEstimate:
    groups = _as_groups(groups)
    trajs = _flatten(groups)
    adv = _advantages(groups)
    coefs = [np.full(len(tr.tokens), a) for tr, a in zip(trajs, adv)]
    return _finish(clipped_surrogate(params, trajs, coefs, spec.epsilon), trajs)


def reinforce_term_gradient(params: PolicyParams, groups, spec: ObjectiveSpec,
                            weighting: str = "none", sampled_at: str = "base") -> GradientEstimate:
    """REINFORCE regularizer with reward as the coefficient, optionally rho-weighted.

    ``weighting`` is "none", "rho" or "rho_inverse"; ``sampled_at`` ("base" or
    "tempered") must agree with how the groups were drawn.
    """
    if weighting not in ("none", "rho", "rho_inverse"):
        raise ValueError(f"unknown weighting {weighting!r}")
    groups = _as_groups(groups)
    for g in groups:
        if sampled_at == "base" and g.sampling_T != 1.0:
            raise ValueError(f"group sampled at T={g.sampling_T} but regularizer expects base samples")
        if sampled_at == "tempered" and g.sampling_T != g.schedule_T:
            raise ValueError(f"group sampled at T={g.sampling_T} but schedule temperature is {g.schedule_T}")
        if sampled_at not in ("base", "tempered"):
            raise ValueError(f"unknown sampled_at {sampled_at!r}")
    trajs = _flatten(groups)
    coefs = []
    for tr in trajs:
        if weighting == "none":
            coefs.append(np.full(len(tr.tokens), float(tr.reward)))
        elif weighting == "rho":
            coefs.append(tr.reward * tr.rho)
        else:
            coefs.append(tr.reward * np.exp(-tr.log_rho))
    return _finish(clipped_surrogate(params, trajs, coefs, spec.epsilon), trajs)


def _fused(params, groups, spec, coef_fn) -> GradientEstimate:
    groups = _as_groups(groups)
    trajs = _flatten(groups)
    adv = _advantages(groups)
    coefs = [coef_fn(a, tr) for tr, a in zip(trajs, adv)]
    return _finish(clipped_surrogate(params, trajs, coefs, spec.epsilon), trajs)


def dcpo_gradient(params: PolicyParams, groups, spec: ObjectiveSpec, alpha: float | None = None) -> GradientEstimate:
    """Single fused surrogate with coefficient ``A_i + alpha * rho_it * R_i``."""
    alpha = spec.alpha if alpha is None else alpha
    return _fused(params, groups, spec, lambda a, tr: a + alpha * tr.rho * tr.reward)


def ablation_gradients(params: PolicyParams, groups, spec: ObjectiveSpec, alpha: float | None = None,
                       which: str | None = None) -> GradientEstimate:
    """``no_double_is``: A + alpha R.  ``no_reinforce``: (1 + alpha rho) A."""
    alpha = spec.alpha if alpha is None else alpha
    which = which or spec.kind.removeprefix("dcpo_")
    if which == "no_double_is":
        return _fused(params, groups, spec,
                      lambda a, tr: np.full(len(tr.tokens), a + alpha * tr.reward))
    if which == "no_reinforce":
        return _fused(params, groups, spec, lambda a, tr: (1.0 + alpha * tr.rho) * a)
    raise ValueError(f"unknown ablation {which!r}")


def mean_visited_entropy(params: PolicyParams, trajectories) -> tuple[float, np.ndarray]:
    """Mean over trajectories of the per-token-averaged entropy, and its gradient."""
    grad = params.zeros_like()
    n = len(trajectories)
    total = 0.0
    for tr in trajectories:
        w = 1.0 / (len(tr.tokens) * n)
        for ctx in tr.contexts:
            logp = token_logprobs(params, ctx, 1.0)
            total += w * float(entropy_from_logp(logp))
            params.add_logit_grad(grad, ctx, w * entropy_logit_grad(logp))
    return total, grad


def entropy_reg_gradient(params: PolicyParams, groups, spec: ObjectiveSpec) -> GradientEstimate:
    """GRPO plus ``lam`` times the gradient of the entropy at visited contexts."""
    est = grpo_gradient(params, groups, spec)
    H, gH = mean_visited_entropy(params, _flatten(_as_groups(groups)))
    est.grad = est.grad + spec.lam * gH
    est.value += spec.lam * H
    est.diagnostics["visited_entropy"] = H
    return est


def objective_gradient(params: PolicyParams, groups, spec: ObjectiveSpec, alpha: float = 0.0,
                       reg_groups=None) -> GradientEstimate:
    """Dispatch on ``spec.kind``. ``reg_groups`` are the tempered samples of j2/j4."""
    kind = spec.kind
    if kind == "grpo":
        return grpo_gradient(params, groups, spec)
    if kind == "grpo_entropy_reg":
        return entropy_reg_gradient(params, groups, spec)
    if kind == "dcpo":
        return dcpo_gradient(params, groups, spec, alpha)
    if kind in ("dcpo_no_double_is", "dcpo_no_reinforce"):
        return ablation_gradients(params, groups, spec, alpha)
    weighting, sampled_at = J_WEIGHTING[kind]
    if sampled_at == "tempered":
        if reg_groups is None:
            raise ValueError(f"{kind} needs regularizer groups sampled at the schedule temperature")
    else:
        reg_groups = groups
    base = grpo_gradient(params, groups, spec)
    reg = reinforce_term_gradient(params, reg_groups, spec, weighting, sampled_at)
    out = base + reg.scaled(alpha)
    out.mean_rho, out.max_rho = reg.mean_rho, reg.max_rho
    out.clip_fraction = base.clip_fraction
    return out


def batch_entropy(params: PolicyParams, groups) -> float:
    """Monte-Carlo policy entropy: mean over trajectories of per-token-averaged entropy."""
    return mean_visited_entropy(params, _flatten(_as_groups(groups)))[0]
