"""Autoregressive softmax policies over a small token alphabet.

A policy maps a context (query id plus the tokens emitted so far) to a row of
logits. Two parameterizations are supported:

* ``tabular``: one logit row per context key. The key is either the full prefix
  or the last ``k`` tokens of the prefix (always together with the query id).
* ``linear-features``: logits are ``phi(ctx) @ W`` for a fixed one-hot feature
  map (bias, query, position, previous token).

All probability math happens in log space; probabilities are only materialized
when a caller asks for them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FULL_PREFIX = "full-prefix"
LAST_K = "last-k"
TABULAR = "tabular"
LINEAR = "linear-features"


@dataclass(frozen=True)
class Vocab:
    size: int
    eos: int | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"vocab size must be >= 2, got {self.size}")
        if self.eos is None:
            object.__setattr__(self, "eos", self.size - 1)
        if not 0 <= self.eos < self.size:
            raise ValueError(f"eos id {self.eos} outside vocab of size {self.size}")

    @property
    def content_tokens(self) -> tuple[int, ...]:
        return tuple(t for t in range(self.size) if t != self.eos)


@dataclass(frozen=True)
class Context:
    query_id: int
    prefix: tuple[int, ...] = ()

    def extend(self, token: int) -> "Context":
        return Context(self.query_id, self.prefix + (int(token),))


@dataclass(frozen=True)
class Keying:
    mode: str = FULL_PREFIX
    k: int = 0

    def __post_init__(self):
        if self.mode not in (FULL_PREFIX, LAST_K):
            raise ValueError(f"unknown keying {self.mode!r}")
        if self.mode == LAST_K and self.k < 1:
            raise ValueError("last-k keying needs k >= 1")

    def key(self, ctx: Context) -> tuple:
        if self.mode == FULL_PREFIX:
            return (ctx.query_id, ctx.prefix)
        return (ctx.query_id, ctx.prefix[-self.k:])

    def describe(self) -> str:
        return self.mode if self.mode == FULL_PREFIX else f"{self.mode} {self.k}"


@dataclass(frozen=True)
class TokenDistribution:
    probs: np.ndarray
    temperature: float


def _check_temperature(T: float) -> None:
    if not (T > 0 and np.isfinite(T)):
        raise ValueError(f"temperature must be a positive finite number, got {T}")


def log_softmax(logits: np.ndarray, T: float = 1.0) -> np.ndarray:
    """Row-wise log softmax of ``logits / T`` via log-sum-exp."""
    _check_temperature(T)
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    if T != 1.0:
        z = z / T
    m = z.max(axis=-1, keepdims=True)
    return z - (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))


def entropy_from_logp(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    # 0 log 0 = 0
    terms = np.where(p > 0, p * logp, 0.0)
    return np.maximum(-terms.sum(axis=-1), 0.0)


def _prefixes(content: Sequence[int], max_len: int, suffix_only: bool = False) -> list[tuple[int, ...]]:
    out = []
    for n in range(max_len + 1):
        out.extend(itertools.product(content, repeat=n))
    return out


@dataclass(frozen=True)
class PolicyParams:
    """Policy parameters. ``values`` is read-only; updates build a new object.

    For tabular policies row ``i`` holds the logits of context key ``keys[i]``.
    For linear policies row ``i`` holds the logit weights of feature ``i``.
    """

    kind: str
    vocab: Vocab
    keying: Keying
    values: np.ndarray
    keys: tuple = ()
    n_queries: int = 0
    horizon: int = 0
    _index: dict = field(default=None, repr=False, compare=False)
    # (context, T) -> log-probs; safe because values never change
    _logp_cache: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in (TABULAR, LINEAR):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.vocab.size:
            raise ValueError(f"values must have shape (rows, {self.vocab.size}), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("policy parameters must be finite")
        if self.kind == TABULAR and len(self.keys) != values.shape[0]:
            raise ValueError("tabular policy needs one key per row")
        if self.kind == LINEAR and values.shape[0] != self.n_features:
            raise ValueError(f"linear policy needs {self.n_features} feature rows, got {values.shape[0]}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.keys)})
        object.__setattr__(self, "_logp_cache", {})

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, vocab: Vocab, queries: Iterable[int], horizon: int, kind: str = TABULAR,
             keying: Keying = Keying(), scale: float = 0.0, rng=None) -> "PolicyParams":
        """Zero (uniform) policy, or Gaussian logits with std ``scale``."""
        queries = list(queries)
        if kind == TABULAR:
            if keying.mode == FULL_PREFIX:
                prefixes = _prefixes(vocab.content_tokens, horizon - 1)
            else:
                prefixes = _prefixes(vocab.content_tokens, min(keying.k, horizon - 1))
            keys = tuple((q, p) for q in queries for p in prefixes)
            shape = (len(keys), vocab.size)
            n_q = len(queries)
        else:
            keys = ()
            n_q = max(queries) + 1 if queries else 1
            shape = (1 + n_q + horizon + vocab.size + 1, vocab.size)
        values = np.zeros(shape)
        if scale:
            rng = np.random.default_rng(rng)
            values = scale * rng.standard_normal(shape)
        return cls(kind, vocab, keying, values, keys, n_q, horizon)

    def with_values(self, values: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.kind, self.vocab, self.keying, values, self.keys,
                            self.n_queries, self.horizon)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    # -- linear feature map -------------------------------------------------

    @property
    def n_features(self) -> int:
        return 1 + self.n_queries + self.horizon + self.vocab.size + 1

    def features(self, ctx: Context) -> np.ndarray:
        """Active feature indices: bias, query, position, previous token (or BOS)."""
        pos = len(ctx.prefix)
        prev = ctx.prefix[-1] if ctx.prefix else self.vocab.size
        base_pos = 1 + self.n_queries
        base_prev = base_pos + self.horizon
        return np.array([0, 1 + ctx.query_id, base_pos + min(pos, self.horizon - 1), base_prev + prev])

    # -- logits -------------------------------------------------------------

    def row(self, ctx: Context) -> int:
        try:
            return self._index[self.keying.key(ctx)]
        except KeyError:
            raise ValueError(f"context {ctx} outside the policy's context space") from None

    def logits(self, ctx: Context) -> np.ndarray:
        if self.kind == TABULAR:
            return self.values[self.row(ctx)]
        if not 0 <= ctx.query_id < self.n_queries or len(ctx.prefix) >= max(self.horizon, 1):
            raise ValueError(f"context {ctx} outside the policy's context space")
        return self.values[self.features(ctx)].sum(axis=0)

    def add_logit_grad(self, out: np.ndarray, ctx: Context, dlogits: np.ndarray) -> None:
        """Accumulate a gradient w.r.t. this context's logits into ``out`` (in place)."""
        if self.kind == TABULAR:
            out[self.row(ctx)] += dlogits
        else:
            out[self.features(ctx)] += dlogits

    def zeros_like(self) -> np.ndarray:
        return np.zeros(self.values.shape)


# -- per-context operations -------------------------------------------------

def token_logprobs(params: PolicyParams, ctx: Context, T: float = 1.0) -> np.ndarray:
    """Log-probabilities at ``ctx``; memoized per parameter object, read-only."""
    key = (ctx, T)
    out = params._logp_cache.get(key)
    if out is None:
        out = log_softmax(params.logits(ctx), T)
        out.flags.writeable = False
        params._logp_cache[key] = out
    return out


def token_probs(params: PolicyParams, ctx: Context, T: float = 1.0) -> TokenDistribution:
    """Softmax of the context's logits divided by ``T``."""
    return TokenDistribution(np.exp(token_logprobs(params, ctx, T)), float(T))


def log_prob(params: PolicyParams, ctx: Context, token: int, T: float = 1.0) -> float:
    if not 0 <= token < params.vocab.size:
        raise ValueError(f"token {token} outside vocab")
    return float(token_logprobs(params, ctx, T)[token])


def score_logits(logp: np.ndarray, token: int, T: float = 1.0) -> np.ndarray:
    """d log pi(token) / d logits = (onehot(token) - pi) / T."""
    g = -np.exp(logp)
    g[token] += 1.0
    return g / T


def grad_log_prob(params: PolicyParams, ctx: Context, token: int, T: float = 1.0) -> np.ndarray:
    """Gradient of ``log_prob`` w.r.t. ``params.values`` (dense, nonzero only where ctx feeds)."""
    if not 0 <= token < params.vocab.size:
        raise ValueError(f"token {token} outside vocab")
    out = params.zeros_like()
    params.add_logit_grad(out, ctx, score_logits(token_logprobs(params, ctx, T), token, T))
    return out


def token_entropy(params: PolicyParams, ctx: Context, T: float = 1.0) -> float:
    return float(entropy_from_logp(token_logprobs(params, ctx, T)))


def entropy_logit_grad(logp: np.ndarray, T: float = 1.0) -> np.ndarray:
    """d H(softmax(l/T)) / d l = -(1/T) p (log p + H)."""
    p = np.exp(logp)
    H = entropy_from_logp(logp)
    safe = np.where(p > 0, logp, 0.0)
    return -p * (safe + H) / T


def grad_token_entropy(params: PolicyParams, ctx: Context, T: float = 1.0) -> np.ndarray:
    out = params.zeros_like()
    params.add_logit_grad(out, ctx, entropy_logit_grad(token_logprobs(params, ctx, T), T))
    return out


def sample_token(logp: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from a log-probability row with a uniform variate ``u``."""
    cdf = np.cumsum(np.exp(logp))
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))


# -- serialization ----------------------------------------------------------

def _fmt_key(key: tuple) -> str:
    q, prefix = key
    return f"{q}:" + ".".join(str(t) for t in prefix)


def _parse_key(text: str) -> tuple:
    q, _, rest = text.partition(":")
    return (int(q), tuple(int(t) for t in rest.split(".")) if rest else ())


def dumps(params: PolicyParams) -> str:
    head = [params.kind, str(params.vocab.size), params.keying.describe(),
            f"eos={params.vocab.eos}", f"queries={params.n_queries}", f"horizon={params.horizon}"]
    lines = [" ".join(head)]
    rows = (params.keys if params.kind == TABULAR else [f"f{i}" for i in range(params.shape[0])])
    for r, key in enumerate(rows):
        label = _fmt_key(key) if params.kind == TABULAR else key
        for tok in range(params.vocab.size):
            lines.append(f"{label} {tok} {params.values[r, tok]:.17g}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> PolicyParams:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    kind, size = head[0], int(head[1])
    if head[2] == LAST_K:
        keying, extra = Keying(LAST_K, int(head[3])), head[4:]
    else:
        keying, extra = Keying(head[2]), head[3:]
    meta = dict(item.split("=", 1) for item in extra)
    vocab = Vocab(size, int(meta["eos"]))
    rows: dict = {}
    for ln in lines[1:]:
        label, tok, val = ln.split()
        rows.setdefault(label, np.zeros(size))[int(tok)] = float(val)
    labels = list(rows)
    keys = tuple(_parse_key(lb) for lb in labels) if kind == TABULAR else ()
    values = np.array([rows[lb] for lb in labels])
    return PolicyParams(kind, vocab, keying, values, keys, int(meta["queries"]), int(meta["horizon"]))


def save(params: PolicyParams, path) -> None:
    with open(path, "w") as f:
        f.write(dumps(params))


def load(path) -> PolicyParams:
    with open(path) as f:
        return loads(f.read())
