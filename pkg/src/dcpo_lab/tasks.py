"""Synthetic tasks with binary verifiable rewards.

Every task has a tiny vocabulary and horizon so the full response space can be
enumerated. A response is rewarded iff it belongs to the query's reference set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .policy import Vocab


@dataclass(frozen=True)
class Task:
    name: str
    vocab: Vocab
    horizon: int
    references: Mapping[int, frozenset]
    # token -> logit offset applied at every context by ``init="task"``
    init_bias: Mapping[int, float] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        refs = {int(q): frozenset(tuple(int(t) for t in r) for r in rs)
                for q, rs in self.references.items()}
        if not refs:
            raise ValueError(f"task {self.name!r} has no queries")
        for q, rs in refs.items():
            if not rs:
                raise ValueError(f"query {q} of task {self.name!r} has an empty reference set")
            for r in rs:
                if not r or len(r) > self.horizon:
                    raise ValueError(f"reference {r} longer than horizon {self.horizon}")
                if r[-1] != self.vocab.eos or self.vocab.eos in r[:-1]:
                    raise ValueError(f"reference {r} must end with (and only with) eos={self.vocab.eos}")
                if any(not 0 <= t < self.vocab.size for t in r):
                    raise ValueError(f"reference {r} uses tokens outside the vocab")
        object.__setattr__(self, "references", refs)

    @property
    def queries(self) -> list[int]:
        return sorted(self.references)

    def reference_set(self, query_id: int) -> frozenset:
        try:
            return self.references[query_id]
        except KeyError:
            raise ValueError(f"unknown query id {query_id} for task {self.name!r}") from None

    def sequence_space_size(self) -> int:
        """Number of complete responses: eos-terminated, or cut at the horizon."""
        c = self.vocab.size - 1
        return sum(c ** (n - 1) for n in range(1, self.horizon)) + c ** (self.horizon - 1) * self.vocab.size


def reward(task: Task, query_id: int, response: Iterable[int]) -> int:
    response = tuple(int(t) for t in response)
    if any(not 0 <= t < task.vocab.size for t in response):
        raise ValueError(f"response {response} uses tokens outside the vocab")
    return int(response in task.reference_set(query_id))


def needle(vocab: int = 4, horizon: int = 3, n_queries: int = 2) -> Task:
    """One reference per query: a single full-length path."""
    v = Vocab(vocab)
    content = v.content_tokens
    refs = {}
    for q in range(n_queries):
        body = tuple(content[(q + i) % len(content)] for i in range(horizon - 1))
        refs[q] = frozenset({body + (v.eos,)})
    return Task("needle", v, horizon, refs, description="single reference per query")


def multipath(vocab: int = 6, horizon: int = 3, width: int | None = None, n_queries: int = 2) -> Task:
    """All full-length paths over ``width`` content tokens are rewarded.

    Each query uses its own rotation of the content alphabet, so the rewarded
    paths differ across queries. ``width`` defaults to all content tokens but
    one: 4**2 = 16 paths at vocab 6, 2**2 = 4 paths at vocab 4.
    """
    v = Vocab(vocab)
    content = v.content_tokens
    if width is None:
        width = max(1, len(content) - 1)
    if not 1 <= width <= len(content):
        raise ValueError(f"width must be in [1, {len(content)}]")
    refs = {}
    for q in range(n_queries):
        allowed = [content[(q + i) % len(content)] for i in range(width)]
        refs[q] = frozenset(p + (v.eos,) for p in itertools.product(allowed, repeat=horizon - 1))
    return Task("multipath", v, horizon, refs,
                description=f"{width}**{horizon - 1} disjoint full-length paths per query")


def staircase(vocab: int = 4, horizon: int = 4, n_queries: int = 2, bias: float = 2.0) -> Task:
    """References avoid the token favoured by the peaked initialization.

    The initial policy puts logit ``bias`` on content token 0 everywhere, while
    every reference is built only from the remaining content tokens.
    """
    v = Vocab(vocab)
    content = v.content_tokens
    favoured, rest = content[0], content[1:]
    refs = {}
    for q in range(n_queries):
        a, b = rest[q % len(rest)], rest[(q + 1) % len(rest)]
        refs[q] = frozenset({
            (a,) * (horizon - 1) + (v.eos,),
            (a, b) + (v.eos,) if horizon >= 3 else (a, v.eos),
        })
    return Task("staircase", v, horizon, refs, init_bias={favoured: bias},
                description="rewarded paths start from tokens the peaked init disfavours")


def builtin_tasks() -> list[Task]:
    return [needle(), multipath(), staircase()]


def get_task(name: str) -> Task:
    for task in builtin_tasks():
        if task.name == name:
            return task
    raise ValueError(f"unknown task {name!r}; builtin tasks: {[t.name for t in builtin_tasks()]}")


def task_from_config(cfg: Mapping[str, str]) -> Task:
    """Build a task from flat ``task.*`` keys.

    ``task.vocab``, ``task.horizon`` and one ``task.refs.<query>`` entry per
    query holding ``;``-separated integer lists, e.g. ``0 1 3; 1 0 3``.
    """
    name = cfg.get("task.name", "custom")
    v = Vocab(int(cfg["task.vocab"]), int(cfg["task.eos"]) if "task.eos" in cfg else None)
    refs = {}
    for key, text in cfg.items():
        if key.startswith("task.refs."):
            q = int(key.rsplit(".", 1)[1])
            refs[q] = frozenset(tuple(int(t) for t in part.split()) for part in text.split(";") if part.strip())
    return Task(name, v, int(cfg["task.horizon"]), refs)
