"""Flat ``key = value`` run configs with dotted sections.

Example::

    # two-variant sweep on the builtin multipath task
    task = multipath
    train.steps = 300
    train.optimizer = adam
    objective.alpha_mode = fixed
    objective.alpha = 1.0
    run.seeds = 0 1 2
    sweep.j3.objective.kind = j3
    sweep.j4.objective.kind = j4

Sections are ``task``, ``objective``, ``train`` and ``run``. A key
``sweep.<label>.<section>.<name>`` overrides the base config for one variant;
without any ``sweep.*`` key the config describes a single run.
"""

from __future__ import annotations

import inspect
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import tasks as tasks_mod
from .objectives import ObjectiveSpec
from .policy import FULL_PREFIX, Keying
from .tasks import Task
from .trainer import TrainConfig

OUT_ENV = "DCPO_LAB_OUT"
DEFAULT_OUT = "runs"

_FACTORIES = {"needle": tasks_mod.needle, "multipath": tasks_mod.multipath, "staircase": tasks_mod.staircase}
_OBJECTIVE_KEYS = {f.name: f for f in fields(ObjectiveSpec)}
_TRAIN_SKIP = {"task", "objective", "keying"}
_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig) if f.name not in _TRAIN_SKIP} | {"keying": None, "keying_k": None}
_RUN_KEYS = ("label", "out", "seeds", "window")


class ConfigError(ValueError):
    """Invalid config; ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line is not None else f"{path or '<config>'}: "
        super().__init__(where + message)
        self.line = line


@dataclass
class RunVariant:
    label: str
    train: TrainConfig
    seeds: tuple[int, ...]


@dataclass
class RunConfig:
    variants: list[RunVariant]
    out_dir: Path
    window: int = 50
    is_sweep: bool = False
    source: dict = field(default_factory=dict)


def parse_lines(text: str, path: str | None = None) -> dict[str, tuple[str, int]]:
    """``key -> (value, line_number)``; rejects malformed lines and duplicate keys."""
    out: dict[str, tuple[str, int]] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"malformed key {key!r}", n, path)
        if not value:
            raise ConfigError(f"missing value for {key!r}", n, path)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first set on line {out[key][1]})", n, path)
        out[key] = (value, n)
    return out


def _convert(value: str, default, key: str, line: int, path):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {type(default).__name__}", line, path) from None
    return value


def _build_task(entries: dict[str, tuple[str, int]], path) -> Task:
    flat = {k: v for k, (v, _) in entries.items()}
    if any(k.startswith("task.refs.") for k in flat):
        first = min(n for _, n in entries.values())
        try:
            return tasks_mod.task_from_config(flat)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"custom task: {e}", first, path) from None
    name_key = "task" if "task" in entries else "task.name"
    name, line = entries.get(name_key, ("multipath", None))
    if name not in _FACTORIES:
        raise ConfigError(f"unknown task {name!r}; builtin tasks: {sorted(_FACTORIES)}", line, path)
    factory = _FACTORIES[name]
    params = inspect.signature(factory).parameters
    kwargs = {}
    for key, (value, n) in entries.items():
        if key in ("task", "task.name"):
            continue
        arg = key.split(".", 1)[1]
        if arg not in params:
            raise ConfigError(f"unknown key {key!r} for task {name!r}; allowed: {sorted(params)}", n, path)
        kwargs[arg] = _convert(value, params[arg].default, key, n, path)
    try:
        return factory(**kwargs)
    except ValueError as e:
        raise ConfigError(f"task {name!r}: {e}", min(n for _, n in entries.values()), path) from None


def _build_objective(entries, path, base: ObjectiveSpec | None = None) -> ObjectiveSpec:
    base = base or ObjectiveSpec()
    kw = {}
    for key, (value, n) in entries.items():
        name = key.split(".", 1)[1]
        if name not in _OBJECTIVE_KEYS:
            raise ConfigError(f"unknown key {key!r}; allowed: {sorted(_OBJECTIVE_KEYS)}", n, path)
        kw[name] = _convert(value, getattr(base, name), key, n, path)
    try:
        return replace(base, **kw)
    except ValueError as e:
        line = min((n for _, n in entries.values()), default=None)
        raise ConfigError(f"objective: {e}", line, path) from None


def _build_train(entries, path, task, objective, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    kw, keying_mode, keying_k = {}, base.keying.mode, base.keying.k
    for key, (value, n) in entries.items():
        name = key.split(".", 1)[1]
        if name not in _TRAIN_KEYS:
            raise ConfigError(f"unknown key {key!r}; allowed: {sorted(_TRAIN_KEYS)}", n, path)
        if name == "keying":
            keying_mode = value
        elif name == "keying_k":
            keying_k = _convert(value, 1, key, n, path)
        else:
            kw[name] = _convert(value, getattr(base, name), key, n, path)
    try:
        keying = Keying(keying_mode, keying_k) if keying_mode != FULL_PREFIX else Keying()
        return replace(base, task=task, objective=objective, keying=keying, **kw)
    except ValueError as e:
        line = min((n for _, n in entries.values()), default=None)
        raise ConfigError(f"train: {e}", line, path) from None


def _split_sections(entries, path):
    sections = {"task": {}, "objective": {}, "train": {}, "run": {}}
    sweeps: dict[str, dict] = {}
    for key, item in entries.items():
        head = key.split(".", 1)[0]
        if key == "task" or head == "task":
            sections["task"][key] = item
        elif head in ("objective", "train", "run"):
            if "." not in key:
                raise ConfigError(f"key {key!r} needs a name after the section", item[1], path)
            sections[head][key] = item
        elif head == "sweep":
            parts = key.split(".")
            if len(parts) != 4 or parts[2] not in ("objective", "train"):
                raise ConfigError("sweep keys look like sweep.<label>.<objective|train>.<name>", item[1], path)
            sweeps.setdefault(parts[1], {}).setdefault(parts[2], {})[f"{parts[2]}.{parts[3]}"] = item
        else:
            raise ConfigError(f"unknown section {head!r}; expected task, objective, train, run or sweep",
                              item[1], path)
    return sections, sweeps


def load_run_config(text: str, path: str | None = None, seed: int | None = None,
                    out: str | None = None) -> RunConfig:
    """Parse and fully validate a config. Nothing is written here."""
    entries = parse_lines(text, path)
    sections, sweeps = _split_sections(entries, path)
    task = _build_task(sections["task"], path)
    objective = _build_objective(sections["objective"], path)
    base = _build_train(sections["train"], path, task, objective)

    run = {}
    for key, (value, n) in sections["run"].items():
        name = key.split(".", 1)[1]
        if name not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r}; allowed: {list(_RUN_KEYS)}", n, path)
        run[name] = (value, n)
    if seed is not None:
        seeds = (int(seed),)
    elif "seeds" in run:
        value, n = run["seeds"]
        try:
            seeds = tuple(int(s) for s in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"run.seeds: expected integers, got {value!r}", n, path) from None
        if not seeds:
            raise ConfigError("run.seeds is empty", n, path)
        if len(set(seeds)) != len(seeds):
            raise ConfigError("run.seeds has duplicates", n, path)
    else:
        seeds = (base.seed,)
    window = _convert(run["window"][0], 1, "run.window", run["window"][1], path) if "window" in run else 50
    if window < 1 or window > base.steps:
        line = run["window"][1] if "window" in run else None
        raise ConfigError(f"run.window must be in [1, train.steps={base.steps}]", line, path)
    label = run.get("label", (objective.kind, None))[0]
    out_dir = Path(out or (run["out"][0] if "out" in run else
                           os.path.join(os.environ.get(OUT_ENV, DEFAULT_OUT), label)))

    variants = []
    if not sweeps:
        variants.append(RunVariant(label, base, seeds))
    for vlabel, parts in sweeps.items():
        if not vlabel.replace("-", "_").isidentifier():
            line = min(n for sec in parts.values() for _, n in sec.values())
            raise ConfigError(f"sweep label {vlabel!r} must be a plain identifier", line, path)
        vobj = _build_objective(parts.get("objective", {}), path, objective)
        vtrain = _build_train(parts.get("train", {}), path, task, vobj, base)
        if window > vtrain.steps:
            raise ConfigError(f"run.window exceeds train.steps of sweep variant {vlabel!r}", None, path)
        variants.append(RunVariant(vlabel, vtrain, seeds))
    return RunConfig(variants, out_dir, window, bool(sweeps), {k: v for k, (v, _) in entries.items()})


def read_run_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, str(path)) from None
    return load_run_config(text, str(path), seed, out)
