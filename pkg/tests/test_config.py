from pathlib import Path

import pytest

from dcpo_lab.config import OUT_ENV, ConfigError, load_run_config, parse_lines, read_run_config
from dcpo_lab.experiments import SEEDS, WINDOW, protocol_config
from dcpo_lab.policy import LAST_K

SWEEP = """
# comment lines and blank lines are ignored
task = multipath
train.steps = 20
train.optimizer = sgd
objective.alpha_mode = fixed
objective.alpha = 2.5
run.seeds = 0 1 2
run.window = 10
sweep.j3.objective.kind = j3
sweep.j4.objective.kind = j4
sweep.j4.train.learning_rate = 0.01
"""


def test_parse_lines_keeps_line_numbers():
    entries = parse_lines("a = 1\n\n  b.c = two words  # trailing comment\n")
    assert entries == {"a": ("1", 1), "b.c": ("two words", 3)}


@pytest.mark.parametrize("text,line", [
    ("task = needle\nno equals sign\n", 2),
    ("train.steps = \n", 1),
    ("bad key = 1\n", 1),
    ("train.steps = 3\ntrain.steps = 4\n", 2),
])
def test_parse_errors_carry_the_line(text, line):
    with pytest.raises(ConfigError) as info:
        parse_lines(text, "c.cfg")
    assert info.value.line == line
    assert str(info.value).startswith(f"c.cfg:{line}: ")


def test_sweep_config_builds_one_variant_per_label(tmp_path):
    rc = load_run_config(SWEEP, out=str(tmp_path))
    assert rc.is_sweep and [v.label for v in rc.variants] == ["j3", "j4"]
    j3, j4 = rc.variants
    assert j3.train.objective.kind == "j3" and j3.train.objective.alpha == 2.5
    assert j4.train.learning_rate == 0.01 and j3.train.learning_rate == 0.05
    assert j3.seeds == (0, 1, 2) and rc.window == 10
    assert j3.train.task.name == "multipath" and j3.train.optimizer == "sgd"


def test_seed_override_and_out_dir(monkeypatch, tmp_path):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    rc = load_run_config("objective.kind = dcpo\n", seed=7)
    assert rc.variants[0].seeds == (7,) and not rc.is_sweep
    assert rc.out_dir == tmp_path / "dcpo"


def test_task_factory_arguments():
    rc = load_run_config("task = needle\ntask.vocab = 5\ntask.horizon = 2\n")
    task = rc.variants[0].train.task
    assert task.vocab.size == 5 and task.horizon == 2


def test_custom_task_from_reference_lists():
    rc = load_run_config("task.vocab = 3\ntask.horizon = 2\ntask.refs.0 = 0 2; 1 2\n")
    assert rc.variants[0].train.task.reference_set(0) == frozenset({(0, 2), (1, 2)})


def test_keying_keys():
    rc = load_run_config("train.keying = last-k\ntrain.keying_k = 1\n")
    k = rc.variants[0].train.keying
    assert k.mode == LAST_K and k.k == 1


@pytest.mark.parametrize("text,fragment", [
    ("task = maze\n", "unknown task"),
    ("task = needle\ntask.width = 2\n", "unknown key"),
    ("objective.kind = ppo\n", "objective"),
    ("objective.temperature = 2\n", "unknown key"),
    ("train.steps = many\n", "cannot parse"),
    ("train.optimizer = rmsprop\n", "train"),
    ("run.seeds = 0 0\n", "duplicates"),
    ("run.window = 500\n", "run.window"),
    ("run.colour = red\n", "unknown key"),
    ("sweep.a.kind = j3\n", "sweep keys"),
    ("model.size = 3\n", "unknown section"),
    ("train.exact_entropy = maybe\n", "cannot parse"),
])
def test_invalid_configs_are_rejected(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_run_config(text)


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        read_run_config(tmp_path / "absent.cfg")


@pytest.mark.parametrize("name", ["j3_vs_j4", "entropy_targets", "ablations"])
def test_demo_configs_follow_the_shared_protocol(name):
    rc = read_run_config(Path(__file__).parent.parent / "demos" / "configs" / f"{name}.cfg")
    assert rc.window == WINDOW
    for v in rc.variants:
        ref = protocol_config(v.train.objective.kind, v.train.objective.H0)
        assert v.seeds == SEEDS
        assert v.train.objective == ref.objective
        assert v.train.task.references == ref.resolve_task().references
        for f in ("steps", "G", "n_minibatch", "optimizer", "learning_rate"):
            assert getattr(v.train, f) == getattr(ref, f)
