import json
import subprocess
import sys

import pytest

from dcpo_lab.cli import EXIT_OK, EXIT_RUN, EXIT_USAGE, EXIT_VERIFY, main
from dcpo_lab.trainer import METRIC_FIELDS, read_metrics_csv

SMALL = """
task = multipath
task.vocab = 4
train.steps = 10
train.G = 4
objective.kind = dcpo
objective.alpha_mode = fixed
objective.alpha = 1.0
run.window = 5
"""

SWEEP = SMALL.replace("objective.kind = dcpo\n", "") + """
run.seeds = 0 1
sweep.j3.objective.kind = j3
sweep.j4.objective.kind = j4
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_single_run_writes_one_row_per_step(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, SMALL), "--out", str(out)]) == EXIT_OK
    recs = read_metrics_csv(out / "seed0" / "metrics.csv")
    assert [r.step for r in recs] == list(range(10))
    summary = json.loads((out / "seed0" / "summary.json").read_text())
    assert summary["steps"] == 10 and summary["config"]["objective"]["kind"] == "dcpo"
    assert (out / "seed0" / "params.txt").exists() and (out / "entropy.svg").exists()
    assert "regulated" in capsys.readouterr().out or "collapsed" in (out / "comparison.txt").read_text()


def test_seed_flag_overrides_the_config(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, SMALL), "--out", str(out), "--seed", "5"]) == EXIT_OK
    assert (out / "seed5" / "metrics.csv").exists() and not (out / "seed0").exists()


def test_sweep_is_byte_identical_across_reruns_and_worker_counts(tmp_path):
    cfg = write(tmp_path, SWEEP)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["run", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert main(["run", "--config", cfg, "--out", str(c), "--parallel", "2"]) == EXIT_OK
    ta, tb, tc = tree(a), tree(b), tree(c)
    assert set(ta) >= {"j3/seed0/metrics.csv", "j3/seed1/metrics.csv", "j4/seed1/metrics.csv", "comparison.txt"}
    assert ta == tb == tc
    table = (a / "comparison.txt").read_text().splitlines()
    assert [line.split()[0] for line in table[1:]] == ["j3", "j4"]


@pytest.mark.parametrize("text", ["task = maze\n", "train.steps = ten\n", "nonsense\n", "run.window = 99\n"])
def test_bad_config_exits_2_and_writes_nothing(tmp_path, capsys, text):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, SMALL + text), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "run.cfg:" in err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_numeric_failure_exits_3_and_keeps_the_partial_csv(tmp_path, monkeypatch):
    from dcpo_lab import trainer
    real = trainer.objective_gradient
    calls = {"n": 0}

    def flaky(params, groups, spec, alpha=0.0, reg=None):
        est = real(params, groups, spec, alpha, reg)
        calls["n"] += 1
        if calls["n"] > 3 * 4:  # three full steps of four minibatches
            est.grad[0, 0] = float("nan")
        return est
    monkeypatch.setattr(trainer, "objective_gradient", flaky)
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, SMALL), "--out", str(out)]) == EXIT_RUN
    assert len(read_metrics_csv(out / "seed0" / "metrics.csv")) == 3


def test_plot_verb(tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", write(tmp_path, SMALL), "--out", str(out)])
    csv = str(out / "seed0" / "metrics.csv")
    assert main(["plot", csv, "--out", str(tmp_path / "a.svg")]) == EXIT_OK
    assert main(["plot", csv, "--out", str(tmp_path / "b.svg")]) == EXIT_OK
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert main(["plot", "--out", str(tmp_path / "c.svg")]) == EXIT_USAGE
    assert main(["plot", csv, "--out", str(tmp_path / "d.svg"), "--labels", "x,y"]) == EXIT_USAGE


def test_plot_rejects_foreign_csv(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    assert main(["plot", str(tmp_path / "x.csv"), "--out", str(tmp_path / "x.svg")]) == EXIT_USAGE


def test_tasks_verb_lists_builtins(capsys):
    assert main(["tasks"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("needle", "multipath", "staircase"):
        assert name in out


def test_verify_gradients_passes(capsys):
    assert main(["verify", "--suite", "gradients"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1].endswith("checks passed") and lines[0].startswith("PASS")


def test_swapped_temperatures_make_verify_fail(capsys):
    """Negative control: with the temperatures swapped the direction check must fail."""
    assert main(["verify", "--suite", "theorem1", "--t-high", "0.7", "--t-low", "1.5"]) == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out


def test_usage_errors_exit_2():
    assert main([]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["verify", "--suite", "nope"]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dcpo_lab", "tasks"], capture_output=True, text=True)
    assert res.returncode == 0 and "multipath" in res.stdout
    assert ",".join(METRIC_FIELDS).startswith("step,policy_entropy")
