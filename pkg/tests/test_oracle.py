import numpy as np
import pytest

from dcpo_lab import tasks
from dcpo_lab.objectives import ObjectiveSpec
from dcpo_lab.oracle import (enumerate_responses, entropy_direction_test, exact_entropy_gradient,
                             exact_grpo_gradient, exact_objective_gradient, exact_policy_entropy,
                             exact_regularizer_gradient, finite_diff_gradient, mc_vs_exact, random_tiny_task)
from dcpo_lab.policy import PolicyParams, Vocab
from dcpo_lab.tasks import Task


def setup(task=None, seed=0, scale=1.0):
    task = task or tasks.multipath(4, 3)
    return task, PolicyParams.init(task.vocab, task.queries, task.horizon, scale=scale, rng=seed)


@pytest.mark.parametrize("T", [0.7, 1.0, 1.6])
def test_enumeration_probabilities_sum_to_one(T):
    task, p = setup(seed=1)
    for q in task.queries:
        en = enumerate_responses(p, task, q, T)
        assert en.probs_base.sum() == pytest.approx(1.0, abs=1e-12)
        assert en.probs_tempered.sum() == pytest.approx(1.0, abs=1e-12)
        assert en.rewards.sum() == len(task.reference_set(q))


def test_uniform_policy_expected_reward():
    # every token has probability 1/V, so a reference of length L has mass V**-L
    task, p = setup(scale=0.0)
    en = enumerate_responses(p, task, 0)
    expected = sum(4.0 ** -len(r) for r in task.reference_set(0))
    assert en.expected_reward == pytest.approx(expected) == pytest.approx(4 / 64)


def test_uniform_policy_entropy_is_log_vocab():
    task, p = setup(scale=0.0)
    assert exact_policy_entropy(p, task) == pytest.approx(np.log(4))


def test_entropy_gradient_matches_finite_differences():
    task, p = setup(seed=2)
    numeric = finite_diff_gradient(lambda q: exact_policy_entropy(q, task), p)
    assert np.allclose(exact_entropy_gradient(p, task), numeric, rtol=1e-6, atol=1e-9)


def test_j1_regularizer_is_the_length_weighted_reward_gradient():
    """Every reference has length 2, so j1 is half the gradient of the expected reward."""
    task = Task("pair", Vocab(3), 2, {0: frozenset({(1, 2)})})
    _, p = setup(task, seed=3)
    numeric = finite_diff_gradient(lambda q: enumerate_responses(q, task, 0).expected_reward, p)
    assert np.allclose(exact_regularizer_gradient(p, task, 1.0, "j1"), 0.5 * numeric, rtol=1e-6, atol=1e-10)


def test_regularizer_variants_coincide_at_unit_temperature():
    task, p = setup(seed=4)
    j1 = exact_regularizer_gradient(p, task, 1.0, "j1")
    for v in ("j2", "j3", "j4", "dcpo-term"):
        assert np.allclose(exact_regularizer_gradient(p, task, 1.0, v), j1, rtol=0, atol=1e-14)


def test_objective_oracle_reduces_to_grpo_at_zero_alpha():
    task, p = setup(seed=6)
    grpo = exact_grpo_gradient(p, task, 8)
    for kind in ("dcpo", "dcpo_no_double_is", "dcpo_no_reinforce", "j3"):
        assert np.array_equal(exact_objective_gradient(p, task, ObjectiveSpec(kind), 8, 1.2, 0.0), grpo)


def test_unknown_variant_rejected():
    task, p = setup()
    with pytest.raises(ValueError):
        exact_regularizer_gradient(p, task, 1.2, "j5")


def test_finite_difference_step_bounds():
    _, p = setup()
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda q: 0.0, p, step=1e-2)


def test_random_tiny_task_has_partial_references():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = random_tiny_task(rng, 4, 2)
        n = len(t.reference_set(0))
        assert 2 <= n < 4  # pool is eos plus three content-then-eos responses


def test_direction_report_counts():
    rep = entropy_direction_test(n_policies=10, T=1.5, seed=1)
    assert rep.n_used == 10 == len(rep.deltas)
    assert 0.0 <= rep.fraction_increasing <= 1.0


@pytest.mark.parametrize("kind", ["grpo", "dcpo", "j4"])
def test_small_monte_carlo_agrees_with_the_oracle(kind):
    task, p = setup(seed=7, scale=0.5)
    rep = mc_vs_exact(p, task, ObjectiveSpec(kind), samples=400, alpha=0.7, seed=1)
    assert rep.frac_within_4sigma >= 0.97
    assert np.isfinite(rep.max_abs_z)
