import numpy as np
import pytest

from dler_lab.tasks import (Prompt, TaskConfigError, TaskSuiteConfig,
                            make_prompt_pool, verify)


def test_pool_shape_and_contents(pool, vocab):
    assert len(pool) == 4 * 8
    for level in (1, 2, 3, 4):
        ours = [p for p in pool if p.difficulty == level]
        assert len(ours) == 8
        assert all(p.answer_token == vocab.answer_id(level) for p in ours)
    assert sorted(p.prompt_id for p in pool) == list(range(32))


def test_pool_is_shuffled_deterministically(task_config, vocab):
    a = make_prompt_pool(task_config, np.random.default_rng(0), vocab)
    b = make_prompt_pool(task_config, np.random.default_rng(0), vocab)
    c = make_prompt_pool(task_config, np.random.default_rng(1), vocab)
    assert [p.prompt_id for p in a] == [p.prompt_id for p in b]
    assert [p.prompt_id for p in a] != [p.prompt_id for p in c]
    assert [p.prompt_id for p in a] != sorted(p.prompt_id for p in a)


def test_pool_accepts_int_seed(task_config, vocab):
    a = make_prompt_pool(task_config, 0, vocab)
    b = make_prompt_pool(task_config, np.random.default_rng(0), vocab)
    assert [p.prompt_id for p in a] == [p.prompt_id for p in b]


def test_pool_rejects_uncovered_difficulty(vocab):
    cfg = TaskSuiteConfig(difficulty_range=(1, 5))
    with pytest.raises(TaskConfigError):
        make_prompt_pool(cfg, np.random.default_rng(0), vocab)


def test_task_config_validation():
    with pytest.raises(ValueError):
        TaskSuiteConfig(difficulty_range=(3, 1))
    with pytest.raises(ValueError):
        TaskSuiteConfig(prompts_per_level=0)


@pytest.fixture
def prompt2(vocab):
    return Prompt(prompt_id=0, difficulty=2, answer_token=vocab.answer_id(2))


def test_verify_requires_enough_steps(base_params, prompt2, vocab, make_rollout):
    step, ans, eos = 6, vocab.answer_id(2), vocab.eos_id
    ok = make_rollout(base_params, prompt2, [step, step, ans, eos])
    assert verify(prompt2, ok, vocab)
    short = make_rollout(base_params, prompt2, [step, ans, eos])
    assert not verify(prompt2, short, vocab)


def test_verify_first_answer_decides(base_params, prompt2, vocab, make_rollout):
    step, eos = 6, vocab.eos_id
    right, wrong = vocab.answer_id(2), vocab.answer_id(3)
    early_wrong = make_rollout(base_params, prompt2,
                               [step, step, wrong, right, eos])
    assert not verify(prompt2, early_wrong, vocab)
    late_steps = make_rollout(base_params, prompt2,
                              [step, wrong, step, right, eos])
    assert not verify(prompt2, late_steps, vocab)


def test_verify_ignores_filler_and_transitions(base_params, prompt2, vocab, make_rollout):
    step, ans, eos = 6, vocab.answer_id(2), vocab.eos_id
    padded = make_rollout(base_params, prompt2,
                          [0, 7, step, 14, 3, step, 9, ans, eos])
    assert verify(prompt2, padded, vocab)


def test_verify_truncated_is_false(base_params, prompt2, vocab, make_rollout):
    step, ans = 6, vocab.answer_id(2)
    ro = make_rollout(base_params, prompt2, [step, step, ans], truncated=True)
    assert not verify(prompt2, ro, vocab)


def test_verify_no_answer_is_false(base_params, prompt2, vocab, make_rollout):
    ro = make_rollout(base_params, prompt2, [6, 6, 6, vocab.eos_id])
    assert not verify(prompt2, ro, vocab)
