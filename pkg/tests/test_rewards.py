import pytest

from dler_lab.rewards import (ContractViolationError, PenaltyRegistrationError,
                              PenaltySpec, RewardRecord, register_penalty,
                              score)
from dler_lab.tasks import Prompt


@pytest.fixture
def prompt1(vocab):
    return Prompt(prompt_id=0, difficulty=1, answer_token=vocab.answer_id(1))


def test_correct_within_budget(base_params, prompt1, vocab, make_rollout):
    ro = make_rollout(base_params, prompt1, [6, vocab.answer_id(1), vocab.eos_id])
    rec = score(prompt1, ro, PenaltySpec(target_length=24), vocab)
    assert rec == RewardRecord(correctness=1.0, penalty_applied=False,
                               final_reward=1.0)


def test_incorrect_within_budget(base_params, prompt1, vocab, make_rollout):
    ro = make_rollout(base_params, prompt1, [6, vocab.answer_id(2), vocab.eos_id])
    rec = score(prompt1, ro, PenaltySpec(target_length=24), vocab)
    assert rec.correctness == 0.0
    assert not rec.penalty_applied
    assert rec.final_reward == 0.0


def test_truncated_gets_zero_reward(base_params, prompt1, vocab, make_rollout):
    tokens = [6, vocab.answer_id(1)]
    ro = make_rollout(base_params, prompt1, tokens, truncated=True)
    rec = score(prompt1, ro, PenaltySpec(target_length=2), vocab)
    assert rec.penalty_applied
    assert rec.final_reward == 0.0


def test_overlong_rollout_is_contract_violation(base_params, prompt1, vocab,
                                                make_rollout):
    ro = make_rollout(base_params, prompt1,
                      [6, 6, 6, vocab.answer_id(1), vocab.eos_id])
    with pytest.raises(ContractViolationError):
        score(prompt1, ro, PenaltySpec(target_length=3), vocab)


def test_penalty_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec(target_length=0)


def test_unknown_penalty_kind(base_params, prompt1, vocab, make_rollout):
    ro = make_rollout(base_params, prompt1, [vocab.eos_id])
    with pytest.raises(ValueError):
        score(prompt1, ro, PenaltySpec(kind="exponential", target_length=8),
              vocab)


def test_register_penalty_is_write_once(base_params, prompt1, vocab,
                                        make_rollout):
    def half_credit(correctness, rollout, spec):
        if rollout.length > spec.target_length // 2:
            return True, correctness * 0.5
        return False, correctness

    register_penalty("half_credit_once", half_credit)
    with pytest.raises(PenaltyRegistrationError):
        register_penalty("half_credit_once", half_credit)
    with pytest.raises(PenaltyRegistrationError):
        register_penalty("truncation", half_credit)

    ro = make_rollout(base_params, prompt1,
                      [6, vocab.answer_id(1), vocab.eos_id])
    rec = score(prompt1, ro, PenaltySpec(kind="half_credit_once", target_length=4),
                vocab)
    assert rec.penalty_applied
    assert rec.final_reward == 0.5
