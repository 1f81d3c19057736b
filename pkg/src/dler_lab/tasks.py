"""Synthetic chain tasks with a difficulty knob.

A prompt of difficulty d is solved by any untruncated response that emits at
least d step tokens and then the answer token for level d. Filler and
transition tokens never help correctness; they only spend budget. An
untrained policy biased toward fillers therefore wastes length it could
learn to cut, which is the condition the training recipe is meant to exploit.
"""

from dataclasses import dataclass

import numpy as np

from dler_lab.vocab import STEP, Vocab, default_vocab, is_answer_role


class TaskConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Prompt:
    prompt_id: int
    difficulty: int
    answer_token: int


@dataclass(frozen=True)
class TaskSuiteConfig:
    difficulty_range: tuple = (1, 4)
    prompts_per_level: int = 8
    init_verbosity_bias: float = 2.0

    def __post_init__(self):
        lo, hi = self.difficulty_range
        if lo < 1:
            raise TaskConfigError("difficulty_range lower bound must be >= 1")
        if hi < lo:
            raise TaskConfigError(
                f"difficulty_range [{lo}, {hi}] is empty"
            )
        if self.prompts_per_level < 1:
            raise TaskConfigError("prompts_per_level must be >= 1")
        if self.init_verbosity_bias < 0:
            raise TaskConfigError("init_verbosity_bias must be >= 0")


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def make_prompt_pool(config: TaskSuiteConfig, rng, vocab: Vocab = None) -> list:
    """Prompt pool covering every difficulty level uniformly, shuffled by rng."""
    voc = vocab if vocab is not None else default_vocab()
    lo, hi = config.difficulty_range
    for d in range(lo, hi + 1):
        try:
            voc.answer_id(d)
        except ValueError as exc:
            raise TaskConfigError(
                f"vocab has no answer token for difficulty {d}"
            ) from exc

    pool = []
    pid = 0
    for d in range(lo, hi + 1):
        for _ in range(config.prompts_per_level):
            pool.append(Prompt(prompt_id=pid, difficulty=d, answer_token=voc.answer_id(d)))
            pid += 1
    _as_generator(rng).shuffle(pool)
    return pool


def verify(prompt: Prompt, rollout, vocab: Vocab = None) -> bool:
    """Rule-based correctness.

    True iff the rollout is untruncated, emits at least prompt.difficulty
    step tokens before its first answer-role token, and that token is the
    prompt's answer. Tokens after the first answer token are ignored.
    """
    voc = vocab if vocab is not None else default_vocab()
    if rollout.truncated:
        return False
    steps = 0
    for t in rollout.tokens:
        role = voc.role_map[int(t)]
        if is_answer_role(role):
            return steps >= prompt.difficulty and int(t) == prompt.answer_token
        if role == STEP:
            steps += 1
    return False
