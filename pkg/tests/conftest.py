import numpy as np
import pytest

from dler_lab.policy import Rollout, _token_states, log_prob, make_base_params
from dler_lab.tasks import TaskSuiteConfig, make_prompt_pool
from dler_lab.vocab import default_vocab


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture(scope="session")
def task_config():
    return TaskSuiteConfig()


@pytest.fixture(scope="session")
def base_params(vocab, task_config):
    return make_base_params(vocab, task_config)


@pytest.fixture(scope="session")
def pool(task_config, vocab):
    return make_prompt_pool(task_config, np.random.default_rng(0), vocab)


def build_rollout(params, prompt, tokens, truncated=False):
    """Hand-built rollout with per-token records consistent with params."""
    tok = np.asarray(tokens, dtype=np.int64)
    lp = log_prob(params, prompt, tok)
    states = _token_states(params, params.class_of(prompt.difficulty), tok)
    ent = params._tables.ent[states].copy()
    return Rollout(tokens=tok, old_logprobs=lp, old_entropies=ent,
                   truncated=truncated, length=len(tok))


@pytest.fixture(scope="session")
def make_rollout():
    return build_rollout
