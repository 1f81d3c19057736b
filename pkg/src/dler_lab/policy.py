"""Tabular autoregressive softmax policy with exact surrogate gradients.

States condition on (difficulty class, previous token, position bucket)
instead of the full prefix, keeping the table small enough for exact
gradients while letting sampling react to local chain structure. Position
buckets are {0}, {1}, {2-3}, {4-7}, {8-15}, {16+}.

Probability tables (cumulative weights, log-softmax, per-state entropy) are
computed once per parameter value and shared with both kernel backends, so
sampled tokens and gradients are bitwise independent of backend choice.
"""

import functools
from dataclasses import dataclass

import numpy as np

from dler_lab import backends
from dler_lab.backends._rng import derive_key
from dler_lab.vocab import Vocab

N_POSITION_BUCKETS = 6


class InvalidPromptError(ValueError):
    """Prompt difficulty has no class in the policy state space."""


class InvalidTokenError(ValueError):
    """Token id outside the vocabulary."""


class AlignmentError(ValueError):
    """Advantages do not line up with the batch rollouts."""


class NumericalFailureError(FloatingPointError):
    """Non-finite values where finite parameters or gradients are required."""


def position_bucket(pos):
    # {0},{1},{2-3},{4-7},{8-15},{16+}
    if pos < 2:
        return pos
    if pos < 4:
        return 2
    if pos < 8:
        return 3
    if pos < 16:
        return 4
    return 5


@functools.lru_cache(maxsize=None)
def _bucket_lut(max_len: int) -> np.ndarray:
    lut = np.array([position_bucket(p) for p in range(max_len)], dtype=np.int64)
    lut.flags.writeable = False
    return lut


@dataclass(frozen=True, eq=False)
class _RowTables:
    cum: np.ndarray
    tot: np.ndarray
    lsm: np.ndarray
    probs: np.ndarray
    ent: np.ndarray


def _row_tables(logits: np.ndarray) -> _RowTables:
    m = logits.max(axis=1, keepdims=True)
    x = logits - m
    e = np.exp(x)
    cum = np.cumsum(e, axis=1)
    tot = np.ascontiguousarray(cum[:, -1])
    log_tot = np.log(tot)
    lsm = x - log_tot[:, None]
    probs = e / tot[:, None]
    # floating-point cancellation can leave a tiny negative entropy
    ent = np.maximum(log_tot - (e * x).sum(axis=1) / tot, 0.0)
    return _RowTables(cum, tot, lsm, probs, ent)


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Logit table indexed by (state-id, token-id).

    state-id = (class * (vocab.size + 1) + prev) * 6 + bucket, where prev
    ranges over token ids plus a start sentinel at index vocab.size and
    class = difficulty - diff_min.
    """

    logits: np.ndarray
    vocab: Vocab
    diff_min: int = 1

    def __post_init__(self):
        arr = np.array(self.logits, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != self.vocab.size:
            raise ValueError(
                f"logits must be (n_states, {self.vocab.size}), got {arr.shape}"
            )
        states_per_class = (self.vocab.size + 1) * N_POSITION_BUCKETS
        if arr.shape[0] == 0 or arr.shape[0] % states_per_class != 0:
            raise ValueError(
                f"state count {arr.shape[0]} is not a multiple of "
                f"{states_per_class} (prev-token slots x position buckets)"
            )
        if not np.isfinite(arr).all():
            raise NumericalFailureError("policy logits contain non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "logits", arr)

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]

    @property
    def n_classes(self) -> int:
        return self.n_states // ((self.vocab.size + 1) * N_POSITION_BUCKETS)

    def class_of(self, difficulty: int) -> int:
        c = difficulty - self.diff_min
        if not 0 <= c < self.n_classes:
            raise InvalidPromptError(
                f"difficulty {difficulty} outside the policy's class range "
                f"[{self.diff_min}, {self.diff_min + self.n_classes - 1}]"
            )
        return c

    def state_id(self, class_idx: int, prev: int, bucket: int) -> int:
        return (class_idx * (self.vocab.size + 1) + prev) * N_POSITION_BUCKETS + bucket

    @functools.cached_property
    def _tables(self) -> _RowTables:
        return _row_tables(self.logits)


@dataclass(frozen=True, eq=False)
class Rollout:
    """One sampled response with per-token records under the sampling policy."""

    tokens: np.ndarray
    old_logprobs: np.ndarray
    old_entropies: np.ndarray
    truncated: bool
    length: int

    def __post_init__(self):
        tok = np.asarray(self.tokens, dtype=np.int64)
        lp = np.asarray(self.old_logprobs, dtype=np.float64)
        ent = np.asarray(self.old_entropies, dtype=np.float64)
        if not (tok.shape == lp.shape == ent.shape == (self.length,)):
            raise ValueError("tokens, old_logprobs, old_entropies must all have `length` entries")
        if self.length < 1:
            raise ValueError("rollouts hold at least one token")
        if not (np.isfinite(lp).all() and np.isfinite(ent).all()):
            raise ValueError("per-token records must be finite")
        if (lp > 0).any():
            raise ValueError("log-probabilities must be <= 0")
        object.__setattr__(self, "tokens", tok)
        object.__setattr__(self, "old_logprobs", lp)
        object.__setattr__(self, "old_entropies", ent)


def make_base_params(vocab: Vocab, config, *,
                     step_base=3.2, chain_bonus=2.2,
                     answer_gain=0.5, answer_after_step_bonus=3.5,
                     early_answer_bias=-4.0, wrong_answer_bias=-3.0,
                     late_step_bias=-2.5,
                     eos_bias=-1.5, eos_after_answer_gain=5.5,
                     transition_bias=0.7) -> PolicyParams:
    """Competent-but-verbose initial policy for a task suite.

    The defaults produce a policy that already solves most prompts given a
    generous budget but pads its chains with filler and transition tokens
    (the strength of the padding is config.init_verbosity_bias), so training
    has real length slack to cut without destroying correctness. Answer
    emission turns on at a per-class position bucket and is strongest right
    after a step token; eos fires once an answer has been given.
    """
    lo, hi = config.difficulty_range
    n_classes = hi - lo + 1
    masks = vocab.role_masks()
    v = vocab.size
    answer_ids = np.nonzero(masks["answer"])[0]
    logits = np.zeros((n_classes * (v + 1) * N_POSITION_BUCKETS, v))

    for c in range(n_classes):
        d = lo + c
        correct = vocab.answer_id(d)
        # bucket at which answering becomes available; later for harder classes
        ready = min(2 + (c + 1) // 2, N_POSITION_BUCKETS - 2)
        for prev in range(v + 1):
            prev_is_answer = prev < v and bool(masks["answer"][prev])
            prev_is_step = prev < v and bool(masks["step"][prev])
            for b in range(N_POSITION_BUCKETS):
                row = logits[(c * (v + 1) + prev) * N_POSITION_BUCKETS + b]
                row[masks["filler"]] += config.init_verbosity_bias - (2.0 if prev_is_answer else 0.0)
                row[masks["transition"]] += transition_bias
                row[masks["step"]] += step_base \
                    + (chain_bonus if prev_is_step else 0.0) \
                    + (late_step_bias if b > ready else 0.0)
                for a in answer_ids:
                    if a == correct:
                        row[a] += (answer_gain + (answer_after_step_bonus if prev_is_step else 0.0)) \
                            if b >= ready else early_answer_bias
                    else:
                        row[a] += wrong_answer_bias
                row[vocab.eos_id] += eos_bias + (eos_after_answer_gain if prev_is_answer else 0.0)

    return PolicyParams(logits, vocab, diff_min=lo)


def _stream_key(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 64, dtype=np.uint64))
    if isinstance(rng, (int, np.integer)):
        return derive_key(int(rng))
    raise TypeError("rng must be an integer seed or a numpy Generator")


def sample_rollouts(params: PolicyParams, class_ids, max_len: int, keys) -> list:
    """Sample one rollout per (class id, stream key) pair through the backend kernel."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    t = params._tables
    tokens, lengths, truncated, logps, ents = backends.sample_tokens(
        t.cum, t.tot, t.lsm, t.ent,
        np.ascontiguousarray(class_ids, dtype=np.int64),
        _bucket_lut(max_len),
        np.ascontiguousarray(keys, dtype=np.uint64),
        params.vocab.eos_id,
        params.vocab.size + 1,
        N_POSITION_BUCKETS,
        params.vocab.size,
    )
    out = []
    for i in range(tokens.shape[0]):
        n = int(lengths[i])
        out.append(Rollout(
            tokens=tokens[i, :n].copy(),
            old_logprobs=logps[i, :n].copy(),
            old_entropies=ents[i, :n].copy(),
            truncated=bool(truncated[i]),
            length=n,
        ))
    return out


def sample_rollout(params: PolicyParams, prompt, max_len: int, rng) -> Rollout:
    c = params.class_of(prompt.difficulty)
    key = _stream_key(rng)
    return sample_rollouts(params, np.array([c]), max_len,
                           np.array([key], dtype=np.uint64))[0]


def _token_states(params: PolicyParams, class_idx: int, tokens: np.ndarray) -> np.ndarray:
    n = tokens.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    prev = np.empty(n, dtype=np.int64)
    prev[0] = params.vocab.size
    prev[1:] = tokens[:-1]
    return (class_idx * (params.vocab.size + 1) + prev) * N_POSITION_BUCKETS + _bucket_lut(n)


def log_prob(params: PolicyParams, prompt, tokens) -> np.ndarray:
    """Per-position log-probabilities of a token sequence; rng-free."""
    tok = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if tok.size and (tok.min() < 0 or tok.max() >= params.vocab.size):
        raise InvalidTokenError(
            f"token ids must lie in [0, {params.vocab.size})"
        )
    c = params.class_of(prompt.difficulty)
    st = _token_states(params, c, tok)
    return params._tables.lsm[st, tok]


def token_entropy(params: PolicyParams, state: int) -> float:
    if not 0 <= state < params.n_states:
        raise ValueError(f"state {state} outside [0, {params.n_states})")
    return float(params._tables.ent[state])


@dataclass(frozen=True, eq=False)
class FlatBatch:
    """Token-level view of a batch: parallel arrays over all rollout tokens."""

    states: np.ndarray
    tokens: np.ndarray
    rollout_ids: np.ndarray
    old_logprobs: np.ndarray
    old_entropies: np.ndarray
    inv_lengths: np.ndarray
    n_rollouts: int


def flatten_batch(params: PolicyParams, batch) -> FlatBatch:
    sts, toks, rids, lps, ents, invl = [], [], [], [], [], []
    rid = 0
    for group in batch:
        c = params.class_of(group.prompt.difficulty)
        for ro in group.rollouts:
            sts.append(_token_states(params, c, ro.tokens))
            toks.append(ro.tokens)
            rids.append(np.full(ro.length, rid, dtype=np.int64))
            lps.append(ro.old_logprobs)
            ents.append(ro.old_entropies)
            invl.append(1.0 / ro.length)
            rid += 1
    if rid == 0:
        empty = np.zeros(0, dtype=np.int64)
        return FlatBatch(empty, empty, empty,
                         np.zeros(0), np.zeros(0), np.zeros(0), 0)
    return FlatBatch(
        states=np.concatenate(sts),
        tokens=np.concatenate(toks),
        rollout_ids=np.concatenate(rids),
        old_logprobs=np.concatenate(lps),
        old_entropies=np.concatenate(ents),
        inv_lengths=np.array(invl),
        n_rollouts=rid,
    )


def _check_alignment(flat: FlatBatch, advantages):
    values = np.asarray(advantages.values, dtype=np.float64)
    if values.shape != (flat.n_rollouts,):
        raise AlignmentError(
            f"{values.shape[0] if values.ndim == 1 else values.shape} advantage values "
            f"for {flat.n_rollouts} batch rollouts"
        )
    return values


def _token_weights(flat, values, new_lp, eps_low, eps_high):
    s = np.exp(new_lp - flat.old_logprobs)
    a = values[flat.rollout_ids]
    # min(s*A, clip(s)*A) has zero slope only where the clipped branch wins
    active = np.where(a > 0, s <= 1 + eps_high,
                      np.where(a < 0, s >= 1 - eps_low, False))
    w = np.where(active, a * s * flat.inv_lengths[flat.rollout_ids] / flat.n_rollouts, 0.0)
    return s, w


def surrogate_objective(params: PolicyParams, batch, advantages,
                        eps_low: float, eps_high: float,
                        kl_coef: float, ref_params: PolicyParams) -> float:
    """Scalar value of the clipped surrogate (maximization convention)."""
    if eps_low <= 0 or eps_high <= 0:
        raise ValueError("clip widths must be positive")
    flat = flatten_batch(params, batch)
    values = _check_alignment(flat, advantages)
    if flat.n_rollouts == 0:
        return 0.0
    new_lp = params._tables.lsm[flat.states, flat.tokens]
    s = np.exp(new_lp - flat.old_logprobs)
    a = values[flat.rollout_ids]
    per_token = np.minimum(s * a, np.clip(s, 1 - eps_low, 1 + eps_high) * a)
    j = float((per_token * flat.inv_lengths[flat.rollout_ids]).sum() / flat.n_rollouts)
    if kl_coef != 0.0:
        ref_lp = ref_params._tables.lsm[flat.states, flat.tokens]
        j -= kl_coef * float(np.mean(0.5 * (new_lp - ref_lp) ** 2))
    return j


def surrogate_gradient(params: PolicyParams, batch, advantages,
                       eps_low: float, eps_high: float,
                       kl_coef: float, ref_params: PolicyParams) -> np.ndarray:
    """Exact gradient of surrogate_objective with respect to the logit table."""
    if eps_low <= 0 or eps_high <= 0:
        raise ValueError("clip widths must be positive")
    flat = flatten_batch(params, batch)
    values = _check_alignment(flat, advantages)
    if flat.states.size == 0:
        return np.zeros(params.logits.shape)
    new_lp = params._tables.lsm[flat.states, flat.tokens]
    _, w = _token_weights(flat, values, new_lp, eps_low, eps_high)
    if kl_coef != 0.0:
        ref_lp = ref_params._tables.lsm[flat.states, flat.tokens]
        w = w - kl_coef * (new_lp - ref_lp) / flat.states.size
    grad, rowc = backends.scatter_grad(w, flat.states, flat.tokens,
                                       params.n_states, params.vocab.size)
    # d log pi(v|s) / d logits[s, w] = [w == v] - probs[s, w]
    grad -= rowc[:, None] * params._tables.probs
    return grad


def apply_update(params: PolicyParams, grad, lr: float) -> PolicyParams:
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != params.logits.shape:
        raise ValueError(f"gradient shape {g.shape} != logits shape {params.logits.shape}")
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not np.isfinite(g).all():
        raise NumericalFailureError("gradient contains non-finite entries")
    return PolicyParams(params.logits + lr * g, params.vocab, params.diff_min)
