"""Diagnostics: clipped-token statistics, entropy distribution, trace
segmentation, and pass@k.

Trace analysis works on text. Synthetic rollouts are rendered to text first
(step delimiters become blank lines, transition tokens become hedging
keywords), so the same counters serve both corpora and rollouts.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from dler_lab import vocab as vocab_mod
from dler_lab.policy import PolicyParams, flatten_batch, _check_alignment

DEFAULT_KEYWORDS = (
    "But", "Wait", "Alternatively", "However", "Hmm", "Hmmm",
    "Not sure", "Going back", "Backtrack", "Trace back", "Another",
)


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class ClassStats:
    count: int
    mean_probability: float = None
    mean_entropy: float = None


@dataclass(frozen=True)
class ClipStats:
    unclipped: ClassStats
    clipped_high: ClassStats
    clipped_low: ClassStats

    @property
    def total(self) -> int:
        return self.unclipped.count + self.clipped_high.count + self.clipped_low.count


def _class_stats(mask, probs, entropies) -> ClassStats:
    n = int(mask.sum())
    if n == 0:
        return ClassStats(count=0)
    return ClassStats(count=n,
                      mean_probability=float(probs[mask].mean()),
                      mean_entropy=float(entropies[mask].mean()))


def clip_stats(batch, new_params: PolicyParams, advantages,
               eps_low: float, eps_high: float) -> ClipStats:
    """Classify batch tokens by which surrogate branch they fall in.

    A token is clipped_high iff its ratio exceeds 1 + eps_high with positive
    advantage, clipped_low iff the ratio is below 1 - eps_low with negative
    advantage; everything else keeps its gradient. Probability and entropy
    are the values recorded at sampling time.
    """
    flat = flatten_batch(new_params, batch)
    values = _check_alignment(flat, advantages)
    new_lp = new_params._tables.lsm[flat.states, flat.tokens]
    s = np.exp(new_lp - flat.old_logprobs)
    a = values[flat.rollout_ids]
    hi = (s > 1 + eps_high) & (a > 0)
    lo = (s < 1 - eps_low) & (a < 0)
    probs = np.exp(flat.old_logprobs)
    return ClipStats(
        unclipped=_class_stats(~hi & ~lo, probs, flat.old_entropies),
        clipped_high=_class_stats(hi, probs, flat.old_entropies),
        clipped_low=_class_stats(lo, probs, flat.old_entropies),
    )


@dataclass(frozen=True, eq=False)
class EntropyHistogram:
    counts: np.ndarray
    bin_edges: np.ndarray
    mean: float
    median: float
    skewness: float


def entropy_histogram(entropies, bins: int) -> EntropyHistogram:
    """Fixed-width histogram over [0, max] plus moment statistics."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = np.asarray(entropies, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EmptyInputError("no entropy values to histogram")
    if (values < 0).any():
        raise ValueError("entropies must be non-negative")
    hi = float(values.max())
    counts, edges = np.histogram(values, bins=bins, range=(0.0, hi if hi > 0 else 1.0))
    mean = float(values.mean())
    std = float(values.std())
    skew = float(((values - mean) ** 3).mean() / std ** 3) if std > 0 else 0.0
    return EntropyHistogram(counts=counts, bin_edges=edges,
                            mean=mean, median=float(np.median(values)),
                            skewness=skew)


@dataclass(frozen=True)
class TraceSlice:
    response_count: int
    step_count: int
    mean_tokens_per_step: float
    keyword_count: int


@dataclass(frozen=True)
class TraceStats:
    overall: TraceSlice
    correct: TraceSlice
    incorrect: TraceSlice


def _keyword_patterns(keywords):
    # whole-word, case-sensitive; multi-word keywords matched literally
    return [re.compile(r"(?<!\w)" + re.escape(kw) + r"(?!\w)") for kw in keywords]


def _slice_stats(texts, patterns) -> TraceSlice:
    steps = 0
    tokens = 0
    keyword_hits = 0
    for text in texts:
        segments = [seg for seg in text.split("\n\n") if seg.strip()]
        steps += len(segments)
        tokens += sum(len(seg.split()) for seg in segments)
        keyword_hits += sum(len(p.findall(text)) for p in patterns)
    return TraceSlice(
        response_count=len(texts),
        step_count=steps,
        mean_tokens_per_step=tokens / steps if steps else 0.0,
        keyword_count=keyword_hits,
    )


def trace_stats(responses, keywords=DEFAULT_KEYWORDS) -> TraceStats:
    """Step and keyword counts over labeled response texts.

    Accepts records as dicts with "text" and "correct" keys or as
    (text, correct) pairs. Steps are the non-empty segments between blank
    lines; keyword counting is case-sensitive whole-word matching.
    """
    texts, flags = [], []
    for rec in responses:
        if isinstance(rec, dict):
            texts.append(rec["text"])
            flags.append(bool(rec["correct"]))
        else:
            text, correct = rec
            texts.append(text)
            flags.append(bool(correct))
    patterns = _keyword_patterns(keywords)
    return TraceStats(
        overall=_slice_stats(texts, patterns),
        correct=_slice_stats([t for t, ok in zip(texts, flags) if ok], patterns),
        incorrect=_slice_stats([t for t, ok in zip(texts, flags) if not ok], patterns),
    )


def rollout_to_text(rollout, vocab=None) -> str:
    """Render a synthetic rollout as a text trace.

    Transition tokens cycle through the default keyword list, step
    delimiters become blank lines, and other roles become plain words, so
    trace_stats sees synthetic rollouts the way it sees text corpora.
    """
    voc = vocab if vocab is not None else vocab_mod.default_vocab()
    transition_ids = voc.ids_with_role(vocab_mod.TRANSITION)
    words = []
    for t in rollout.tokens:
        t = int(t)
        role = voc.role_map[t]
        if role == vocab_mod.EOS:
            break
        if role == vocab_mod.STEP_DELIMITER:
            words.append("\n\n")
        elif role == vocab_mod.TRANSITION:
            words.append(DEFAULT_KEYWORDS[transition_ids.index(t) % len(DEFAULT_KEYWORDS)])
        elif role == vocab_mod.STEP:
            words.append("deduce")
        elif vocab_mod.is_answer_role(role):
            words.append(f"answer{vocab_mod.answer_level(role)}")
        else:
            words.append(f"um{t}")
    out = []
    for w in words:
        if w == "\n\n":
            out.append(w)
        else:
            if out and out[-1] != "\n\n":
                out.append(" ")
            out.append(w)
    return "".join(out)


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that a size-k sample out of n contains a correct response."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)
