"""Vectorized numpy kernels (fallback backend).

Rollouts advance in lockstep over positions with an alive mask. Because
every rollout owns an independent counter-based stream, lockstep draws for
finished rollouts are discarded without perturbing anyone else, and the
recorded outputs match the per-rollout loop backend bit for bit.
"""

import numpy as np

from dler_lab.backends._rng import GOLDEN, INV_2_53, MIX1, MIX2

_G = np.uint64(GOLDEN)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)


def _uniforms(state: np.ndarray) -> np.ndarray:
    z = state ^ (state >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * INV_2_53


def sample_tokens(cum, tot, lsm, ent, class_ids, bucket_lut, keys,
                  eos_id, n_prev, n_buckets, start_prev):
    n = class_ids.shape[0]
    max_len = bucket_lut.shape[0]
    n_vocab = cum.shape[1]

    tokens = np.zeros((n, max_len), dtype=np.int64)
    logps = np.zeros((n, max_len), dtype=np.float64)
    ents = np.zeros((n, max_len), dtype=np.float64)
    lengths = np.zeros(n, dtype=np.int64)

    state = keys.copy()
    prev = np.full(n, start_prev, dtype=np.int64)
    alive = np.ones(n, dtype=bool)

    for pos in range(max_len):
        s = (class_ids * n_prev + prev) * n_buckets + bucket_lut[pos]
        state = state + _G
        u = _uniforms(state)
        t = u * tot[s]
        rows = cum[s]
        above = rows > t[:, None]
        # u close enough to 1 can step past the last cumulative bin
        tok = np.where(above.any(axis=1), above.argmax(axis=1), n_vocab - 1)

        tokens[:, pos] = np.where(alive, tok, 0)
        logps[:, pos] = np.where(alive, lsm[s, tok], 0.0)
        ents[:, pos] = np.where(alive, ent[s], 0.0)
        lengths = np.where(alive, pos + 1, lengths)
        prev = np.where(alive, tok, prev)
        alive = alive & (tok != eos_id)
        if not alive.any():
            break

    truncated = alive
    return tokens, lengths, truncated, logps, ents


def scatter_grad(w, st, tok, n_states, n_vocab):
    grad = np.zeros((n_states, n_vocab), dtype=np.float64)
    rowc = np.zeros(n_states, dtype=np.float64)
    np.add.at(grad, (st, tok), w)
    np.add.at(rowc, st, w)
    return grad, rowc
