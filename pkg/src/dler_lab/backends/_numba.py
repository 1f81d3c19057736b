"""Compiled numba kernels (default backend).

Plain per-rollout loops; numba removes the interpreter overhead that makes
these the two hot spots of training (token-by-token sampling and the
per-token gradient scatter).
"""

import numba
import numpy as np

from dler_lab.backends._rng import GOLDEN, INV_2_53, MIX1, MIX2

_G = np.uint64(GOLDEN)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@numba.njit(cache=True)
def sample_tokens(cum, tot, lsm, ent, class_ids, bucket_lut, keys,
                  eos_id, n_prev, n_buckets, start_prev):
    n = class_ids.shape[0]
    max_len = bucket_lut.shape[0]
    n_vocab = cum.shape[1]

    tokens = np.zeros((n, max_len), dtype=np.int64)
    logps = np.zeros((n, max_len), dtype=np.float64)
    ents = np.zeros((n, max_len), dtype=np.float64)
    lengths = np.zeros(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=np.bool_)

    for i in range(n):
        state = keys[i]
        prev = start_prev
        done = False
        for pos in range(max_len):
            s = (class_ids[i] * n_prev + prev) * n_buckets + bucket_lut[pos]
            state = state + _G
            z = state ^ (state >> _S30)
            z = z * _M1
            z = z ^ (z >> _S27)
            z = z * _M2
            z = z ^ (z >> _S31)
            u = np.float64(z >> _S11) * INV_2_53
            t = u * tot[s]
            tok = n_vocab - 1
            for j in range(n_vocab):
                if cum[s, j] > t:
                    tok = j
                    break
            tokens[i, pos] = tok
            logps[i, pos] = lsm[s, tok]
            ents[i, pos] = ent[s]
            lengths[i] = pos + 1
            prev = tok
            if tok == eos_id:
                done = True
                break
        truncated[i] = not done

    return tokens, lengths, truncated, logps, ents


@numba.njit(cache=True)
def scatter_grad(w, st, tok, n_states, n_vocab):
    grad = np.zeros((n_states, n_vocab), dtype=np.float64)
    rowc = np.zeros(n_states, dtype=np.float64)
    for i in range(w.shape[0]):
        grad[st[i], tok[i]] += w[i]
        rowc[st[i]] += w[i]
    return grad, rowc
