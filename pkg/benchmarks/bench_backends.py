"""Compare the jit and pure-numpy sampling kernels on a training-shaped load.

Both backends are imported directly (bypassing the DLER_BACKEND switch) so a
single process can time them against each other and confirm the outputs agree
bit for bit.

Usage: python benchmarks/bench_backends.py [--rollouts N] [--max-len L] [--iters K]
"""

import argparse
import time

import numpy as np

from dler_lab.backends import _numpy as numpy_backend
from dler_lab.policy import N_POSITION_BUCKETS, _bucket_lut, make_base_params
from dler_lab.tasks import TaskSuiteConfig
from dler_lab.vocab import default_vocab

try:
    from dler_lab.backends import _numba as numba_backend
except ImportError:
    numba_backend = None


def build_workload(n_rollouts, max_len, seed):
    vocab = default_vocab()
    params = make_base_params(vocab, TaskSuiteConfig())
    tables = params._tables
    rng = np.random.default_rng(seed)
    class_ids = rng.integers(0, params.n_classes, size=n_rollouts, dtype=np.int64)
    keys = rng.integers(0, 2 ** 64, size=n_rollouts, dtype=np.uint64)
    args = (tables.cum, tables.tot, tables.lsm, tables.ent, class_ids,
            _bucket_lut(max_len), keys, vocab.eos_id, vocab.size + 1,
            N_POSITION_BUCKETS, vocab.size)
    return params, args


def time_backend(backend, args, iters):
    backend.sample_tokens(*args)
    best = float("inf")
    for _ in range(iters):
        t0 = time.perf_counter()
        out = backend.sample_tokens(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def time_scatter(backend, weights, states, tokens, n_states, n_vocab, iters):
    backend.scatter_grad(weights, states, tokens, n_states, n_vocab)
    best = float("inf")
    for _ in range(iters):
        t0 = time.perf_counter()
        out = backend.scatter_grad(weights, states, tokens, n_states, n_vocab)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rollouts", type=int, default=512)
    parser.add_argument("--max-len", type=int, default=24)
    parser.add_argument("--iters", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args_ns = parser.parse_args()

    params, kernel_args = build_workload(args_ns.rollouts, args_ns.max_len,
                                         args_ns.seed)
    np_time, np_out = time_backend(numpy_backend, kernel_args, args_ns.iters)

    tokens, lengths = np_out[0], np_out[1]
    rng = np.random.default_rng(args_ns.seed + 1)
    total = int(lengths.sum())
    flat_states = rng.integers(0, params.n_states, size=total, dtype=np.int64)
    flat_tokens = np.concatenate(
        [tokens[i, :lengths[i]] for i in range(tokens.shape[0])])
    weights = rng.standard_normal(total)

    np_sc_time, np_sc = time_scatter(numpy_backend, weights, flat_states,
                                     flat_tokens, params.n_states,
                                     params.vocab.size, args_ns.iters)

    print(f"workload: {args_ns.rollouts} rollouts x {args_ns.max_len} tokens, "
          f"{total} sampled tokens, best of {args_ns.iters}")
    print(f"numpy  sample_tokens: {np_time * 1e3:8.3f} ms   "
          f"scatter_grad: {np_sc_time * 1e3:8.3f} ms")

    if numba_backend is None:
        print("numba backend unavailable; skipping comparison")
        return

    nb_time, nb_out = time_backend(numba_backend, kernel_args, args_ns.iters)
    nb_sc_time, nb_sc = time_scatter(numba_backend, weights, flat_states,
                                     flat_tokens, params.n_states,
                                     params.vocab.size, args_ns.iters)

    same = all(np.array_equal(a, b) for a, b in zip(np_out, nb_out))
    same_sc = all(np.array_equal(a, b) for a, b in zip(np_sc, nb_sc))
    print(f"numba  sample_tokens: {nb_time * 1e3:8.3f} ms   "
          f"scatter_grad: {nb_sc_time * 1e3:8.3f} ms")
    print(f"speedup: sample {np_time / nb_time:5.2f}x   "
          f"scatter {np_sc_time / nb_sc_time:5.2f}x")
    print(f"bitwise agreement: sample={same} scatter={same_sc}")
    if not (same and same_sc):
        raise SystemExit("backend outputs disagree")


if __name__ == "__main__":
    main()
