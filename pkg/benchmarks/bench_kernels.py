"""Time each hot kernel on both backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for the numpy and numba
implementations and checks that their outputs agree.
"""

from __future__ import annotations

import argparse
import itertools
import time

import numpy as np

from causality_lab import _kernels


def _inputs(rng: np.random.Generator) -> dict:
    bits = rng.integers(0, 2, size=(4096, 24), dtype=np.uint8)
    cols = np.arange(0, 24, 2, dtype=np.int64)
    ids = rng.integers(0, 512, size=200_000).astype(np.int64)
    weights = rng.random(200_000)
    joints = rng.dirichlet(np.ones(4), size=(20_000, 2, 2)).reshape(20_000, 2, 2, 2, 2)
    rel = np.zeros((7, 7), dtype=bool)  # a 7-element antichain: every permutation is natural
    perms = np.array(list(itertools.permutations(range(7))), dtype=np.int64)
    return {
        "pack_keys": (bits, cols),
        "group_sums": (ids, weights, 512),
        "chsh_batch": (joints,),
        "canonical_code": (rel, perms),
    }


def _best(fn, args, repeat: int) -> tuple[float, object]:
    out = fn(*args)  # warm-up (and compilation for numba)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    inputs = _inputs(np.random.default_rng(args.seed))
    backends = _kernels.available_backends()
    print(f"{'kernel':<16}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + f"{'agree':>8}")
    for name, kargs in inputs.items():
        times, outs = [], []
        for b in backends:
            t, out = _best(getattr(_kernels.backend(b), name), kargs, args.repeat)
            times.append(t)
            outs.append(np.asarray(out))
        agree = all(np.allclose(outs[0], o) for o in outs[1:])
        print(f"{name:<16}" + "".join(f"{1e3 * t:>16.3f}" for t in times) + f"{str(agree):>8}")


if __name__ == "__main__":
    main()
