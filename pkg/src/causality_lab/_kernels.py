"""Hot loops with a numba implementation and a pure-numpy twin.

The numba versions are used when numba imports and ``CAUSALITY_LAB_NUMBA`` is
not set to ``0``.  Both backends are importable by name so tests can compare
them directly::

    from causality_lab import _kernels
    _kernels.backend("numpy").chsh_batch(j)
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

# ---------------------------------------------------------------------------
# numpy twins
# ---------------------------------------------------------------------------


def _np_pack_keys(bits: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pack ``bits[:, cols]`` into rows of uint64 words (LSB = first column)."""
    w = bits.shape[0]
    k = len(cols)
    nwords = max(1, (k + 63) // 64)
    out = np.zeros((w, nwords), dtype=np.uint64)
    sub = bits[:, cols].astype(np.uint64)
    for j in range(k):
        out[:, j // 64] |= sub[:, j] << np.uint64(j % 64)
    return out


def _np_group_sums(ids: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(ids, weights=weights, minlength=n).astype(np.float64)


def _np_chsh_batch(joints: np.ndarray) -> np.ndarray:
    """CHSH value for each model; ``joints[m, i, j, X, Y]`` with index 0 meaning +1."""
    e = joints[..., 0, 0] + joints[..., 1, 1] - joints[..., 0, 1] - joints[..., 1, 0]
    return e[:, 0, 0] - e[:, 0, 1] + e[:, 1, 0] + e[:, 1, 1]


def _np_canonical_code(rel: np.ndarray, perms: np.ndarray) -> int:
    """Smallest upper-triangle code of ``rel`` over natural relabellings in ``perms``.

    ``perms[k]`` lists old element indices in new order.  Returns -1 when no
    permutation is a natural labelling.
    """
    n = rel.shape[0]
    if n == 0:
        return 0
    ei, ej = np.nonzero(rel)
    pos = np.argsort(perms, axis=1)  # pos[k, old] = new index
    natural = np.all(pos[:, ei] < pos[:, ej], axis=1)
    if not natural.any():
        return -1
    p = perms[natural]
    iu, ju = np.triu_indices(n, k=1)
    bits = rel[p[:, iu], p[:, ju]].astype(np.uint64)
    weights = np.left_shift(np.uint64(1), np.arange(len(iu), dtype=np.uint64))
    codes = (bits * weights).sum(axis=1)
    return int(codes.min())


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

try:  # pragma: no cover - exercised only when numba is present
    import numba
    from numba import njit

    @njit(cache=True)
    def _nb_pack_keys(bits, cols):
        w = bits.shape[0]
        k = cols.shape[0]
        nwords = max(1, (k + 63) // 64)
        out = np.zeros((w, nwords), dtype=np.uint64)
        for r in range(w):
            for j in range(k):
                if bits[r, cols[j]]:
                    out[r, j // 64] |= np.uint64(1) << np.uint64(j % 64)
        return out

    @njit(cache=True)
    def _nb_group_sums(ids, weights, n):
        out = np.zeros(n, dtype=np.float64)
        for i in range(ids.shape[0]):
            out[ids[i]] += weights[i]
        return out

    @njit(cache=True)
    def _nb_chsh_batch(joints):
        m = joints.shape[0]
        out = np.empty(m, dtype=np.float64)
        for k in range(m):
            s = 0.0
            for i in range(2):
                for j in range(2):
                    e = joints[k, i, j, 0, 0] + joints[k, i, j, 1, 1] - joints[k, i, j, 0, 1] - joints[k, i, j, 1, 0]
                    if i == 0 and j == 1:
                        s -= e
                    else:
                        s += e
            out[k] = s
        return out

    @njit(cache=True)
    def _nb_canonical_code(rel, perms):
        n = rel.shape[0]
        if n == 0:
            return 0
        best = -1
        for k in range(perms.shape[0]):
            ok = True
            for a in range(n):
                for b in range(a):
                    if rel[perms[k, a], perms[k, b]]:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            code = 0
            bit = 0
            for a in range(n):
                for b in range(a + 1, n):
                    if rel[perms[k, a], perms[k, b]]:
                        code |= 1 << bit
                    bit += 1
            if best < 0 or code < best:
                best = code
        return best

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


_NUMPY = SimpleNamespace(
    name="numpy",
    pack_keys=_np_pack_keys,
    group_sums=_np_group_sums,
    chsh_batch=_np_chsh_batch,
    canonical_code=_np_canonical_code,
)

if HAVE_NUMBA:
    _NUMBA = SimpleNamespace(
        name="numba",
        pack_keys=_nb_pack_keys,
        group_sums=_nb_group_sums,
        chsh_batch=_nb_chsh_batch,
        canonical_code=_nb_canonical_code,
    )
else:  # pragma: no cover
    _NUMBA = None


def available_backends() -> list[str]:
    return ["numpy"] + (["numba"] if HAVE_NUMBA else [])


def backend(name: str | None = None) -> SimpleNamespace:
    """Kernel namespace for ``name``; ``None`` means the configured default."""
    if name is None:
        flag = os.environ.get("CAUSALITY_LAB_NUMBA", "1").strip().lower()
        name = "numba" if HAVE_NUMBA and flag not in ("0", "false", "no", "off") else "numpy"
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return _NUMBA
    if name == "numpy":
        return _NUMPY
    raise ValueError(f"unknown kernel backend {name!r}")


def pack_keys(bits: np.ndarray, cols) -> np.ndarray:
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    return backend().pack_keys(np.ascontiguousarray(bits, dtype=np.uint8), cols)


def group_sums(ids: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    return backend().group_sums(
        np.ascontiguousarray(ids, dtype=np.int64), np.ascontiguousarray(weights, dtype=np.float64), int(n)
    )


def chsh_batch(joints: np.ndarray) -> np.ndarray:
    return backend().chsh_batch(np.ascontiguousarray(joints, dtype=np.float64))


def canonical_code(rel: np.ndarray, perms: np.ndarray) -> int:
    return int(
        backend().canonical_code(np.ascontiguousarray(rel, dtype=np.bool_), np.ascontiguousarray(perms, dtype=np.int64))
    )


def group_ids(keys: np.ndarray) -> tuple[np.ndarray, int]:
    """Dense group index per row of ``keys`` (rows equal <=> same index)."""
    if keys.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), 0
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1).astype(np.int64)
    return inv, int(inv.max()) + 1
