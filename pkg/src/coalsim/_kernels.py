"""Low-level numba kernels shared by the simulators.

Sites are encoded as int64 keys so the engine never touches Python objects:

* ``GK_ZD``    -- coordinates offset by ``ZD_OFFSET`` and packed 21 bits per axis (d <= 3).
* ``GK_TORUS`` -- mixed-radix index ``sum c_i L**i``.
* ``GK_CSR``   -- vertex id into a CSR adjacency (paths and custom graphs).

The merger mechanism travels as a tuple ``(atom, kind, alpha, lognorm, lam, lamc, cdf, off)``,
see :meth:`coalsim.mechanism.LambdaMeasure.kernel`.
"""

import math

import numpy as np
from numba import njit

GK_ZD = 0
GK_TORUS = 1
GK_CSR = 2

ZD_BITS = 21
ZD_OFFSET = 1 << 20
ZD_MASK = (1 << ZD_BITS) - 1

MK_NONE = 0
MK_BETA = 1
MK_TABLE = 2


@njit(cache=True, nogil=True)
def zd_coord(key, axis):
    return ((key >> (ZD_BITS * axis)) & ZD_MASK) - ZD_OFFSET


@njit(cache=True, nogil=True)
def graph_degree(gkind, gd, gL, indptr, key):
    if gkind == GK_ZD or gkind == GK_TORUS:
        return 2 * gd
    return indptr[key + 1] - indptr[key]


@njit(cache=True, nogil=True)
def graph_neighbor(gkind, gd, gL, indptr, indices, key, j):
    """The j-th neighbour of ``key`` (0 <= j < degree)."""
    if gkind == GK_ZD:
        axis = j // 2
        step = np.int64(1) << (ZD_BITS * axis)
        if j % 2 == 0:
            return key + step
        return key - step
    if gkind == GK_TORUS:
        axis = j // 2
        stride = np.int64(1)
        for _ in range(axis):
            stride *= gL
        c = (key // stride) % gL
        if j % 2 == 0:
            c2 = (c + 1) % gL
        else:
            c2 = (c - 1 + gL) % gL
        return key + (c2 - c) * stride
    return indices[indptr[key] + j]


@njit(cache=True, nogil=True)
def graph_random_neighbor(gkind, gd, gL, indptr, indices, key, rng):
    deg = graph_degree(gkind, gd, gL, indptr, key)
    j = rng.integers(0, deg)
    return graph_neighbor(gkind, gd, gL, indptr, indices, key, j)


@njit(cache=True, nogil=True)
def graph_dist(gkind, gd, gL, dist_arr, key):
    """Graph distance from the origin (l1 on lattices)."""
    if gkind == GK_ZD:
        s = 0
        for a in range(gd):
            s += abs(zd_coord(key, a))
        return s
    if gkind == GK_TORUS:
        s = 0
        k = key
        for a in range(gd):
            c = k % gL
            k //= gL
            s += min(c, gL - c)
        return s
    return dist_arr[key]


@njit(cache=True, nogil=True)
def graph_norm2(gkind, gd, gL, key):
    """Squared Euclidean norm of a lattice site (torus uses wrapped coordinates)."""
    s = 0.0
    if gkind == GK_ZD:
        for a in range(gd):
            c = zd_coord(key, a)
            s += c * c
        return s
    k = key
    for a in range(gd):
        c = k % gL
        k //= gL
        c = min(c, gL - c)
        s += c * c
    return s


# --- merger mechanism -------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def total_rate(mech, b):
    if b < 2:
        return 0.0
    return mech[4][b]


@njit(cache=True, nogil=True, inline="always")
def sample_k(mech, b, rng):
    """Merger size K in [2, b] with P(K = k) proportional to C(b,k) lambda_{b,k}."""
    atom, kind, alpha, lognorm, lam, lamc, cdf, off = mech
    if b <= 2:
        return 2
    pairs = 0.5 * b * (b - 1.0)
    if kind == MK_NONE:
        return 2
    if atom > 0.0:
        if rng.random() * lam[b] < atom * pairs:
            return 2
    v = rng.random()
    if kind == MK_BETA:
        l2 = math.exp(lognorm + math.lgamma(2.0 - alpha) + math.lgamma(b - 2.0 + alpha)
                      - math.lgamma(float(b)))
        p = pairs * l2 / lamc[b]
        k = 2
        cum = p
        while v >= cum and k < b:
            p *= (b - k) / (k + 1.0) * (k - alpha) / (b - k - 1.0 + alpha)
            k += 1
            cum += p
        return k
    # tabulated cumulative law for b <= table cap
    start = off[b]
    stop = off[b + 1]
    lo = start
    hi = stop - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if v < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return 2 + (lo - start)


# --- sum tree ----------------------------------------------------------------


@njit(cache=True, nogil=True)
def tree_set(tree, size, i, value):
    j = i + size
    tree[j] = value
    j >>= 1
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j >>= 1


@njit(cache=True, nogil=True)
def tree_find(tree, size, u):
    j = 1
    while j < size:
        left = tree[2 * j]
        if u < left:
            j = 2 * j
        else:
            u -= left
            j = 2 * j + 1
    return j - size


@njit(cache=True, nogil=True)
def tree_sample(tree, size, rng):
    while True:
        i = tree_find(tree, size, rng.random() * tree[1])
        if tree[i + size] > 0.0:
            return i
