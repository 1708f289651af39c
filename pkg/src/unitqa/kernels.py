"""Hot inner loops: nearest-centroid search, centroid accumulation, run
detection and the two edit-distance style dynamic programs.

Every kernel exists twice, a numba version (``*_nb``) and a vectorised numpy
version (``*_np``).  The public names are bound at import time according to
:data:`unitqa._jit.USE_NUMBA`; :data:`IMPLEMENTATIONS` exposes both sets for
tests and ``benchmarks/bench_kernels.py``.

All kernels take contiguous int64/float64 arrays.
"""

import numpy as np

from ._jit import USE_NUMBA, njit


# ---------------------------------------------------------------- k-means


@njit
def nearest_centroid_nb(x, centroids):
    n, d = x.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for i in range(n):
        arg = 0
        low = np.inf
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - centroids[j, t]
                acc += diff * diff
            # strict '<' keeps the lowest index on ties
            if acc < low:
                low = acc
                arg = j
        labels[i] = arg
        best[i] = low
    return labels, best


def nearest_centroid_np(x, centroids, chunk=2048):
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = x[start:start + chunk]
        dist = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        arg = np.argmin(dist, axis=1)
        labels[start:start + chunk] = arg
        best[start:start + chunk] = dist[np.arange(len(block)), arg]
    return labels, best


@njit
def centroid_sums_nb(x, labels, k):
    n, d = x.shape
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for t in range(d):
            sums[c, t] += x[i, t]
    return sums, counts


def centroid_sums_np(x, labels, k):
    sums = np.zeros((k, x.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


# ---------------------------------------------------------------- run-length


@njit
def rle_runs_nb(raw):
    n = raw.shape[0]
    units = np.empty(n, dtype=np.int64)
    durations = np.empty(n, dtype=np.int64)
    m = 0
    i = 0
    while i < n:
        j = i + 1
        while j < n and raw[j] == raw[i]:
            j += 1
        units[m] = raw[i]
        durations[m] = j - i
        m += 1
        i = j
    return units[:m].copy(), durations[:m].copy()


def rle_runs_np(raw):
    if raw.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    starts = np.flatnonzero(np.concatenate(([True], raw[1:] != raw[:-1])))
    ends = np.append(starts[1:], raw.shape[0])
    return raw[starts].astype(np.int64), (ends - starts).astype(np.int64)


# ---------------------------------------------------------------- DP kernels


@njit
def edit_distance_nb(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            v = prev[j - 1] + cost
            if prev[j] + 1 < v:
                v = prev[j] + 1
            if cur[j - 1] + 1 < v:
                v = cur[j - 1] + 1
            cur[j] = v
        prev, cur = cur, prev
    return int(prev[m])


def edit_distance_np(ref, hyp):
    m = hyp.shape[0]
    idx = np.arange(m + 1)
    prev = idx.copy()
    for i in range(1, ref.shape[0] + 1):
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        cand[1:] = np.minimum(prev[:-1] + (hyp != ref[i - 1]), prev[1:] + 1)
        # the left-neighbour (insertion) chain: row[j] = min_k cand[k] + (j - k)
        prev = np.minimum.accumulate(cand - idx) + idx
    return int(prev[m])


@njit
def lcs_length_nb(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        prev, cur = cur, prev
    return int(prev[m])


def lcs_length_np(a, b):
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        cand = np.zeros(m + 1, dtype=np.int64)
        cand[1:] = np.maximum(prev[1:], prev[:-1] + (b == a[i]))
        # rows are non-decreasing in j, so the left dependency is a running max
        prev = np.maximum.accumulate(cand)
    return int(prev[m])


IMPLEMENTATIONS = {
    "numba": {
        "nearest_centroid": nearest_centroid_nb,
        "centroid_sums": centroid_sums_nb,
        "rle_runs": rle_runs_nb,
        "edit_distance": edit_distance_nb,
        "lcs_length": lcs_length_nb,
    },
    "numpy": {
        "nearest_centroid": nearest_centroid_np,
        "centroid_sums": centroid_sums_np,
        "rle_runs": rle_runs_np,
        "edit_distance": edit_distance_np,
        "lcs_length": lcs_length_np,
    },
}

ACTIVE = "numba" if USE_NUMBA else "numpy"

nearest_centroid = IMPLEMENTATIONS[ACTIVE]["nearest_centroid"]
centroid_sums = IMPLEMENTATIONS[ACTIVE]["centroid_sums"]
rle_runs = IMPLEMENTATIONS[ACTIVE]["rle_runs"]
edit_distance = IMPLEMENTATIONS[ACTIVE]["edit_distance"]
lcs_length = IMPLEMENTATIONS[ACTIVE]["lcs_length"]
