"""Pure-Python/numpy implementations of the compiled kernels.

Results are bit-identical to ``_kernels``; the tests check this.
"""

import math

import numpy as np


def correlate(a, b, lo, bin_ticks, nbins):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    hist = np.zeros(nbins, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return hist
    clo = math.ceil(lo)
    chi = math.floor(lo + nbins * bin_ticks)
    start = np.searchsorted(b, a + clo, side="left")
    stop = np.searchsorted(b, a + chi, side="right")
    counts = stop - start
    active = np.flatnonzero(counts > 0)
    k = 0
    # vectorise over the k-th partner of every a[i] instead of over i
    while active.size:
        d = b[start[active] + k] - a[active]
        idx = np.floor((d.astype(np.float64) - lo) / bin_ticks).astype(np.int64)
        ok = (idx >= 0) & (idx < nbins)
        hist += np.bincount(idx[ok], minlength=nbins)
        k += 1
        active = active[counts[active] > k]
    return hist


def dead_time_mask(t, dead):
    t = np.ascontiguousarray(t, dtype=np.float64)
    n = len(t)
    keep = np.ones(n, dtype=bool)
    if n < 2:
        return keep
    # an event at least `dead` after its predecessor is always kept, so only
    # the close ones need the sequential pass
    close = np.flatnonzero(np.diff(t) < dead) + 1
    if close.size == 0:
        return keep
    is_close = np.zeros(n, dtype=bool)
    is_close[close] = True
    last = t[0]
    for i in close.tolist():
        if not is_close[i - 1]:
            last = t[i - 1]
        if t[i] - last >= dead:
            last = t[i]
        else:
            keep[i] = False
    return keep
