"""Hot inner loops: pair-window histogramming and detector dead time.

Two backends are provided for each kernel: a numba ``@njit`` version and a
pure-numpy implementation. Selection happens once at import time:

* default: numba kernels (JIT-compiled, cached on disk)
* ``QFCLAB_DISABLE_NUMBA=1`` in the environment, or numba missing: numpy path

``backend_name()`` reports which one is active; ``benchmarks/bench_correlator.py``
times both on identical inputs.
"""

import os

import numpy as np

_DISABLE = os.environ.get("QFCLAB_DISABLE_NUMBA", "").strip() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError("numba disabled by QFCLAB_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def _pair_hist_py(a, b, tau_min, tau_max, bin_width, exclude_self):
    """Numpy fallback: windowed pair histogram via searchsorted + ragged gather.

    Counts ordered pairs (i, j) with tau = b[j] - a[i] in [tau_min, tau_max),
    binned as (tau - tau_min) // bin_width. When exclude_self is set, a and b
    must be the same array and pairs with i == j are skipped.
    """
    nbins = int((tau_max - tau_min) // bin_width)
    counts = np.zeros(nbins, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return counts
    chunk = 1_000_000
    for start in range(0, len(a), chunk):
        aa = a[start:start + chunk]
        lo = np.searchsorted(b, aa + tau_min, side="left")
        hi = np.searchsorted(b, aa + tau_max, side="left")
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        # flat indices of all matching b entries for every a in this chunk
        rep = np.repeat(np.arange(len(aa)), n)
        offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        j = np.repeat(lo, n) + offs
        tau = b[j] - aa[rep]
        if exclude_self:
            keep = j != (rep + start)
            tau = tau[keep]
        bins = (tau - tau_min) // bin_width
        counts += np.bincount(bins, minlength=nbins).astype(np.int64)
    return counts


def _dead_time_py(tags, dead_ps):
    """Numpy fallback for non-paralyzable dead time (sequential by nature)."""
    keep = np.ones(len(tags), dtype=np.bool_)
    last = -dead_ps - 1
    lst = tags.tolist()
    for i, t in enumerate(lst):
        if t - last >= dead_ps:
            last = t
        else:
            keep[i] = False
    return keep


if HAVE_NUMBA:

    @njit(cache=True)
    def _pair_hist_nb(a, b, tau_min, tau_max, bin_width, exclude_self):
        nbins = (tau_max - tau_min) // bin_width
        counts = np.zeros(nbins, dtype=np.int64)
        na = len(a)
        nb = len(b)
        lo = 0
        hi = 0
        for i in range(na):
            wmin = a[i] + tau_min
            wmax = a[i] + tau_max
            while lo < nb and b[lo] < wmin:
                lo += 1
            if hi < lo:
                hi = lo
            while hi < nb and b[hi] < wmax:
                hi += 1
            for j in range(lo, hi):
                if exclude_self and j == i:
                    continue
                counts[(b[j] - wmin) // bin_width] += 1
        return counts

    @njit(cache=True)
    def _dead_time_nb(tags, dead_ps):
        keep = np.ones(len(tags), dtype=np.bool_)
        last = -dead_ps - 1
        for i in range(len(tags)):
            if tags[i] - last >= dead_ps:
                last = tags[i]
            else:
                keep[i] = False
        return keep

    def pair_histogram(a, b, tau_min, tau_max, bin_width, exclude_self=False):
        return _pair_hist_nb(a, b, np.int64(tau_min), np.int64(tau_max),
                             np.int64(bin_width), exclude_self)

    def dead_time_mask(tags, dead_ps):
        return _dead_time_nb(tags, np.int64(dead_ps))

else:

    def pair_histogram(a, b, tau_min, tau_max, bin_width, exclude_self=False):
        return _pair_hist_py(a, b, np.int64(tau_min), np.int64(tau_max),
                             np.int64(bin_width), exclude_self)

    def dead_time_mask(tags, dead_ps):
        return _dead_time_py(tags, np.int64(dead_ps))


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
