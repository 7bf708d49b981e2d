"""Fast closed-loop replay of the explore-then-gate stream.

The Monte-Carlo harness has to run thousands of full gated streams, so
the per-sample loop is compiled with numba when available and falls
back to a vectorized numpy implementation otherwise.  Both paths are
kept bit-identical to ``ActiveSketch.process_increments`` driven by
``PairStream``: the gate for sample t reads the tables as of sample
t-1 for every item (decisions are made before any insertion of the
sample), scaling divides by T before the sign multiply, per-bucket
accumulation runs in ascending item order, and the median rule is the
same exact order statistic (mean of the two middles for even table
counts), so equivalence is testable with ``==`` on the raw tables.

The replay consumes a precomputed (T, d) matrix of centered feature
values; pair increments are formed on the fly as products of row
entries, which matches the dense covariance path of ``PairStream``.
Bucket/sign matrices are transposed to (items, tables) inside the
kernel so one item's table lookups share a cache line, and the
ubiquitous five-table case gets a branch-free median network; both are
load-order details that do not change any computed value.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised indirectly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, inline="always")
def _median5(v0, v1, v2, v3, v4):
    if v0 > v1:
        v0, v1 = v1, v0
    if v2 > v3:
        v2, v3 = v3, v2
    if v0 > v2:
        v0, v2 = v2, v0
    if v1 > v3:
        v1, v3 = v3, v1
    if v1 > v2:
        v1, v2 = v2, v1
    m = v2 if v2 < v4 else v4
    return m if m > v1 else v1


@njit(cache=True, inline="always")
def _median_generic(W, bt, st, item, buf):
    """Exact median of the signed table readings for one item.

    Partial selection sort with min/max moves (fixed trip counts) keeps
    the loop branch-predictable for arbitrary table counts.
    """
    k = W.shape[0]
    for e in range(k):
        buf[e] = W[e, bt[item, e]] * st[item, e]
    half = k // 2
    for a in range(half + 1):
        m = buf[a]
        for b in range(a + 1, k):
            v = buf[b]
            lo = m if m < v else v
            hi = v if m < v else m
            buf[b] = hi
            m = lo
        buf[a] = m
    if k % 2:
        return buf[half]
    return 0.5 * (buf[half - 1] + buf[half])


@njit(cache=True, inline="always")
def _estimate_one(W, bt, st, item, buf):
    k = W.shape[0]
    if k == 5:
        return _median5(
            W[0, bt[item, 0]] * st[item, 0],
            W[1, bt[item, 1]] * st[item, 1],
            W[2, bt[item, 2]] * st[item, 2],
            W[3, bt[item, 3]] * st[item, 3],
            W[4, bt[item, 4]] * st[item, 4],
        )
    if k == 1:
        return W[0, bt[item, 0]] * st[item, 0]
    return _median_generic(W, bt, st, item, buf)


@njit(cache=True)
def _window_jit(
    W,
    bt,
    st,
    dev,
    ia,
    ib,
    total,
    t_start,
    t_end,
    explore_end,
    tau0,
    theta,
    gate_abs,
    signal_mask,
    snr_sig,
    snr_noise,
    track_items,
    track_dip,
):
    k = W.shape[0]
    p = ia.shape[0]
    buf = np.empty(k, dtype=np.float64)
    keep = np.empty(p, dtype=np.uint8)
    want_snr = snr_sig.shape[0] > 0
    n_track = track_items.shape[0]
    for t in range(t_start, t_end + 1):
        row = dev[t - 1]
        if t <= explore_end:
            for i in range(p):
                keep[i] = 1
        else:
            # the gate reads the state as of sample t-1, so every decision
            # is made before any insertion of this sample touches the tables
            tau = tau0 + theta / total * ((t - 1) - explore_end)
            if k == 5:  # default geometry; branch-free median network
                for i in range(p):
                    est = _median5(
                        W[0, bt[i, 0]] * st[i, 0],
                        W[1, bt[i, 1]] * st[i, 1],
                        W[2, bt[i, 2]] * st[i, 2],
                        W[3, bt[i, 3]] * st[i, 3],
                        W[4, bt[i, 4]] * st[i, 4],
                    )
                    g = abs(est) if gate_abs else est
                    keep[i] = 1 if g >= tau else 0
            elif k == 1:
                for i in range(p):
                    est = W[0, bt[i, 0]] * st[i, 0]
                    g = abs(est) if gate_abs else est
                    keep[i] = 1 if g >= tau else 0
            else:
                for i in range(p):
                    est = _median_generic(W, bt, st, i, buf)
                    g = abs(est) if gate_abs else est
                    keep[i] = 1 if g >= tau else 0
        if want_snr:
            for i in range(p):
                if keep[i]:
                    x = row[ia[i]] * row[ib[i]]
                    xs = x / total
                    for e in range(k):
                        W[e, bt[i, e]] += xs * st[i, e]
                    if signal_mask[i]:
                        snr_sig[t - 1] += x * x
                    else:
                        snr_noise[t - 1] += x * x
        else:
            for i in range(p):
                if keep[i]:
                    xs = (row[ia[i]] * row[ib[i]]) / total
                    for e in range(k):
                        W[e, bt[i, e]] += xs * st[i, e]
        if n_track > 0 and t > explore_end:
            tau_now = tau0 + theta / total * (t - explore_end)
            for j in range(n_track):
                est = _estimate_one(W, bt, st, track_items[j], buf)
                if abs(est) <= tau_now:
                    track_dip[j] = True


def _window_numpy(
    W,
    bt,
    st,
    dev,
    ia,
    ib,
    total,
    t_start,
    t_end,
    explore_end,
    tau0,
    theta,
    gate_abs,
    signal_mask,
    snr_sig,
    snr_noise,
    track_items,
    track_dip,
):
    from .sketch import _median_over_tables

    buckets = bt.T
    signs = st.T
    k = W.shape[0]
    rows = np.arange(k)[:, None]
    want_snr = snr_sig.shape[0] > 0
    for t in range(t_start, t_end + 1):
        row = dev[t - 1]
        x = row[ia] * row[ib]
        if t <= explore_end:
            idx = np.arange(len(x))
        else:
            tau = tau0 + theta / total * ((t - 1) - explore_end)
            est = _median_over_tables(W[rows, buckets] * signs)
            gate = np.abs(est) if gate_abs else est
            idx = np.nonzero(gate >= tau)[0]
        if len(idx):
            xs = x[idx] / total
            for e in range(k):
                np.add.at(W, (e, buckets[e, idx]), xs * signs[e, idx])
            if want_snr:
                sig = signal_mask[idx] != 0
                snr_sig[t - 1] += float(np.sum(x[idx][sig] ** 2))
                snr_noise[t - 1] += float(np.sum(x[idx][~sig] ** 2))
        if len(track_items) and t > explore_end:
            tau_now = tau0 + theta / total * (t - explore_end)
            vals = W[rows, buckets[:, track_items]] * signs[:, track_items]
            track_dip |= np.abs(_median_over_tables(vals)) <= tau_now


_EMPTY_F8 = np.empty(0, dtype=np.float64)
_EMPTY_I8 = np.empty(0, dtype=np.int64)
_EMPTY_B = np.empty(0, dtype=np.bool_)
_EMPTY_U1 = np.empty(0, dtype=np.uint8)


def replay_window(
    W: np.ndarray,
    buckets: np.ndarray,
    signs: np.ndarray,
    dev: np.ndarray,
    ia: np.ndarray,
    ib: np.ndarray,
    total: int,
    t_start: int,
    t_end: int,
    explore_end: int,
    tau0: float = 0.0,
    theta: float = 0.0,
    gate_abs: bool = True,
    signal_mask: np.ndarray | None = None,
    snr_sig: np.ndarray | None = None,
    snr_noise: np.ndarray | None = None,
    track_items: np.ndarray | None = None,
    track_dip: np.ndarray | None = None,
    use_numba: bool = True,
) -> None:
    """Run samples t_start..t_end (1-based, inclusive) of the gated loop.

    Mutates ``W`` in place.  ``buckets``/``signs`` are the (K, p) matrices
    from ``HashFamily``.  Optional outputs: per-step inserted signal and
    noise squared mass (``snr_sig``/``snr_noise``, length T, indexed t-1,
    requires ``signal_mask``) and dip tracking for ``track_items``
    (``track_dip[j]`` set once |estimate| <= tau(t) after a sample of the
    window's sampling phase).
    """
    if t_start > t_end:
        return
    sig_mask = _EMPTY_U1 if signal_mask is None else signal_mask.astype(np.uint8)
    s_sig = _EMPTY_F8 if snr_sig is None else snr_sig
    s_noise = _EMPTY_F8 if snr_noise is None else snr_noise
    tr_items = (
        _EMPTY_I8 if track_items is None else np.asarray(track_items, dtype=np.int64)
    )
    tr_dip = _EMPTY_B if track_dip is None else track_dip
    if (s_sig.shape[0] > 0) and sig_mask.shape[0] != ia.shape[0]:
        raise ValueError("signal_mask must cover every pair when SNR is tracked")
    fn = _window_jit if (_HAVE_NUMBA and use_numba) else _window_numpy
    fn(
        W,
        np.ascontiguousarray(np.asarray(buckets, dtype=np.int64).T),
        np.ascontiguousarray(np.asarray(signs, dtype=np.float64).T),
        dev,
        np.ascontiguousarray(ia, dtype=np.int64),
        np.ascontiguousarray(ib, dtype=np.int64),
        float(total),
        int(t_start),
        int(t_end),
        int(explore_end),
        float(tau0),
        float(theta),
        bool(gate_abs),
        sig_mask,
        s_sig,
        s_noise,
        tr_items,
        tr_dip,
    )


def estimates_from(
    W: np.ndarray, buckets: np.ndarray, signs: np.ndarray, items: np.ndarray
) -> np.ndarray:
    """Median-of-tables estimates straight from raw replay arrays."""
    from .sketch import _median_over_tables

    rows = np.arange(W.shape[0])[:, None]
    return _median_over_tables(W[rows, buckets[:, items]] * signs[:, items])


def centered_stream(samples: np.ndarray) -> np.ndarray:
    """Running-mean-centered copy of a (T, d) sample block.

    Row t is samples[t] minus the mean of samples[0..t], i.e. exactly the
    deviations the dense covariance path of ``PairStream`` multiplies
    (update-then-emit ordering, same float operation sequence).
    """
    samples = np.asarray(samples, dtype=np.float64)
    out = np.empty_like(samples)
    mean = np.zeros(samples.shape[1])
    for t in range(samples.shape[0]):
        delta = samples[t] - mean
        mean += delta / (t + 1)
        out[t] = samples[t] - mean
    return out
