"""Hot loops: the log-domain forward-backward recursion and sum-product decoding.

Every kernel has two implementations with the same arithmetic: an ``_nb``
version compiled with numba and a ``_np`` version written with numpy
vectorization. ``BACKEND`` selects which one the public wrappers call; it is
``"numba"`` unless numba is missing or ``MMNOISE_DISABLE_NUMBA`` is set.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit
from .errors import NumericError

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# Identity element for the box-plus operator; large enough that
# boxplus(a, BOXPLUS_ID) == a exactly for any realistic message.
BOXPLUS_ID = 1e30


def set_backend(name):
    """Switch kernels at runtime (tests and benchmarks)."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is disabled or not installed")
    BACKEND = name


# --------------------------------------------------------------------------
# forward-backward over a finite-state chain


@njit(cache=True, nogil=True)
def _fb_one_nb(log_emit, P, log_init, lpred, lbeta, w, tmp):
    # Messages are kept as normalized logs. Each log-sum-exp over the
    # previous states is factored as mx + log(sum_t exp(x_t - mx) * P[t, s]),
    # so a step costs M exps and M logs instead of M*M exps.
    n, M = log_emit.shape
    ninf = -np.inf
    for s in range(M):
        lpred[0, s] = log_init[s]
    for k in range(n):
        if k:
            for s in range(M):
                acc = 0.0
                for t in range(M):
                    acc += w[t] * P[t, s]
                lpred[k, s] = np.log(acc) if acc > 0.0 else ninf
        mx = ninf
        for s in range(M):
            tmp[s] = lpred[k, s] + log_emit[k, s]
            if tmp[s] > mx:
                mx = tmp[s]
        if not mx > ninf:
            return k
        acc = 0.0
        for s in range(M):
            w[s] = np.exp(tmp[s] - mx)
            acc += w[s]
        for s in range(M):
            w[s] /= acc

    for s in range(M):
        lbeta[n - 1, s] = 0.0
    for k in range(n - 2, -1, -1):
        mx = ninf
        for t in range(M):
            tmp[t] = log_emit[k + 1, t] + lbeta[k + 1, t]
            if tmp[t] > mx:
                mx = tmp[t]
        if not mx > ninf:
            return k
        for t in range(M):
            w[t] = np.exp(tmp[t] - mx)
        tot = 0.0
        for s in range(M):
            acc = 0.0
            for t in range(M):
                acc += P[s, t] * w[t]
            tmp[s] = acc
            tot += acc
        if not tot > 0.0:
            return k
        for s in range(M):
            lbeta[k, s] = np.log(tmp[s] / tot) if tmp[s] > 0.0 else ninf
    return -1


@njit(cache=True, nogil=True)
def _forward_backward_nb(log_emit, P, log_init):
    B, n, M = log_emit.shape
    lpred = np.empty((B, n, M))
    lbeta = np.empty((B, n, M))
    w = np.empty(M)
    tmp = np.empty(M)
    for b in range(B):
        bad = _fb_one_nb(log_emit[b], P, log_init, lpred[b], lbeta[b], w, tmp)
        if bad >= 0:
            return lpred, lbeta, b, bad
    return lpred, lbeta, -1, -1


def _forward_backward_np(log_emit, P, log_init):
    # loops over time only; batch and state axes are vectorized
    B, n, M = log_emit.shape
    lpred = np.empty((B, n, M))
    lbeta = np.empty((B, n, M))
    lpred[:, 0] = log_init
    w = None
    for k in range(n):
        if k:
            with np.errstate(divide="ignore"):
                lpred[:, k] = np.log(w @ P)
        x = lpred[:, k] + log_emit[:, k]
        mx = x.max(axis=1)
        bad = ~(mx > -np.inf)
        if bad.any():
            return lpred, lbeta, int(np.flatnonzero(bad)[0]), k
        w = np.exp(x - mx[:, None])
        w /= w.sum(axis=1, keepdims=True)
    lbeta[:, n - 1] = 0.0
    PT = np.ascontiguousarray(P.T)
    for k in range(n - 2, -1, -1):
        x = log_emit[:, k + 1] + lbeta[:, k + 1]
        mx = x.max(axis=1)
        bad = ~(mx > -np.inf)
        if bad.any():
            return lpred, lbeta, int(np.flatnonzero(bad)[0]), k
        v = np.exp(x - mx[:, None]) @ PT
        tot = v.sum(axis=1)
        bad = ~(tot > 0)
        if bad.any():
            return lpred, lbeta, int(np.flatnonzero(bad)[0]), k
        with np.errstate(divide="ignore"):
            lbeta[:, k] = np.log(v / tot[:, None])
    return lpred, lbeta, -1, -1


def forward_backward(log_emit, log_P, log_init):
    """Normalized forward predictions and backward messages in the log domain.

    Parameters
    ----------
    log_emit : ndarray, shape (n, M) or (B, n, M)
        Log emission likelihood of each observation under each state. A
        leading batch axis holds independent sequences of equal length.
    log_P : ndarray, shape (M, M)
        Log transition matrix, rows indexed by the source state.
    log_init : ndarray, shape (M,)
        Log distribution of the first state.

    Returns
    -------
    log_pred : ndarray
        ``log P(s_k | y_0..y_{k-1})``, same shape as ``log_emit``.
    log_beta : ndarray
        ``log P(y_{k+1}..y_{n-1} | s_k)`` up to a per-step constant.

    The a-posteriori state marginal at ``k`` is proportional to
    ``exp(log_pred + log_emit + log_beta)``.
    """
    log_emit = np.asarray(log_emit, dtype=np.float64)
    squeeze = log_emit.ndim == 2
    if squeeze:
        log_emit = log_emit[None]
    log_emit = np.ascontiguousarray(log_emit)
    P = np.ascontiguousarray(np.exp(np.asarray(log_P, dtype=np.float64)))
    log_init = np.ascontiguousarray(log_init, dtype=np.float64)
    if log_emit.shape[1] == 0:
        out = np.empty_like(log_emit)
        return (out[0], out[0].copy()) if squeeze else (out, out.copy())
    fn = _forward_backward_nb if BACKEND == "numba" else _forward_backward_np
    lpred, lbeta, bad_b, bad_k = fn(log_emit, P, log_init)
    if bad_b >= 0:
        raise NumericError(
            f"observation sequence {bad_b} has zero likelihood at step {bad_k}"
        )
    if squeeze:
        return lpred[0], lbeta[0]
    return lpred, lbeta


def state_posteriors(log_emit, log_P, log_init):
    """Posterior state probabilities, same shape as ``log_emit``."""
    lpred, lbeta = forward_backward(log_emit, log_P, log_init)
    lg = lpred + log_emit + lbeta
    lg -= lg.max(axis=-1, keepdims=True)
    g = np.exp(lg)
    g /= g.sum(axis=-1, keepdims=True)
    return g


# --------------------------------------------------------------------------
# sum-product decoding on a Tanner graph
#
# Edges are stored grouped by check: edges chk_ptr[c]:chk_ptr[c+1] belong to
# check c and edge e touches variable edge_var[e].


@njit(cache=True, nogil=True)
def _boxplus_nb(a, b):
    return (
        np.sign(a) * np.sign(b) * min(abs(a), abs(b))
        + np.log1p(np.exp(-abs(a + b)))
        - np.log1p(np.exp(-abs(a - b)))
    )


@njit(cache=True, nogil=True)
def _syndrome_ok_nb(hard, chk_ptr, edge_var):
    m = chk_ptr.size - 1
    for c in range(m):
        par = 0
        for e in range(chk_ptr[c], chk_ptr[c + 1]):
            par ^= hard[edge_var[e]]
        if par:
            return False
    return True


@njit(cache=True, nogil=True)
def _bp_decode_nb(llr, chk_ptr, edge_var, max_iters):
    n = llr.size
    m = chk_ptr.size - 1
    E = edge_var.size
    dmax = 0
    for c in range(m):
        d = chk_ptr[c + 1] - chk_ptr[c]
        if d > dmax:
            dmax = d
    pre = np.empty(dmax + 1)
    suf = np.empty(dmax + 1)
    q = np.empty(E)
    rmsg = np.zeros(E)
    total = llr.copy()
    hard = np.empty(n, dtype=np.uint8)
    for v in range(n):
        hard[v] = 1 if total[v] < 0 else 0
    if _syndrome_ok_nb(hard, chk_ptr, edge_var):
        return total, 0, True
    for e in range(E):
        q[e] = llr[edge_var[e]]

    for it in range(1, max_iters + 1):
        for c in range(m):
            a = chk_ptr[c]
            d = chk_ptr[c + 1] - a
            # pre[i] combines q[a..a+i-1]; suf[i] combines q[a+i..a+d-1]
            pre[0] = BOXPLUS_ID
            for i in range(d):
                pre[i + 1] = _boxplus_nb(pre[i], q[a + i]) if i else q[a]
            suf[d] = BOXPLUS_ID
            for i in range(d - 1, -1, -1):
                suf[i] = _boxplus_nb(q[a + i], suf[i + 1]) if i < d - 1 else q[a + i]
            for i in range(d):
                rmsg[a + i] = _boxplus_nb(pre[i], suf[i + 1])
        for v in range(n):
            total[v] = llr[v]
        for e in range(E):
            total[edge_var[e]] += rmsg[e]
        for e in range(E):
            q[e] = total[edge_var[e]] - rmsg[e]
        for v in range(n):
            hard[v] = 1 if total[v] < 0 else 0
        if _syndrome_ok_nb(hard, chk_ptr, edge_var):
            return total, it, True
    return total, max_iters, False


def _boxplus_np(a, b):
    return (
        np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
        + np.log1p(np.exp(-np.abs(a + b)))
        - np.log1p(np.exp(-np.abs(a - b)))
    )


class _PaddedChecks:
    """Check-major padded edge table used by the numpy decoder."""

    def __init__(self, chk_ptr, edge_var, n):
        m = chk_ptr.size - 1
        deg = np.diff(chk_ptr)
        dmax = int(deg.max()) if m else 0
        cols = np.arange(dmax)
        self.valid = cols[None, :] < deg[:, None]
        self.edge = np.where(self.valid, chk_ptr[:-1, None] + cols[None, :], 0)
        self.deg = deg
        self.edge_var = edge_var
        self.n = n
        self.chk_of_edge = np.repeat(np.arange(m), deg)
        self.m = m

    def syndrome_ok(self, hard):
        par = np.bincount(self.chk_of_edge, weights=hard[self.edge_var], minlength=self.m)
        return not np.any(par.astype(np.int64) & 1)


def _bp_decode_np(llr, chk_ptr, edge_var, max_iters, table=None):
    n = llr.size
    t = table if table is not None else _PaddedChecks(chk_ptr, edge_var, n)
    total = llr.copy()
    hard = (total < 0).astype(np.uint8)
    if t.syndrome_ok(hard):
        return total, 0, True
    E = edge_var.size
    q = llr[edge_var]
    rmsg = np.zeros(E)
    m, dmax = t.edge.shape
    rows = np.arange(m)
    for it in range(1, max_iters + 1):
        Q = np.where(t.valid, q[t.edge], BOXPLUS_ID)
        pre = np.empty((m, dmax + 1))
        suf = np.empty((m, dmax + 1))
        pre[:, 0] = BOXPLUS_ID
        pre[:, 1] = Q[:, 0]
        for i in range(1, dmax):
            pre[:, i + 1] = _boxplus_np(pre[:, i], Q[:, i])
        # suffix scans start at each row's own last edge so that padding
        # never enters a combination
        suf[:] = BOXPLUS_ID
        last = t.deg - 1
        suf[rows, last] = Q[rows, last]
        for i in range(dmax - 2, -1, -1):
            upd = i < last
            suf[upd, i] = _boxplus_np(Q[upd, i], suf[upd, i + 1])
        R = _boxplus_np(pre[:, :dmax], suf[:, 1:])
        rmsg = R[t.valid]
        total = llr + np.bincount(edge_var, weights=rmsg, minlength=n)
        q = total[edge_var] - rmsg
        hard = (total < 0).astype(np.uint8)
        if t.syndrome_ok(hard):
            return total, it, True
    return total, max_iters, False


def bp_decode(llr, chk_ptr, edge_var, max_iters, table=None):
    """Flooding sum-product decoding with exact pairwise box-plus.

    Returns ``(posterior_llr, iterations, converged)``. Zero iterations means
    the channel hard decisions already satisfied every check.
    """
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    if BACKEND == "numba":
        return _bp_decode_nb(llr, chk_ptr, edge_var, int(max_iters))
    return _bp_decode_np(llr, chk_ptr, edge_var, int(max_iters), table)
