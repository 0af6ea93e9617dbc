"""Pure-numpy twin of the compiled kernels in ``_core.pyx``.

Same arguments, same in-place semantics, same sweep order; used when the
extension is not built or ``TENSORLASSO_PURE=1`` is set.
"""
import numpy as np


def _row_kkt(z, r, thr):
    nz = np.sqrt(z @ z)
    if nz > 0.0:
        t = -r + thr * z / nz
        return float(np.sqrt(t @ t))
    return max(float(np.sqrt(r @ r)) - thr, 0.0)


def kkt(Z, R, w, lam):
    Z = np.asarray(Z)
    R = np.asarray(R)
    nz = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    thr = lam * np.asarray(w)
    on = nz > 0
    out = np.maximum(np.sqrt(np.einsum("ij,ij->i", R, R)) - thr, 0.0)
    if on.any():
        t = -R[on] + (thr[on] / nz[on])[:, None] * Z[on]
        out[on] = np.sqrt(np.einsum("ij,ij->i", t, t))
    return float(out.max()) if len(out) else 0.0


def _update_row(H, Z, R, w, lam, i):
    hii = H[i, i]
    if hii <= 0.0:
        return 0.0
    g = R[i] + hii * Z[i]
    ng = np.sqrt(g @ g)
    thr = lam * w[i]
    scale = 0.0 if ng <= thr else (1.0 - thr / ng) / hii
    delta = scale * g - Z[i]
    change = np.abs(delta).max()
    if change == 0.0:
        return 0.0
    Z[i] += delta
    R -= np.outer(H[i], delta)
    return change


def _objective(C, Z, R, w, lam):
    return -0.5 * float(np.sum(Z * (C + R))) + lam * float(w @ np.sqrt(np.einsum("ij,ij->i", Z, Z)))


def group_bcd(H, C, Z, R, w, lam, max_sweeps, tol, trace):
    k = Z.shape[0]
    sweeps = 0
    converged = False
    res = 0.0
    n_trace = len(trace)
    while sweeps < max_sweeps:
        for i in range(k):
            _update_row(H, Z, R, w, lam, i)
        if sweeps < n_trace:
            trace[sweeps] = _objective(C, Z, R, w, lam)
        sweeps += 1
        res = kkt(Z, R, w, lam)
        if res <= tol:
            converged = True
            break
        active = np.flatnonzero(np.einsum("ij,ij->i", Z, Z) > 0.0)
        while sweeps < max_sweeps and len(active):
            for i in active:
                _update_row(H, Z, R, w, lam, i)
            if sweeps < n_trace:
                trace[sweeps] = _objective(C, Z, R, w, lam)
            sweeps += 1
            act = max(_row_kkt(Z[i], R[i], lam * w[i]) for i in active)
            if act <= 0.5 * tol:
                break
    if not converged:
        res = kkt(Z, R, w, lam)
    return sweeps, converged, res
