"""Gated recurrent layers with explicit forward/backward passes.

All math is float64. Each forward returns a cache holding exactly what its
backward needs; backward functions return gradients in the same shapes as
their inputs. The GRU follows the common two-bias convention:

    r = sigmoid(x Wi_r + bi_r + h Wh_r + bh_r)
    z = sigmoid(x Wi_z + bi_z + h Wh_z + bh_z)
    n = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))
    h' = (1 - z) * n + z * h

An optional boolean row mask freezes finished sequences: masked rows pass
their hidden state through unchanged (and contribute no weight gradient).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid

try:  # fused gate kernels; plain numpy below stays the reference path
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _fwd_gates(gi, gh, h, r_out, z_out, n_out, ghn_out, hprev_out):
        k, H = h.shape
        for i in range(k):
            for j in range(H):
                r = 1.0 / (1.0 + np.exp(-(gi[i, j] + gh[i, j])))
                z = 1.0 / (1.0 + np.exp(-(gi[i, H + j] + gh[i, H + j])))
                ghn = gh[i, 2 * H + j]
                n = np.tanh(gi[i, 2 * H + j] + r * ghn)
                hp = h[i, j]
                r_out[i, j] = r
                z_out[i, j] = z
                n_out[i, j] = n
                ghn_out[i, j] = ghn
                hprev_out[i, j] = hp
                h[i, j] = (1.0 - z) * n + z * hp

    @numba.njit(cache=True)
    def _bwd_gates(dh, r, z, n, ghn, hprev, dgi, dgh, dh_out):
        k, H = dh.shape
        for i in range(k):
            for j in range(H):
                dcand = dh[i, j]
                rv = r[i, j]
                zv = z[i, j]
                nv = n[i, j]
                dn_pre = dcand * (1.0 - zv) * (1.0 - nv * nv)
                dr = dn_pre * ghn[i, j]
                dz_pre = dcand * (hprev[i, j] - nv) * zv * (1.0 - zv)
                dr_pre = dr * rv * (1.0 - rv)
                dgi[i, j] = dr_pre
                dgi[i, H + j] = dz_pre
                dgi[i, 2 * H + j] = dn_pre
                dgh[i, j] = dr_pre
                dgh[i, H + j] = dz_pre
                dgh[i, 2 * H + j] = dn_pre * rv
                dh_out[i, j] = dcand * zv


def gru_step_forward(x, h, Wi, Wh, bi, bh, mask=None):
    """One GRU step over a batch. ``mask`` is a (B,) bool array of active rows."""
    H = h.shape[1]
    gi = x @ Wi + bi
    gh = h @ Wh + bh
    r = sigmoid(gi[:, :H] + gh[:, :H])
    z = sigmoid(gi[:, H : 2 * H] + gh[:, H : 2 * H])
    ghn = gh[:, 2 * H :]
    n = np.tanh(gi[:, 2 * H :] + r * ghn)
    h_candidate = (1.0 - z) * n + z * h
    if mask is None:
        h_new = h_candidate
    else:
        h_new = np.where(mask[:, None], h_candidate, h)
    cache = (x, h, r, z, n, ghn, mask, Wi, Wh)
    return h_new, cache


def gru_step_backward(dh_new, cache):
    x, h, r, z, n, ghn, mask, Wi, Wh = cache
    H = h.shape[1]
    if mask is None:
        dcand = dh_new
        dh = np.zeros_like(h)
    else:
        m = mask[:, None]
        dcand = np.where(m, dh_new, 0.0)
        dh = np.where(m, 0.0, dh_new)

    dz = dcand * (h - n)
    dn = dcand * (1.0 - z)
    dh += dcand * z

    dn_pre = dn * (1.0 - n * n)
    dr = dn_pre * ghn
    dghn = dn_pre * r
    dz_pre = dz * z * (1.0 - z)
    dr_pre = dr * r * (1.0 - r)

    dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    dgh = np.concatenate([dr_pre, dz_pre, dghn], axis=1)

    dx = dgi @ Wi.T
    dh += dgh @ Wh.T
    dWi = x.T @ dgi
    dWh = h.T @ dgh
    dbi = dgi.sum(axis=0)
    dbh = dgh.sum(axis=0)
    return dx, dh, dWi, dWh, dbi, dbh


def gru_sequence_forward(X, lengths, Wi, Wh, bi, bh):
    """Full-sequence GRU over rows sorted by length (descending).

    ``X`` is time-major (T, U, in) with rows ordered so that the set of
    still-active rows at any timestep is a prefix. Input projections are
    batched into a single matmul; the sequential loop touches only active
    rows and writes into preallocated caches in place. Returns (final
    hidden (U, H), per-step outputs (T, U, H) zero past each row's length,
    cache).
    """
    T, U, _ = X.shape
    H = Wh.shape[0]
    active = (np.arange(T)[:, None] < lengths[None, :]).sum(axis=1)  # k_t per step
    Gi = X.reshape(T * U, -1) @ Wi
    Gi += bi
    Gi = Gi.reshape(T, U, 3 * H)
    h = np.zeros((U, H))
    outs = np.zeros((T, U, H))
    R = np.zeros((T, U, H))
    Z = np.zeros((T, U, H))
    N = np.zeros((T, U, H))
    GHN = np.zeros((T, U, H))
    Hprev = np.zeros((T, U, H))
    gh = np.empty((U, 3 * H))
    hbuf = np.empty((U, H))
    for t in range(T):
        k = int(active[t])
        if k == 0:
            break
        hk = h[:k]
        np.dot(hk, Wh, out=gh[:k])
        gh[:k] += bh
        gi = Gi[t, :k]
        if _HAVE_NUMBA:
            _fwd_gates(gi, gh[:k], hk, R[t, :k], Z[t, :k], N[t, :k], GHN[t, :k], Hprev[t, :k])
        else:
            r = R[t, :k]
            np.add(gi[:, :H], gh[:k, :H], out=r)
            sigmoid(r, out=r)
            z = Z[t, :k]
            np.add(gi[:, H : 2 * H], gh[:k, H : 2 * H], out=z)
            sigmoid(z, out=z)
            ghn = GHN[t, :k]
            ghn[:] = gh[:k, 2 * H :]
            n = N[t, :k]
            np.multiply(r, ghn, out=n)
            n += gi[:, 2 * H :]
            np.tanh(n, out=n)
            Hprev[t, :k] = hk
            # h' = n + z * (h - n)
            np.subtract(hk, n, out=hbuf[:k])
            hbuf[:k] *= z
            hbuf[:k] += n
            h[:k] = hbuf[:k]
        outs[t, :k] = h[:k]
    cache = (X, active, R, Z, N, GHN, Hprev, Wi, Wh)
    return h.copy(), outs, cache


def gru_sequence_backward(dfinal, dout, cache):
    """Backward for :func:`gru_sequence_forward`.

    ``dfinal`` (U, H) is the gradient w.r.t. each row's final hidden state
    (injected at that row's last active step); ``dout`` (T, U, H) or None
    is the gradient w.r.t. the per-step outputs. Returns (dX, dWi, dWh,
    dbi, dbh) with dX time-major like X.
    """
    X, active, R, Z, N, GHN, Hprev, Wi, Wh = cache
    T, U, _ = X.shape
    H = Wh.shape[0]
    dGi = np.zeros((T, U, 3 * H))
    dGh = np.zeros((T, U, 3 * H))
    dh = np.zeros((U, H))
    t1 = np.empty((U, H))
    t2 = np.empty((U, H))
    t3 = np.empty((U, H))
    dot_buf = np.empty((U, H))
    prev_k = 0  # active count at step t+1
    for t in reversed(range(T)):
        k = int(active[t])
        if k == 0:
            continue
        if k > prev_k and dfinal is not None:
            # Rows whose final step is t receive their final-state gradient.
            dh[prev_k:k] += dfinal[prev_k:k]
        if dout is not None:
            dh[:k] += dout[t, :k]
        dgi = dGi[t, :k]
        dgh = dGh[t, :k]
        if _HAVE_NUMBA:
            _bwd_gates(dh[:k], R[t, :k], Z[t, :k], N[t, :k], GHN[t, :k], Hprev[t, :k],
                       dgi, dgh, t3[:k])
        else:
            r = R[t, :k]
            z = Z[t, :k]
            n = N[t, :k]
            ghn = GHN[t, :k]
            hprev = Hprev[t, :k]
            dcand = dh[:k]
            # dn_pre = dcand * (1 - z) * (1 - n^2)
            dn_pre = dgi[:, 2 * H :]
            np.multiply(n, n, out=dn_pre)
            np.subtract(1.0, dn_pre, out=dn_pre)
            dn_pre *= dcand
            np.subtract(1.0, z, out=t1[:k])
            dn_pre *= t1[:k]
            # dghn = dn_pre * r ;  dr = dn_pre * ghn
            np.multiply(dn_pre, r, out=dgh[:, 2 * H :])
            np.multiply(dn_pre, ghn, out=t2[:k])  # dr
            # dz_pre = dcand * (hprev - n) * z * (1 - z)
            dz_pre = dgi[:, H : 2 * H]
            np.subtract(hprev, n, out=dz_pre)
            dz_pre *= dcand
            dz_pre *= z
            dz_pre *= t1[:k]  # t1 still holds (1 - z)
            dgh[:, H : 2 * H] = dz_pre
            # dr_pre = dr * r * (1 - r)
            dr_pre = dgi[:, :H]
            np.subtract(1.0, r, out=dr_pre)
            dr_pre *= r
            dr_pre *= t2[:k]
            dgh[:, :H] = dr_pre
            np.multiply(dcand, z, out=t3[:k])
        # dh <- dcand * z + dgh @ Wh^T
        np.dot(dgh, Wh.T, out=dot_buf[:k])
        t3[:k] += dot_buf[:k]
        dh[:k] = t3[:k]
        prev_k = k
    flatGi = dGi.reshape(T * U, 3 * H)
    flatGh = dGh.reshape(T * U, 3 * H)
    dWi = X.reshape(T * U, -1).T @ flatGi
    dWh = Hprev.reshape(T * U, H).T @ flatGh
    dbi = flatGi.sum(axis=0)
    dbh = flatGh.sum(axis=0)
    dX = (flatGi @ Wi.T).reshape(X.shape)
    return dX, dWi, dWh, dbi, dbh


def masked_log_softmax(logits: np.ndarray, admissible: np.ndarray):
    """Log-probabilities over the admissible entries of each row.

    Inadmissible entries get -inf log-probability and never receive
    gradient. Rows must have at least one admissible entry.
    """
    neg = np.full_like(logits, -np.inf)
    masked = np.where(admissible, logits, neg)
    maxes = masked.max(axis=1, keepdims=True)
    shifted = masked - maxes
    exp = np.where(admissible, np.exp(shifted), 0.0)
    total = exp.sum(axis=1, keepdims=True)
    logp = shifted - np.log(total)
    probs = exp / total
    return logp, probs


def nll_backward(probs: np.ndarray, gold: np.ndarray, scale) -> np.ndarray:
    """Gradient of mean NLL w.r.t. logits given masked softmax ``probs``.

    ``scale`` is the per-row weight of each NLL term in the scalar loss
    (a float or a (B,) array).
    """
    dlogits = probs.copy()
    dlogits[np.arange(len(gold)), gold] -= 1.0
    if np.isscalar(scale):
        dlogits *= scale
    else:
        dlogits *= np.asarray(scale)[:, None]
    return dlogits
