"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

Everything here is deliberately low-level: flat arrays in, flat arrays out,
no model objects. The numba path is selected automatically when numba imports
cleanly; set ``LEVYCHAIN_NO_NUMBA=1`` to force the numpy implementations
(``benchmarks/bench_accel.py`` times one against the other).

The radial jump exponent psi enters every kernel either analytically
(untempered case, ``psi(a) = c_alpha * a**alpha``) or through a sampled table
interpolated with the Catmull-Rom cardinal kernel on a grid uniform in
``sqrt(a)``. Oscillatory sums use a Filon-type rule: the smooth factor is
interpolated with the same cardinal kernel and the phase is integrated
exactly, which turns into the plain phased sum times the kernel transform
``keys_bhat(h*w)`` per axis.
"""

from __future__ import annotations

import os

import numpy as np

HAS_NUMBA = False
if os.environ.get("LEVYCHAIN_NO_NUMBA", "0") != "1":
    try:
        import numba
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

if not HAS_NUMBA:
    def njit(*args, **kwargs):
        """No-op decorator standing in for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_JIT = dict(cache=True, fastmath=False)

# psi evaluation modes
PSI_STABLE = 0   # analytic c_alpha * a**alpha
PSI_TABLE = 1    # Catmull-Rom table in sqrt(a)


def keys_bhat(theta):
    """Fourier transform of the Catmull-Rom cardinal kernel, vectorized.

    b(0) = 1; the closed form cancels catastrophically near zero, so a Taylor
    series takes over below |theta| = 0.8.
    """
    th = np.abs(np.asarray(theta, dtype=np.float64))
    out = np.empty_like(th)
    small = th < 0.8
    t2 = th[small] ** 2
    out[small] = 1.0 + t2 * t2 * (-1.0 / 80.0 + t2 * (17.0 / 15120.0 - t2 * 31.0 / 604800.0))
    tb = th[~small]
    out[~small] = 2.0 * (
        2.0 * tb * (np.cos(tb) - 1.0) * np.sin(tb)
        - 12.0 * np.cos(tb) + 3.0 * np.cos(2.0 * tb) + 9.0
    ) / tb ** 4
    if np.isscalar(theta) or np.asarray(theta).ndim == 0:
        return float(out)
    return out


@njit(**_JIT)
def _keys_bhat_s(theta):
    th = abs(theta)
    if th < 0.8:
        t2 = th * th
        return 1.0 + t2 * t2 * (-1.0 / 80.0 + t2 * (17.0 / 15120.0 - t2 * 31.0 / 604800.0))
    return 2.0 * (
        2.0 * th * (np.cos(th) - 1.0) * np.sin(th)
        - 12.0 * np.cos(th) + 3.0 * np.cos(2.0 * th) + 9.0
    ) / th ** 4


@njit(inline="always", **_JIT)
def _psi_eval(mode, alpha, calpha, tab, w0, inv_dw, ntab, a):
    """Radial exponent psi at a >= 0 (scalar)."""
    if mode == PSI_STABLE:
        return calpha * a ** alpha
    # Catmull-Rom on a grid uniform in w = sqrt(a)
    w = np.sqrt(a)
    t = (w - w0) * inv_dw
    if t <= 0.0:
        return tab[0]
    if t >= ntab - 1:
        return tab[ntab - 1]
    k = int(t)
    if k < 1:
        k = 1
    elif k > ntab - 3:
        k = ntab - 3
    s = t - k
    ym1 = tab[k - 1]
    y0 = tab[k]
    y1 = tab[k + 1]
    y2 = tab[k + 2]
    a3 = 0.5 * (3.0 * (y0 - y1) + y2 - ym1)
    a2 = ym1 - 2.5 * y0 + 2.0 * y1 - 0.5 * y2
    a1 = 0.5 * (y1 - ym1)
    return y0 + s * (a1 + s * (a2 + s * a3))


def _psi_eval_np(mode, alpha, calpha, tab, w0, inv_dw, ntab, a):
    """Vectorized twin of _psi_eval (a is an ndarray)."""
    if mode == PSI_STABLE:
        return calpha * a ** alpha
    w = np.sqrt(a)
    t = (w - w0) * inv_dw
    t = np.clip(t, 0.0, ntab - 1 - 1e-12)
    k = np.clip(t.astype(np.int64), 1, ntab - 3)
    s = t - k
    ym1 = tab[k - 1]
    y0 = tab[k]
    y1 = tab[k + 1]
    y2 = tab[k + 2]
    a3 = 0.5 * (3.0 * (y0 - y1) + y2 - ym1)
    a2 = ym1 - 2.5 * y0 + 2.0 * y1 - 0.5 * y2
    a1 = 0.5 * (y1 - ym1)
    return y0 + s * (a1 + s * (a2 + s * a3))


# ---------------------------------------------------------------------------
# exponent grids


@njit(**_JIT)
def _nb_exp_neg_f(q1, q2, c1, c2, wq, mode, alpha, calpha, tab, w0, inv_dw):
    """E[i,j] = exp(-sum_m wq[m] * psi(|c1[m] q1[i] + c2[m] q2[j]|))."""
    n1 = q1.shape[0]
    n2 = q2.shape[0]
    m = wq.shape[0]
    ntab = tab.shape[0]
    out = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            f = 0.0
            for k in range(m):
                a = abs(c1[k] * q1[i] + c2[k] * q2[j])
                f += wq[k] * _psi_eval(mode, alpha, calpha, tab, w0, inv_dw, ntab, a)
            out[i, j] = np.exp(-f)
    return out


def _np_exp_neg_f(q1, q2, c1, c2, wq, mode, alpha, calpha, tab, w0, inv_dw):
    ntab = tab.shape[0]
    a = np.abs(c1[:, None, None] * q1[None, :, None] + c2[:, None, None] * q2[None, None, :])
    f = np.einsum(
        "m,mij->ij", wq,
        _psi_eval_np(mode, alpha, calpha, tab, w0, inv_dw, ntab, a),
    )
    return np.exp(-f)


@njit(**_JIT)
def _nb_f_values(q1, q2, c1, c2, wq, mode, alpha, calpha, tab, w0, inv_dw):
    """Same as _nb_exp_neg_f but returns F itself."""
    n1 = q1.shape[0]
    n2 = q2.shape[0]
    m = wq.shape[0]
    ntab = tab.shape[0]
    out = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            f = 0.0
            for k in range(m):
                a = abs(c1[k] * q1[i] + c2[k] * q2[j])
                f += wq[k] * _psi_eval(mode, alpha, calpha, tab, w0, inv_dw, ntab, a)
            out[i, j] = f
    return out


def _np_f_values(q1, q2, c1, c2, wq, mode, alpha, calpha, tab, w0, inv_dw):
    ntab = tab.shape[0]
    a = np.abs(c1[:, None, None] * q1[None, :, None] + c2[:, None, None] * q2[None, None, :])
    return np.einsum(
        "m,mij->ij", wq,
        _psi_eval_np(mode, alpha, calpha, tab, w0, inv_dw, ntab, a),
    )


# ---------------------------------------------------------------------------
# Filon cosine sums: out[k] = sum_ij G[i,j] cos(q1[i] v1[k] + q2[j] v2[k])


@njit(**_JIT)
def _nb_filon_cos_sum(G, q1, q2, v1, v2):
    n1 = q1.shape[0]
    n2 = q2.shape[0]
    nk = v1.shape[0]
    out = np.empty(nk)
    tcol = np.empty(n2)
    ucol = np.empty(n2)
    for k in range(nk):
        for j in range(n2):
            tcol[j] = 0.0
            ucol[j] = 0.0
        for i in range(n1):
            ci = np.cos(q1[i] * v1[k])
            si = np.sin(q1[i] * v1[k])
            for j in range(n2):
                g = G[i, j]
                tcol[j] += g * ci
                ucol[j] += g * si
        acc = 0.0
        for j in range(n2):
            acc += tcol[j] * np.cos(q2[j] * v2[k]) - ucol[j] * np.sin(q2[j] * v2[k])
        out[k] = acc
    return out


def _np_filon_cos_sum(G, q1, q2, v1, v2):
    C1 = np.cos(np.outer(v1, q1))
    S1 = np.sin(np.outer(v1, q1))
    C2 = np.cos(np.outer(v2, q2))
    S2 = np.sin(np.outer(v2, q2))
    T = C1 @ G
    U = S1 @ G
    return np.einsum("kj,kj->k", T, C2) - np.einsum("kj,kj->k", U, S2)


# ---------------------------------------------------------------------------
# Euler scheme, scalar noise injected into the first component


@njit(**_JIT)
def _nb_euler_paths(x, amats, dt, dz, sig_c0, sig_c, clip_r, cap, flags):
    """In-place Euler update of x (npaths, nd) over all steps.

    amats: (nsteps, nd, nd) drift matrices at the left grid points.
    dz:    (npaths, nsteps) scalar noise increments.
    sigma(x) = sig_c0 + sum_i sig_c[i] * clip(x[i], -clip_r, clip_r);
    flagged paths (|x| component above cap) freeze and are reported, not dropped.
    """
    npaths, nd = x.shape
    nsteps = amats.shape[0]
    xi = np.empty(nd)
    for p in range(npaths):
        if flags[p]:
            continue
        for s in range(nsteps):
            sig = sig_c0
            for i in range(nd):
                xv = x[p, i]
                if xv > clip_r:
                    xv = clip_r
                elif xv < -clip_r:
                    xv = -clip_r
                sig += sig_c[i] * xv
            for i in range(nd):
                acc = 0.0
                for j in range(nd):
                    acc += amats[s, i, j] * x[p, j]
                xi[i] = x[p, i] + dt * acc
            xi[0] += sig * dz[p, s]
            bad = False
            for i in range(nd):
                if not np.isfinite(xi[i]) or abs(xi[i]) > cap:
                    bad = True
            if bad:
                flags[p] = True
                break
            for i in range(nd):
                x[p, i] = xi[i]
    return x


def _np_euler_paths(x, amats, dt, dz, sig_c0, sig_c, clip_r, cap, flags):
    npaths, nd = x.shape
    nsteps = amats.shape[0]
    alive = ~flags
    for s in range(nsteps):
        xa = x[alive]
        sig = sig_c0 + np.clip(xa, -clip_r, clip_r) @ sig_c
        xn = xa + dt * xa @ amats[s].T
        xn[:, 0] += sig * dz[alive, s]
        bad = ~np.all(np.isfinite(xn), axis=1) | (np.abs(xn) > cap).any(axis=1)
        xn[bad] = xa[bad]
        x[alive] = xn
        idx = np.flatnonzero(alive)
        flags[idx[bad]] = True
        alive = ~flags
        if not alive.any():
            break
    return x


# ---------------------------------------------------------------------------
# tempered increments: compound Poisson above eps + Gaussian surrogate below


@njit(**_JIT)
def _nb_tempered_increments(counts, jump_u, sign_u, gauss, gsd, cdf, sizes, out):
    """out[p,s] = gsd*gauss[p,s] + sum of signed CDF-inverted jumps.

    counts gives the Poisson jump count per (path, step); jump_u/sign_u are
    flat uniform streams consumed in order. Jump sizes come from inverting
    the tabulated CDF (cdf increasing on [0,1], sizes the matching radii on a
    dense geometric grid): uniform-u quantile tables would distort the heavy
    tail, interpolating against the CDF itself keeps it exact per cell.
    """
    npaths, nsteps = counts.shape
    m = cdf.shape[0]
    pos = 0
    for p in range(npaths):
        for s in range(nsteps):
            acc = gsd * gauss[p, s]
            c = counts[p, s]
            for _ in range(c):
                u = jump_u[pos]
                lo = 0
                hi = m - 1
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if cdf[mid] <= u:
                        lo = mid
                    else:
                        hi = mid
                den = cdf[lo + 1] - cdf[lo]
                frac = (u - cdf[lo]) / den if den > 0.0 else 0.0
                size = sizes[lo] + frac * (sizes[lo + 1] - sizes[lo])
                if sign_u[pos] < 0.5:
                    acc -= size
                else:
                    acc += size
                pos += 1
            out[p, s] = acc
    return out


def _np_tempered_increments(counts, jump_u, sign_u, gauss, gsd, cdf, sizes, out):
    drawn = np.interp(jump_u, cdf, sizes)
    signed = np.where(sign_u < 0.5, -drawn, drawn)
    flat = counts.ravel().astype(np.int64)
    ends = np.cumsum(flat)
    starts = ends - flat
    csum = np.concatenate(([0.0], np.cumsum(signed)))
    sums = csum[ends] - csum[starts]
    out[...] = gsd * gauss + sums.reshape(counts.shape)
    return out


# dispatch table ------------------------------------------------------------

if HAS_NUMBA:
    exp_neg_f = _nb_exp_neg_f
    f_values = _nb_f_values
    filon_cos_sum = _nb_filon_cos_sum
    euler_paths = _nb_euler_paths
    tempered_increments = _nb_tempered_increments
else:
    exp_neg_f = _np_exp_neg_f
    f_values = _np_f_values
    filon_cos_sum = _np_filon_cos_sum
    euler_paths = _np_euler_paths
    tempered_increments = _np_tempered_increments

BACKEND = "numba" if HAS_NUMBA else "numpy"
