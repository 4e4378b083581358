"""Closed-form density envelopes and the diagnostics built on them.

Every envelope lives in the coordinates of the anisotropic dilation: the
displacement y - R_{s,t} x is rescaled by (T^a_{s-t})^-1 and its norm rho
(the energy) drives an explicit power of K v rho, optionally weighted by
the tempering envelope of the M-rescaled displacement. Prefactors are
plain fields here, never claimed values; the one constant the module
computes itself is the normalizer of the Theta-weighted envelope, fixed
per lag so that envelope integrates to one. Grid comparisons, the
Chapman quadrature and the smoothing-rate fits all report the constants
they find instead of asserting them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .frozen import DensityGrid
from .model import ModelSpec
from .resolvent import scale_M, scale_T, solve_resolvent

_GL_CACHE: dict = {}


def _gl(order: int) -> tuple:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _graded_axis(centers, scale: float, r_out: float, order: int = 6) -> tuple:
    """Gauss panels on [-r_out, r_out], dyadically graded into each center.

    The finest panel width is scale/64 so that a factor much narrower than
    the outer scale (a transported peak after a short lag) is still seen.
    """
    marks = {-r_out, r_out}
    for c in centers:
        c = float(c)
        if -r_out < c < r_out:
            marks.add(c)
        h = scale / 64.0
        while h < 2.0 * r_out:
            for p in (c - h, c + h):
                if -r_out < p < r_out:
                    marks.add(p)
            h *= 2.0
    edges = np.array(sorted(marks))
    xg, wg = _gl(order)
    half = 0.5 * np.diff(edges)
    mid = edges[:-1] + half
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _sym_axis(scale: float, r_out: float, order: int = 8) -> tuple:
    """Symmetric dyadic panels from scale/256 out to r_out."""
    j_hi = max(1, int(math.ceil(math.log2(r_out / scale))))
    pos = scale * 2.0 ** np.arange(-8, j_hi + 1)
    edges = np.concatenate([-pos[::-1], [0.0], pos])
    xg, wg = _gl(order)
    half = 0.5 * np.diff(edges)
    mid = edges[:-1] + half
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


@dataclass
class SmoothingFit:
    """Least-squares slope of one smoothing ladder on log-log axes."""

    direction: str
    modulus: str
    log_factor: bool
    omega: float
    intercept: float
    lags: list
    values: list
    max_residual: float

    def as_dict(self) -> dict:
        return {"direction": self.direction, "modulus": self.modulus,
                "log_factor": self.log_factor, "omega": self.omega,
                "intercept": self.intercept, "lags": self.lags,
                "values": self.values, "max_residual": self.max_residual}


@dataclass
class BoundProfile:
    """Envelope family for one model with every constant explicit.

    c_alpha scales the two-sided shape and defaults to 1 so that raw
    density-to-envelope ratios are what reports carry. c_eq sets the
    comparability band of the first-block indicator: a displacement counts
    as carried by the first block when that block holds at least c_eq of
    the full scaled norm (the other side of the band is automatic, a block
    never exceeds the norm). The Theta-weighted envelope ignores c_alpha;
    its normalizer is calibrated per lag, or pinned with c_bar.
    """

    spec: ModelSpec
    K: Optional[float] = None
    c_alpha: float = 1.0
    c_eq: float = 0.25
    delta: Optional[float] = None
    c_bar: Optional[float] = None

    def __post_init__(self):
        if self.K is None:
            self.K = float(self.spec.threshold_K)
        if self.delta is None:
            self.delta = float(self.spec.delta)
        if not 0.0 < self.c_eq <= 1.0:
            raise ValueError("the comparability ratio c_eq must lie in (0, 1]")
        if not self.K > 0:
            raise ValueError("the diagonal threshold K must be positive")
        self._cbar_cache: dict = {}
        self._res_cache: dict = {}

    # geometry ------------------------------------------------------------

    def _r(self, frm: float, to: float) -> np.ndarray:
        key = (round(float(frm), 12), round(float(to), 12))
        if key not in self._res_cache:
            self._res_cache[key] = solve_resolvent(self.spec, key[0], key[1])
        return self._res_cache[key]

    def _scaled_parts(self, t: float, s: float, x, y) -> tuple:
        if not s > t:
            raise ValueError("envelopes need s > t")
        ts = scale_T(self.spec, s - t)
        e = (np.asarray(y, dtype=np.float64)
             - self._r(t, s) @ np.asarray(x, dtype=np.float64))
        return ts, e, e * ts.inv_diag()

    def energy(self, t: float, s: float, x, y) -> np.ndarray:
        """Scaled displacement norm |(T^a_{s-t})^-1 (y - R_{s,t} x)|."""
        _, _, u = self._scaled_parts(t, s, x, y)
        return np.linalg.norm(u, axis=-1)

    # envelopes -------------------------------------------------------------
    # y may carry leading batch axes, x is a single point.

    def bar_p(self, t: float, s: float, x, y,
              tempered: Optional[bool] = None) -> np.ndarray:
        """Upper envelope: flat cap inside {rho <= K}, tail rho^-(d+1+alpha).

        `tempered` appends theta of the M-rescaled displacement; by default
        it follows the model.
        """
        sp = self.spec
        ts, e, u = self._scaled_parts(t, s, x, y)
        rho = np.linalg.norm(u, axis=-1)
        if tempered is None:
            tempered = not sp.tempering.is_stable
        m_norm = None
        if tempered:
            m_norm = np.linalg.norm(e * scale_M(sp, s - t).inv_diag(), axis=-1)
        return self._bar_from_energy(ts.det(), rho, m_norm)

    def _bar_from_energy(self, det_t: float, rho, m_norm) -> np.ndarray:
        sp = self.spec
        val = (self.c_alpha / det_t
               / np.maximum(self.K, rho) ** (sp.d + 1.0 + sp.alpha))
        if m_norm is not None:
            val = val * sp.tempering.theta(m_norm)
        return val

    def lower_p(self, t: float, s: float, x, y) -> np.ndarray:
        """Lower shape at the fast exponent nd(1+alpha), prefactor 1/c_alpha."""
        sp = self.spec
        ts, _, u = self._scaled_parts(t, s, x, y)
        rho = np.linalg.norm(u, axis=-1)
        return 1.0 / (self.c_alpha * ts.det()
                      * np.maximum(self.K, rho) ** (sp.nd * (1.0 + sp.alpha)))

    def diagonal_cap(self, lag: float) -> float:
        """Value bar_p takes everywhere on the diagonal set {rho <= K}."""
        return float(self.c_alpha / (scale_T(self.spec, lag).det()
                                     * self.K ** (self.spec.d + 1.0 + self.spec.alpha)))

    def cbar(self, lag: float) -> float:
        """Normalizer of the Theta-weighted envelope at one lag.

        In scaled coordinates the mass is a radial integral of
        r^(nd-1) Theta(lag^(1/alpha) r) / (K v r)^(d+1+alpha): the M and T
        dilations differ by the factor lag^(1/alpha) on every block, which
        is what puts the lag inside Theta. Convergence needs nd < d+1+alpha
        when Theta is bounded (tempered models) and alpha > d(n-1) in the
        stable case, where Theta grows linearly.
        """
        if self.c_bar is not None:
            return float(self.c_bar)
        key = round(float(lag), 15)
        if key not in self._cbar_cache:
            self._cbar_cache[key] = 1.0 / self._theta_mass(float(lag))
        return self._cbar_cache[key]

    def _theta_mass(self, lag: float) -> float:
        sp = self.spec
        nd, pw = sp.nd, sp.d + 1.0 + sp.alpha
        temp = sp.tempering
        surface = 2.0 * math.pi ** (0.5 * nd) / math.gamma(0.5 * nd)
        sfac = lag ** (1.0 / sp.alpha)
        if temp.is_stable:
            if not sp.alpha > sp.d * (sp.n - 1):
                raise ValueError(
                    "the stable Theta-weighted envelope is not integrable for "
                    f"alpha = {sp.alpha} <= d(n-1) = {sp.d * (sp.n - 1)}")
            # Theta(r) = 1 + r makes both pieces elementary
            k = self.K
            core = (k ** nd / nd + sfac * k ** (nd + 1) / (nd + 1)) / k ** pw
            tail = (k ** (nd - pw) / (pw - nd)
                    + sfac * k ** (nd + 1 - pw) / (pw - nd - 1))
            return surface * (core + tail)
        if not nd < pw:
            raise ValueError("the Theta-weighted envelope needs nd < d+1+alpha")
        xg, wg = _gl(16)
        r = 0.5 * self.K * (xg + 1.0)
        total = float(np.sum(0.5 * self.K * wg * r ** (nd - 1)
                             * temp.big_theta(sfac * r))) / self.K ** pw
        a = self.K
        for _ in range(220):
            b = 2.0 * a
            r = 0.5 * (a + b) + 0.5 * (b - a) * xg
            part = float(np.sum(0.5 * (b - a) * wg * r ** (nd - 1)
                                * temp.big_theta(sfac * r) / r ** pw))
            total += part
            if part <= 1e-14 * total:
                break
            a = b
        return surface * total

    def bar_p_theta(self, t: float, s: float, x, y) -> np.ndarray:
        """The calibrated envelope that is itself a probability density."""
        sp = self.spec
        ts, e, u = self._scaled_parts(t, s, x, y)
        rho = np.linalg.norm(u, axis=-1)
        m_norm = np.linalg.norm(e * scale_M(sp, s - t).inv_diag(), axis=-1)
        return (self.cbar(s - t) / ts.det()
                * sp.tempering.big_theta(m_norm)
                / np.maximum(self.K, rho) ** (sp.d + 1.0 + sp.alpha))

    def breve_p(self, t: float, big_t: float, x, y) -> np.ndarray:
        """Off-diagonal control envelope, carried by the first block.

        The displacement runs backwards here, x - R_{t,T} y, and the value
        vanishes unless the first scaled block holds at least c_eq of the
        energy. Tails split by block: d+alpha on the aligned first block,
        1+alpha on the rest; the lag powers multiply back to det(T^a).
        """
        sp = self.spec
        lag = big_t - t
        if not lag > 0:
            raise ValueError("needs big_t > t")
        ts = scale_T(sp, lag)
        delta = (np.asarray(x, dtype=np.float64)
                 - np.asarray(y, dtype=np.float64) @ self._r(big_t, t).T)
        u = delta * ts.inv_diag()
        first = np.linalg.norm(u[..., :sp.d], axis=-1)
        rest = np.linalg.norm(u[..., sp.d:], axis=-1)
        rho = np.hypot(first, rest)
        ind = (rho > 0.0) & (first >= self.c_eq * rho)
        m_norm = np.linalg.norm(delta * scale_M(sp, lag).inv_diag(), axis=-1)
        val = sp.tempering.theta(m_norm) / (
            ts.det() * (1.0 + first) ** (sp.d + sp.alpha)
            * (1.0 + rest) ** (1.0 + sp.alpha))
        return np.where(ind, val, 0.0)

    def q_bar(self, t: float, big_t: float, x, y) -> np.ndarray:
        """Theta-weighted envelope dressed with the kernel modulus and the
        logarithmic factor the time integral of one convolution picks up."""
        sp = self.spec
        if (sp.n, sp.d) != (2, 1):
            raise ValueError("q_bar uses the two-block modulus, n = 2 and d = 1 only")
        lag = big_t - t
        delta = (np.asarray(x, dtype=np.float64)
                 - np.asarray(y, dtype=np.float64) @ self._r(big_t, t).T)
        eta_pow = sp.holder_eta * min(sp.alpha, 1.0)
        mod = np.minimum(
            self.delta,
            (lag * np.abs(delta[..., 0]) + np.abs(delta[..., 1])) ** eta_pow)
        rho = self.energy(t, big_t, x, y)
        return (mod * self.bar_p_theta(t, big_t, x, y)
                * (1.0 + np.log(np.maximum(self.K, rho))))

    def check_p(self, t: float, big_t: float, x, y, tau_grid) -> np.ndarray:
        """Infimum over transport times of the aligned two-block product.

        Refining tau_grid can only lower the value: the indicator kills the
        product as soon as the first block loses alignment at some tau.
        """
        sp = self.spec
        if (sp.n, sp.d) != (2, 1):
            raise ValueError("check_p is n = 2, d = 1 only")
        lag = big_t - t
        if not lag > 0:
            raise ValueError("needs big_t > t")
        taus = np.atleast_1d(np.asarray(tau_grid, dtype=np.float64))
        if taus.min() < t - 1e-12 or taus.max() > big_t + 1e-12:
            raise ValueError("tau_grid must stay inside [t, T]")
        ts = scale_T(sp, lag)
        inv_diag = ts.inv_diag()
        minv = scale_M(sp, lag).inv_diag()
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        lag1 = lag ** (1.0 / sp.alpha)
        lag2 = lag ** (1.0 + 1.0 / sp.alpha)
        best = None
        for tau in taus:
            d_tau = self._r(t, tau) @ x - y @ self._r(big_t, tau).T
            u = d_tau * inv_diag
            u1 = np.abs(u[..., 0])
            u2 = np.abs(u[..., 1])
            rho = np.hypot(u1, u2)
            ind = (rho > 0.0) & (u1 >= self.c_eq * rho)
            m_norm = np.linalg.norm(d_tau * minv, axis=-1)
            f1 = np.where(ind,
                          sp.tempering.theta(m_norm)
                          / (lag1 * (1.0 + u1) ** (1.0 + sp.alpha)), 0.0)
            f2 = 1.0 / (lag2 * (1.0 + u2) ** (1.0 + sp.alpha))
            v = f1 * f2
            best = v if best is None else np.minimum(best, v)
        return best

    # grid comparison -------------------------------------------------------

    def verify_two_sided(self, grid: DensityGrid, which: str = "both",
                         tempered: Optional[bool] = None) -> dict:
        """Density grid against the envelope, both directions of the claim.

        Upper: sup of density/envelope over cells above the grid's inversion
        floor; cells at or below the floor are indistinguishable from the
        inversion's own noise, so they are counted and excluded. Lower:
        infimum of density times det(T^a) over the diagonal {rho <= K}.
        """
        if which not in ("both", "upper", "lower"):
            raise ValueError(f"unknown selector {which!r}")
        sp = self.spec
        md = grid.metadata
        t, s = float(md["t"]), float(md["s"])
        lag = s - t
        ts = scale_T(sp, lag)
        center = np.asarray(md["center"], dtype=np.float64)
        inv_diag = ts.inv_diag()
        minv = scale_M(sp, lag).inv_diag()
        if tempered is None:
            tempered = not sp.tempering.is_stable
        # sparse broadcasting, no (m, ..., nd) stack
        sq, msq = 0.0, 0.0
        for k, ax in enumerate(grid.axes):
            shape = [1] * len(grid.axes)
            shape[k] = len(ax)
            e = (ax - center[k]).reshape(shape)
            sq = sq + (e * inv_diag[k]) ** 2
            msq = msq + (e * minv[k]) ** 2
        rho = np.sqrt(sq)
        pbar = self._bar_from_energy(ts.det(), rho,
                                     np.sqrt(msq) if tempered else None)
        floor = float(md.get("inversion_floor", 0.0))
        vals = grid.values
        keep = vals > floor
        out = {"t": t, "s": s, "lag": lag, "m": int(vals.shape[0]),
               "tempered": bool(tempered), "det_t": float(ts.det()),
               "c_alpha": self.c_alpha, "K": self.K,
               "cells_below_floor": int(vals.size - int(keep.sum()))}
        if which in ("both", "upper"):
            ratio = np.where(keep, vals / pbar, 0.0)
            idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
            kept = ratio[keep]
            out["upper"] = {
                "sup_ratio": float(ratio[idx]),
                "argmax_z": [float(grid.axes[k][idx[k]]) for k in range(len(idx))],
                "argmax_energy": float(rho[idx]),
                "ratio_quantiles": {str(q): float(np.quantile(kept, q))
                                    for q in (0.5, 0.9, 0.99)},
            }
        if which in ("both", "lower"):
            diag = rho <= self.K
            n_diag = int(diag.sum())
            inf_val = float((vals * ts.det())[diag].min()) if n_diag else math.nan
            out["lower"] = {
                "diag_cells": n_diag,
                "diag_inf": inf_val,
                "diag_below_floor": int(np.sum(diag & ~keep)),
            }
        return out

    # Chapman quadrature ------------------------------------------------------

    def chapman_lhs(self, t: float, tau: float, s: float, x, y,
                    tempered: Optional[bool] = None, order: int = 6,
                    r_out_factor: float = 64.0) -> float:
        """integral of bar_p(t,tau,x,.) bar_p(tau,s,.,y) by a graded rule.

        Only n = 2, d = 1 keeps the product of two such envelopes below a
        third of the same family (the tail exponent d+1+alpha then equals
        the mass dimension nd+alpha). In the scaled coordinates of the
        first factor the integrand is the flat cap against a shifted copy
        centered at u* with R_{s,tau} T_{tau-t} u* = y - R_{s,t} x; panels
        grade into both centers and the far tail decays at twice the
        envelope exponent, so a moderate cut radius closes the integral.
        """
        sp = self.spec
        if (sp.n, sp.d) != (2, 1):
            raise ValueError(
                "the Chapman reduction needs nd = d + 1, i.e. n = 2 and d = 1")
        if not t < tau < s:
            raise ValueError("needs t < tau < s")
        if tempered is None:
            tempered = not sp.tempering.is_stable
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ts1 = scale_T(sp, tau - t)
        ts2 = scale_T(sp, s - tau)
        base = y - self._r(t, s) @ x
        amat = self._r(tau, s) @ np.diag(ts1.diag)
        ustar = np.linalg.solve(amat, base)
        r_out = r_out_factor * max(self.K, float(np.abs(ustar).max()), 1.0)
        n1, w1 = _graded_axis((0.0, float(ustar[0])), self.K, r_out, order)
        n2, w2 = _graded_axis((0.0, float(ustar[1])), self.K, r_out, order)
        pw = sp.d + 1.0 + sp.alpha
        rho1 = np.hypot(n1[:, None], n2[None, :])
        f1 = self.c_alpha / np.maximum(self.K, rho1) ** pw
        if tempered:
            f1 = f1 * sp.tempering.theta((tau - t) ** (1.0 / sp.alpha) * rho1)
        e1 = base[0] - amat[0, 0] * n1[:, None] - amat[0, 1] * n2[None, :]
        e2 = base[1] - amat[1, 0] * n1[:, None] - amat[1, 1] * n2[None, :]
        inv2 = ts2.inv_diag()
        rho2 = np.hypot(e1 * inv2[0], e2 * inv2[1])
        f2 = self.c_alpha / ts2.det() / np.maximum(self.K, rho2) ** pw
        if tempered:
            minv2 = scale_M(sp, s - tau).inv_diag()
            f2 = f2 * sp.tempering.theta(np.hypot(e1 * minv2[0], e2 * minv2[1]))
        return float(np.einsum("i,j,ij->", w1, w2, f1 * f2))

    def semigroup_constant(self, t: float, s: float, tau: Optional[float] = None,
                           count: int = 20, rng_seed: int = 20240229,
                           tempered: Optional[bool] = None) -> dict:
        """Max over sampled pairs of the Chapman quadrature over bar_p(t,s).

        Samples mix energies from a tenth of K out to the far field and, if
        tau is not pinned, intermediate times across the bulk of (t, s).
        Finiteness is the check; the value itself is a fitted constant.
        """
        sp = self.spec
        rng = np.random.default_rng(rng_seed)
        ts = scale_T(sp, s - t)
        samples = []
        for _ in range(count):
            tk = float(tau) if tau is not None else float(
                t + (s - t) * rng.uniform(0.15, 0.85))
            x = ts.diag * rng.standard_normal(2)
            direction = rng.standard_normal(2)
            direction /= np.linalg.norm(direction)
            energy = self.K * 10.0 ** rng.uniform(-1.0, 1.3)
            y = self._r(t, s) @ x + ts.diag * (energy * direction)
            lhs = self.chapman_lhs(t, tk, s, x, y, tempered=tempered)
            rhs = float(self.bar_p(t, s, x, y, tempered=tempered))
            samples.append({"tau": tk, "energy": float(energy),
                            "x": x.tolist(), "y": y.tolist(),
                            "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs})
        ratios = np.array([row["ratio"] for row in samples])
        worst = int(np.argmax(ratios))
        return {"t": t, "s": s, "count": count,
                "max_ratio": float(ratios[worst]),
                "argmax": samples[worst],
                "all_finite": bool(np.all(np.isfinite(ratios))),
                "samples": samples}

    # smoothing ladder --------------------------------------------------------

    def smoothing_integral(self, lag: float, direction: str = "backward",
                           modulus: str = "state", log_factor: bool = False,
                           include_breve: Optional[bool] = None,
                           anchor: float = 0.5, r_out: float = 1e6,
                           order: int = 8) -> float:
        """One rung of a smoothing ladder, in scaled coordinates.

        Backward integrates the truncated modulus of w = z - R_{tau,T} y
        against the envelopes that end at y over the lag T - tau = lag; the
        energy of bar_p then reads w through the transport R_{T,tau}, the
        only place the anchor time enters (it matters when the drift matrix
        depends on time). Forward integrates against the envelope started
        at x, whose energy is |u| with no twist, and carries no first-block
        companion. det(T^a) cancels against dz throughout, so the rung is
        the plain weighted sum over the u mesh.
        """
        sp = self.spec
        if (sp.n, sp.d) != (2, 1):
            raise ValueError("smoothing integrals are n = 2, d = 1 only")
        if direction not in ("backward", "forward"):
            raise ValueError(f"unknown direction {direction!r}")
        if modulus not in ("state", "fast"):
            raise ValueError(f"unknown modulus {modulus!r}")
        if include_breve is None:
            include_breve = direction == "backward"
        eta_pow = sp.holder_eta * min(sp.alpha, 1.0)
        pw = sp.d + 1.0 + sp.alpha
        ts = scale_T(sp, lag)
        td = ts.diag
        nodes, wts = _sym_axis(self.K, r_out, order)
        u1 = nodes[:, None]
        u2 = nodes[None, :]
        sfac = lag ** (1.0 / sp.alpha)
        if direction == "backward":
            rmat = self._r(anchor - lag, anchor)
            # B = T^-1 R_{T,tau} T; the tempering argument is sfac |B u|
            bmat = (rmat * td[None, :]) * ts.inv_diag()[:, None]
            rho = np.hypot(bmat[0, 0] * u1 + bmat[0, 1] * u2,
                           bmat[1, 0] * u1 + bmat[1, 1] * u2)
        else:
            rho = np.hypot(u1, u2)
        kern = (self.c_alpha / np.maximum(self.K, rho) ** pw
                * sp.tempering.theta(sfac * rho))
        if include_breve:
            au1, au2 = np.abs(u1), np.abs(u2)
            rho0 = np.hypot(u1, u2)
            ind = (rho0 > 0.0) & (au1 >= self.c_eq * rho0)
            kern = kern + ind * (sp.tempering.theta(sfac * rho0)
                                 / ((1.0 + au1) ** (1.0 + sp.alpha)
                                    * (1.0 + au2) ** (1.0 + sp.alpha)))
        if log_factor:
            kern = kern * (1.0 + np.log(np.maximum(self.K, rho)))
        if modulus == "state":
            m = np.hypot(td[0] * u1, td[1] * u2)
        elif direction == "backward":
            m = np.abs(td[1] * u2) * np.ones_like(u1)
        else:
            m = lag * np.abs(td[0] * u1) + np.abs(td[1] * u2)
        mod = np.minimum(self.delta, m ** eta_pow)
        return float(np.einsum("i,j,ij->", wts, wts, mod * kern))

    def smoothing_exponent(self, direction: str = "backward",
                           modulus: str = "state", log_factor: bool = False,
                           lags=None, anchor: float = 0.5,
                           **quad) -> SmoothingFit:
        """Fitted decay rate of the smoothing integral over a lag ladder.

        The ladder must hold at least five rungs across two decades; the
        fit is least squares on log-log pairs and keeps the worst residual
        so a poor power law stays visible in the report.
        """
        lags = (np.geomspace(5e-4, 5e-2, 7) if lags is None
                else np.asarray(lags, dtype=np.float64))
        if len(lags) < 5 or lags.max() / lags.min() < 99.0:
            raise ValueError("the ladder needs >= 5 lags spanning two decades")
        vals = np.array([self.smoothing_integral(
            float(l), direction=direction, modulus=modulus,
            log_factor=log_factor, anchor=anchor, **quad) for l in lags])
        logl, logv = np.log(lags), np.log(vals)
        slope, intercept = np.polyfit(logl, logv, 1)
        resid = logv - (slope * logl + intercept)
        return SmoothingFit(direction, modulus, log_factor, float(slope),
                            float(intercept), [float(l) for l in lags],
                            [float(v) for v in vals],
                            float(np.max(np.abs(resid))))


def envelope_report(profile: BoundProfile, grids=(), smoothing: bool = True,
                    smoothing_lags=None, semigroup: Optional[dict] = None) -> dict:
    """JSON-ready summary: grid ratios, fitted rates, calibrated constants.

    Smoothing fits come in with-log and without-log pairs; which one the
    series bookkeeping should quote is left open, so the report carries
    both. Grids outside the calibration range record a null normalizer
    with the reason instead of failing the whole report.
    """
    sp = profile.spec
    out = {
        "model": {"n": sp.n, "d": sp.d, "alpha": sp.alpha,
                  "tempering": sp.tempering.kind},
        "constants": {"K": profile.K, "c_alpha": profile.c_alpha,
                      "c_eq": profile.c_eq, "delta": profile.delta},
        "two_sided": [profile.verify_two_sided(g) for g in grids],
    }
    cal = {}
    for g in grids:
        lag = float(g.metadata["s"]) - float(g.metadata["t"])
        try:
            cal[f"{lag:.6g}"] = profile.cbar(lag)
        except ValueError as err:
            cal[f"{lag:.6g}"] = {"value": None, "reason": str(err)}
    out["constants"]["cbar_by_lag"] = cal
    if smoothing and (sp.n, sp.d) == (2, 1):
        fits = {}
        for mod in ("state", "fast"):
            for logf in (False, True):
                fit = profile.smoothing_exponent(modulus=mod, log_factor=logf,
                                                 lags=smoothing_lags)
                fits[f"backward_{mod}" + ("_log" if logf else "")] = fit.as_dict()
        out["smoothing"] = fits
    if semigroup is not None:
        out["semigroup"] = profile.semigroup_constant(**semigroup)
    return out
