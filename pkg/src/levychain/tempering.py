"""Tempering functions and the radial jump exponent.

The driving noise has a rotation-free polar decomposition: jump sizes follow
``g(rho) drho / rho^(1+alpha)`` and directions an angular weight. Everything
spectral in the package reduces to the radial exponent

    psi(a) = integral_0^inf (1 - cos(a rho)) g(rho) rho^(-1-alpha) drho,

which is ``c_alpha * a**alpha`` exactly when g == 1 and otherwise gets sampled
into a table (uniform in sqrt(a)) read by the hot kernels.

A tempering bundle also carries the envelope pair (theta, Theta) used by the
density bounds. The doubling requirement theta(r) <= D theta(2r) rules out
exponentially decaying envelopes, so the built-in exponential tempering uses
the polynomial envelope (1+r)^-2 (its g still decays exponentially).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._accel import PSI_STABLE, PSI_TABLE

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    return _GL_CACHE[n]


def _panel_quad(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, n: int = 8) -> float:
    """Composite Gauss-Legendre over consecutive panels given by edges."""
    x, w = _gl(n)
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = f(nodes.ravel()).reshape(nodes.shape)
    return float(np.sum(half[:, None] * w[None, :] * vals))


def stable_c_alpha(alpha: float) -> float:
    """c_alpha = integral_0^inf (1 - cos u) u^(-1-alpha) du, alpha in (0,2)."""
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0,2), got {alpha}")
    if alpha == 1.0:
        return math.pi / 2.0
    return math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0) / (alpha * (1.0 - alpha))


@dataclass(frozen=True)
class Tempering:
    """Jump tempering g plus its bound envelopes theta and Theta = (1+r) theta."""

    kind: str                      # "none" | "exponential" | "polynomial" | "custom"
    c: float = 1.0                 # rate for "exponential"
    m: float = 2.0                 # power for "polynomial"
    g_fn: Optional[Callable] = field(default=None, repr=False)
    theta_fn: Optional[Callable] = field(default=None, repr=False)
    big_theta_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("none", "exponential", "polynomial", "custom"):
            raise ValueError(f"unknown tempering kind {self.kind!r}")
        if self.kind == "exponential" and self.c <= 0:
            raise ValueError("exponential tempering needs c > 0")
        if self.kind == "polynomial" and self.m < 2:
            raise ValueError("polynomial tempering needs m >= 2")
        if self.kind == "custom" and (self.g_fn is None or self.theta_fn is None
                                      or self.big_theta_fn is None):
            raise ValueError("custom tempering needs g, theta and Theta callables")

    @property
    def is_stable(self) -> bool:
        return self.kind == "none"

    def g(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "none":
            return np.ones_like(r)
        if self.kind == "exponential":
            return np.exp(-self.c * r)
        if self.kind == "polynomial":
            return (1.0 + r) ** (-self.m)
        return np.asarray(self.g_fn(r), dtype=np.float64)

    def theta(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "none":
            return np.ones_like(r)
        if self.kind == "exponential":
            return (1.0 + r) ** -2.0
        if self.kind == "polynomial":
            return (1.0 + r) ** (-self.m)
        return np.asarray(self.theta_fn(r), dtype=np.float64)

    def big_theta(self, r):
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "none":
            return 1.0 + r
        if self.kind == "exponential":
            return (1.0 + r) ** -1.0
        if self.kind == "polynomial":
            return (1.0 + r) ** (1.0 - self.m)
        return np.asarray(self.big_theta_fn(r), dtype=np.float64)

    def cache_key(self):
        if self.kind == "custom":
            return ("custom", id(self.g_fn))
        return (self.kind, self.c, self.m)


# ---------------------------------------------------------------------------
# radial exponent quadrature


def radial_exponent_quad(a, alpha: float, temp: Tempering) -> np.ndarray:
    """psi at the points of `a` by direct quadrature (unit angular mass).

    Design: split at rho = 1. Below, 1 - cos = 2 sin^2 is integrated after
    the substitution rho = zeta^(1/(2-alpha)) which removes the rho^(1-alpha)
    density; panels stay below a quarter oscillation period. Above, panels
    grow geometrically but are capped at a quarter period, out to where the
    integrand envelope falls under 1e-16 of the accumulated value.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if temp.is_stable:
        return stable_c_alpha(alpha) * a ** alpha
    out = np.empty_like(a)
    p = 1.0 / (2.0 - alpha)
    for idx, av in enumerate(a):
        if av == 0.0:
            out[idx] = 0.0
            continue
        # [0, 1]: substitution + oscillation-capped panels in zeta
        width_rho = math.pi / (2.0 * av)

        def f_small(z, av=av):
            rho = z ** p
            return (2.0 * np.sin(0.5 * av * rho) ** 2 * temp.g(rho)
                    * rho ** (-1.0 - alpha) * p * z ** (p - 1.0))

        if width_rho >= 1.0:
            edges = np.linspace(0.0, 1.0, 9)
        else:
            # zeta edges from an oscillation-resolved rho grid
            rho_edges = np.arange(0.0, 1.0, width_rho)
            rho_edges = np.append(rho_edges, 1.0)
            edges = rho_edges ** (1.0 / p)
        val = _panel_quad(f_small, edges, n=8)

        # [1, rho_max]: geometric growth capped at a quarter period
        def f_large(rho, av=av):
            return (1.0 - np.cos(av * rho)) * temp.g(rho) * rho ** (-1.0 - alpha)

        def env(rho):
            return 2.0 * float(temp.g(rho)) * rho ** (-1.0 - alpha)

        edges_l = [1.0]
        rho = 1.0
        while env(rho) > 1e-16 * max(val, 1e-300) and rho < 1e7:
            rho += max(min(0.25 * rho, width_rho), 1e-9)
            edges_l.append(rho)
        if len(edges_l) > 1:
            val += _panel_quad(f_large, np.asarray(edges_l), n=8)
        out[idx] = val
    return out


@dataclass
class PsiTable:
    """Sampled radial exponent consumed by the kernels.

    mode PSI_STABLE ignores the table and uses calpha * a**alpha. Table rows
    are uniform in w = sqrt(a); beyond the last node kernels clamp to the last
    value, which is only reached where exp(-F) is far below resolvable sizes
    (the builder guarantees psi(a_hi) >= psi_cap).
    """

    mode: int
    alpha: float
    calpha: float
    tab: np.ndarray
    w0: float
    inv_dw: float
    a_hi: float
    psi_cap: float

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if self.mode == PSI_STABLE:
            return self.calpha * np.abs(a) ** self.alpha
        from ._accel import _psi_eval_np
        return _psi_eval_np(self.mode, self.alpha, self.calpha, self.tab,
                            self.w0, self.inv_dw, self.tab.shape[0], np.abs(a))

    def kernel_args(self):
        return (self.mode, self.alpha, self.calpha, self.tab, self.w0, self.inv_dw)


_PSI_CACHE: dict = {}

A_MID = 32.0          # exact quadrature below, asymptotic fit above
PSI_CAP = 60.0        # table reaches at least this exponent value


def build_psi_table(alpha: float, temp: Tempering, a_hi: float = 1024.0,
                    n_nodes: int = 4097) -> PsiTable:
    """Build (and cache) the psi table for one (alpha, tempering) pair."""
    calpha = stable_c_alpha(alpha)
    if temp.is_stable:
        return PsiTable(PSI_STABLE, alpha, calpha, np.zeros(4), 0.0, 1.0,
                        math.inf, PSI_CAP)
    key = (alpha, temp.cache_key(), float(a_hi), n_nodes)
    if key in _PSI_CACHE:
        return _PSI_CACHE[key]

    # make sure psi(a_hi) clears the cap so constant extension is harmless
    g0 = float(temp.g(0.0))
    while g0 * calpha * a_hi ** alpha < 4.0 * PSI_CAP:
        a_hi *= 2.0

    w_hi = math.sqrt(a_hi)
    w = np.linspace(0.0, w_hi, n_nodes)
    a = w * w
    vals = np.empty(n_nodes)
    exact = a <= A_MID
    vals[exact] = radial_exponent_quad(a[exact], alpha, temp)

    # asymptotic branch: g(0) c_alpha a^alpha + fitted slow corrections
    fit_win = (a >= 20.0) & exact
    if fit_win.sum() < 8:
        fit_win = exact & (a >= 0.5 * A_MID)
    af = a[fit_win]
    resid = vals[fit_win] - g0 * calpha * af ** alpha
    if alpha == 1.0:
        basis = np.stack([np.log(af), np.ones_like(af)], axis=1)
    else:
        basis = np.stack([af ** (alpha - 1.0), np.ones_like(af)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, resid, rcond=None)
    ab = a[~exact]
    if alpha == 1.0:
        corr = coef[0] * np.log(ab) + coef[1]
    else:
        corr = coef[0] * ab ** (alpha - 1.0) + coef[1]
    vals[~exact] = g0 * calpha * ab ** alpha + corr

    table = PsiTable(PSI_TABLE, alpha, calpha, vals, 0.0,
                     (n_nodes - 1) / w_hi, a_hi, PSI_CAP)
    _PSI_CACHE[key] = table
    return table


# ---------------------------------------------------------------------------
# radial moments used by the tempered sampler


def radial_tail_mass(alpha: float, temp: Tempering, eps: float,
                     rho_max: float = None) -> float:
    """integral_eps^inf g(rho) rho^(-1-alpha) drho (unit angular mass)."""
    if eps <= 0:
        raise ValueError("eps must be positive")

    def f(rho):
        return temp.g(rho) * rho ** (-1.0 - alpha)

    hi = rho_max or _decay_radius(alpha, temp, eps)
    edges = np.geomspace(eps, hi, 257)
    return _panel_quad(f, edges, n=8)


def radial_small_second_moment(alpha: float, temp: Tempering, eps: float) -> float:
    """integral_0^eps rho^2 g(rho) rho^(-1-alpha) drho (unit angular mass)."""
    def f(rho):
        return temp.g(rho) * rho ** (1.0 - alpha)

    edges = np.geomspace(eps * 1e-12, eps, 129)
    edges[0] = 0.0
    return _panel_quad(f, edges, n=8)


def _decay_radius(alpha: float, temp: Tempering, eps: float) -> float:
    rho = max(1.0, eps)
    val = float(temp.g(rho)) * rho ** (-1.0 - alpha)
    floor = 1e-18 * max(val, 1e-300)
    while float(temp.g(rho)) * rho ** (-1.0 - alpha) > floor and rho < 1e9:
        rho *= 2.0
    return rho


def radial_jump_cdf(alpha: float, temp: Tempering, eps: float,
                    n: int = 8193) -> tuple:
    """(cdf, sizes) of the jump law on sizes >= eps, on a geometric size grid.

    Sampling inverts u against the cdf column directly; a quantile table on a
    uniform u-grid is avoided deliberately, its last cell would smear the
    heavy tail across the whole truncation radius. The grid ends where the
    density falls to 1e-18 of its value at eps, so the truncation is far
    below sampling resolution.
    """
    hi = _decay_radius(alpha, temp, eps)
    grid = np.geomspace(eps, hi, n)

    def f(rho):
        return temp.g(rho) * rho ** (-1.0 - alpha)

    x, w = _gl(8)
    lo = grid[:-1]
    up = grid[1:]
    mid = 0.5 * (lo + up)
    half = 0.5 * (up - lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    panel = np.sum(half[:, None] * w[None, :] * f(nodes.ravel()).reshape(nodes.shape), axis=1)
    cdf = np.concatenate(([0.0], np.cumsum(panel)))
    cdf /= cdf[-1]
    return cdf, grid
