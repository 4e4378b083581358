"""Lévy symbols of the noise and of the frozen proxy, plus samplers.

The driving noise Z has exponent psi_Z(p) = mass * psi_r(|p|) at d=1, where
psi_r is the radial exponent from `tempering` and mass the total angular
weight. The frozen proxy accumulates the same exponent along the resolvent
flow: its exponent is

    F(t,T,s,w,p) = mass * integral_t^s psi_r(|<p, R_{s,u} e1>| sigma_u) du,

with sigma_u = sigma(u, R_{u,T} w) frozen along the backward transport of w.
The integrand is smooth except where the resolvent column turns orthogonal
to p; the adaptive rule locates those roots and grades panels into them,
while grid evaluation uses a fixed composite rule shared across all p.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel
from .model import ModelSpec
from .resolvent import scale_M, solve_resolvent
from .tempering import (PsiTable, build_psi_table, radial_exponent_quad,
                        radial_jump_cdf, radial_small_second_moment,
                        radial_tail_mass, stable_c_alpha)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class FrozenCoeffs:
    """Time-quadrature data for one frozen exponent: F = sum wq psi_r(|c . p|)."""

    u_nodes: np.ndarray      # (m,)
    wq: np.ndarray           # (m,) GL weights times angular mass
    c: np.ndarray            # (m, nd) sigma_u * first resolvent column

    def kernel_cols(self) -> tuple:
        return tuple(np.ascontiguousarray(self.c[:, k]) for k in range(self.c.shape[1]))


def _gl_rule(panels: np.ndarray, order: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = panels[:-1], panels[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class SymbolEvaluator:
    """Exponents of Z and of the frozen proxy for one model instance.

    Building an evaluator triggers the radial quadrature (or the stable
    closed form); with check_quadrature the tempered table is spot-checked
    against a refined rule and a disagreement raises QuadratureError.
    """

    def __init__(self, spec: ModelSpec, time_panels: int = 12,
                 gl_order: int = 4, check_quadrature: bool = True,
                 psi_a_hi: float = 1024.0):
        self.spec = spec
        self.mass = spec.spectral.total_mass
        self.psi = build_psi_table(spec.alpha, spec.tempering, a_hi=psi_a_hi)
        self.time_panels = time_panels
        self.gl_order = gl_order
        self.quad_check_rel = 0.0
        if check_quadrature and not spec.tempering.is_stable:
            probe = np.array([0.37, 1.7, 6.3, 19.0])
            base = self.psi(probe)
            ref = radial_exponent_quad(probe, spec.alpha, spec.tempering)
            rel = float(np.max(np.abs(base - ref) / ref))
            self.quad_check_rel = rel
            if rel > 1e-3:
                raise QuadratureError(
                    f"radial quadrature self-check off by {rel:.2e}")

    # -- noise symbol -------------------------------------------------------

    def radial(self, a):
        """psi_r without the angular mass."""
        return self.psi(np.abs(a))

    def noise_exponent(self, p) -> float:
        """psi_Z(p) for p in R^d (scalar accepted at d=1)."""
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        if self.spec.d == 1:
            return float(self.mass * self.psi(abs(p[0])))
        nodes, w = self.spec.spectral.quadrature()
        dens = self.spec.spectral.h_fn(nodes)
        return float(np.sum(w * dens * self.psi(np.abs(nodes @ p))))

    # -- frozen symbol ------------------------------------------------------

    def _column(self, s: float, u: float, step: Optional[float] = None) -> np.ndarray:
        h = step if step is not None else max(abs(s - u) / 32.0, 1e-6)
        return solve_resolvent(self.spec, u, s, h)[:, 0]

    def frozen_coeffs(self, t: float, big_t: float, s: float, w_freeze,
                      u_nodes: Optional[np.ndarray] = None,
                      weights: Optional[np.ndarray] = None) -> FrozenCoeffs:
        """Assemble the fixed time rule shared by every p on a grid."""
        if not t < s <= big_t:
            raise ValueError("need t < s <= T")
        if u_nodes is None:
            panels = np.linspace(t, s, self.time_panels + 1)
            u_nodes, weights = _gl_rule(panels, self.gl_order)
        w_freeze = np.asarray(w_freeze, dtype=np.float64)
        m = len(u_nodes)
        c = np.empty((m, self.spec.nd))
        for k, u in enumerate(u_nodes):
            col = self._column(s, u)
            if self.spec.sigma.dependence == "constant":
                sig = self.spec.sigma(u, w_freeze)
            else:
                back = solve_resolvent(self.spec, big_t, u,
                                       max((big_t - t) / 64.0, 1e-6)) @ w_freeze
                sig = self.spec.sigma(u, back)
            c[k] = sig * col
        return FrozenCoeffs(u_nodes=np.asarray(u_nodes),
                            wq=np.asarray(weights) * self.mass, c=c)

    def exponent_from_coeffs(self, coeffs: FrozenCoeffs, p) -> float:
        a = np.abs(coeffs.c @ np.asarray(p, dtype=np.float64))
        return float(np.sum(coeffs.wq * self.psi(a)))

    def frozen_exponent(self, t: float, big_t: float, s: float, w_freeze, p,
                        adaptive: bool = True) -> float:
        """F(t,T,s,w,p); adaptive grades panels into resolvent-column roots."""
        p = np.asarray(p, dtype=np.float64)
        if not adaptive:
            return self.exponent_from_coeffs(
                self.frozen_coeffs(t, big_t, s, w_freeze), p)
        scan = np.linspace(t, s, 65)
        vals = np.array([float(self._column(s, u) @ p) for u in scan])
        edges = [t, s]
        for i in range(len(scan) - 1):
            a, b = scan[i], scan[i + 1]
            fa, fb = vals[i], vals[i + 1]
            if fa == 0.0:
                edges.append(a)
            elif fa * fb < 0.0:
                for _ in range(48):
                    mid = 0.5 * (a + b)
                    fm = float(self._column(s, mid) @ p)
                    if fa * fm <= 0.0:
                        b, fb = mid, fm
                    else:
                        a, fa = mid, fm
                edges.append(0.5 * (a + b))
        edges = np.unique(np.asarray(edges))
        # grade into each interior edge: |.|^alpha endpoint singularities
        panels = []
        for a, b in zip(edges[:-1], edges[1:]):
            width = b - a
            panels.extend([a, a + 0.002 * width, a + 0.05 * width, a + 0.3 * width,
                           b - 0.3 * width, b - 0.05 * width, b - 0.002 * width])
        panels.append(edges[-1])
        panels = np.unique(np.asarray(panels))
        u_nodes, weights = _gl_rule(panels, 16)
        coeffs = self.frozen_coeffs(t, big_t, s, w_freeze,
                                    u_nodes=u_nodes, weights=weights)
        return self.exponent_from_coeffs(coeffs, p)

    # -- sphere constant ----------------------------------------------------

    def rescaled_column(self, t: float, s: float, v) -> np.ndarray:
        """r(v) = M^-1_{s-t} (first column of R_{s, s-v(s-t)}), v in [0,1]."""
        lag = s - t
        minv = scale_M(self.spec, lag).inv_diag()
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        out = np.empty((len(v), self.spec.nd))
        for k, vk in enumerate(v):
            out[k] = minv * self._column(s, s - vk * lag)
        return out


@dataclass(frozen=True)
class SphereConstant:
    value: float
    direction: np.ndarray
    ok: bool
    floor: float

    def as_dict(self):
        return {"value": self.value, "direction": self.direction.tolist(),
                "ok": bool(self.ok), "floor": self.floor}


def sphere_constant(spec: ModelSpec, t: float, s: float,
                    v_count: int = 257, grid_count: int = 512,
                    floor: float = 1e-12) -> SphereConstant:
    """min over unit theta of integral_0^1 |<r(v), theta>|^alpha dv.

    r(v) is the M-rescaled first resolvent column; the minimum over the
    sphere is found on a dense direction grid then polished locally. A value
    at or below the floor signals a degenerate sub-diagonal.
    """
    ev = SymbolEvaluator(spec, check_quadrature=False)
    v, wv = _gl_rule(np.linspace(0.0, 1.0, 33), 8)
    rcols = ev.rescaled_column(t, s, v)      # (m, nd)
    alpha = spec.alpha
    nd = spec.nd

    def objective(thetas: np.ndarray) -> np.ndarray:
        proj = np.abs(rcols @ thetas.T) ** alpha
        return proj.T @ wv

    if nd == 1:
        theta = np.array([1.0])
        val = float(objective(theta[None, :])[0])
        return SphereConstant(val, theta, val > floor, floor)
    if nd == 2:
        phi = np.linspace(0.0, np.pi, grid_count, endpoint=False)
        thetas = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    else:
        rng = np.random.default_rng(12345)
        thetas = rng.standard_normal((max(grid_count, 2048), nd))
        thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
    vals = objective(thetas)
    best = int(np.argmin(vals))
    theta, val = thetas[best], float(vals[best])
    # local polish: shrinking tangent steps
    step = math.pi / grid_count
    for _ in range(60):
        moved = False
        for axis in range(nd):
            for sgn in (+1.0, -1.0):
                cand = theta.copy()
                cand[axis] += sgn * step
                cand /= np.linalg.norm(cand)
                cv = float(objective(cand[None, :])[0])
                if cv < val:
                    theta, val, moved = cand, cv, True
        if not moved:
            step *= 0.5
            if step < 1e-10:
                break
    return SphereConstant(val, theta, val > floor, floor)


def lower_bound_constant(ev: SymbolEvaluator, t: float, s: float,
                         p_samples: np.ndarray,
                         sphere_value: Optional[float] = None) -> tuple:
    """Fit the constant in F >= c (s-t) (C |M_{s-t} p|^alpha - 1).

    Returns (c_fit, margins) where margins are F / rhs over the samples with
    a positive right-hand side; c_fit is their minimum. The constant is
    existence-only, so callers freeze c_fit once and re-check later samples.
    """
    if sphere_value is None:
        sphere_value = sphere_constant(ev.spec, t, s).value
    lag = s - t
    mdiag = scale_M(ev.spec, lag).diag
    margins = []
    for p in np.atleast_2d(p_samples):
        f = ev.frozen_exponent(t, s, s, np.zeros(ev.spec.nd), p)
        rhs = lag * (sphere_value * np.linalg.norm(mdiag * p) ** ev.spec.alpha - 1.0)
        if rhs > 1e-9:
            margins.append(f / rhs)
    if not margins:
        raise ValueError("no sample produced a positive right-hand side")
    margins = np.asarray(margins)
    return float(margins.min()), margins


# ---------------------------------------------------------------------------
# samplers


def sample_stable_increment(alpha: float, scale: float, rng,
                            size: Optional[int] = None):
    """Symmetric alpha-stable variates with E exp(ipX) = exp(-scale |p|^alpha).

    Chambers-Mallows-Stuck in its symmetric form; alpha=1 degenerates to
    scale * tan(U).
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0,2)")
    if scale <= 0:
        raise ValueError("scale must be positive")
    shape = () if size is None else (size,)
    u = (rng.random(shape) - 0.5) * math.pi
    if alpha == 1.0:
        std = np.tan(u)
    else:
        w = -np.log1p(-rng.random(shape))
        std = (np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)
               * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha))
    out = scale ** (1.0 / alpha) * std
    return float(out) if size is None else out


@dataclass(frozen=True)
class TemperedSamplerConfig:
    """Cutoff data for the compound-Poisson + Gaussian-surrogate sampler."""

    eps: float
    rate: float              # jumps of size > eps per unit time (mass included)
    gauss_var_rate: float    # surrogate variance per unit time
    jump_cdf: np.ndarray     # CDF of the jump size law at jump_sizes
    jump_sizes: np.ndarray   # geometric size grid from eps

    def bias_exponent(self, alpha: float) -> float:
        return 2.0 - alpha


def tempered_sampler_config(spec: ModelSpec, eps: float) -> TemperedSamplerConfig:
    if eps <= 0:
        raise ValueError("eps must be positive")
    mass = spec.spectral.total_mass
    rate = mass * radial_tail_mass(spec.alpha, spec.tempering, eps)
    var = mass * radial_small_second_moment(spec.alpha, spec.tempering, eps)
    cdf, sizes = radial_jump_cdf(spec.alpha, spec.tempering, eps)
    return TemperedSamplerConfig(eps=eps, rate=rate, gauss_var_rate=var,
                                 jump_cdf=cdf, jump_sizes=sizes)


def default_eps(spec: ModelSpec, dt: float, frac: float = 0.10) -> float:
    """Largest dyadic eps whose Gaussian surrogate variance stays below frac
    of the squared stable-equivalent increment scale
    (dt mass c_alpha g(0+))^(2/alpha)."""
    mass = spec.spectral.total_mass
    g0 = float(spec.tempering.g(1e-12))
    scale = (dt * mass * g0 * stable_c_alpha(spec.alpha)) ** (1.0 / spec.alpha)
    target = frac * scale * scale
    eps = 1.0
    for _ in range(60):
        var = dt * mass * radial_small_second_moment(spec.alpha, spec.tempering, eps)
        if var <= target:
            return eps
        eps *= 0.5
    return eps


def sample_tempered_increment(spec: ModelSpec, dt: float, eps: float, rng,
                              size: Optional[int] = None,
                              config: Optional[TemperedSamplerConfig] = None,
                              rate_cap: float = 1e6):
    """Tempered increment over dt: Poisson jumps above eps + Gaussian below.

    Bias comes only from the surrogate and is O(eps^(2-alpha))-controlled.
    """
    if spec.d != 1:
        raise NotImplementedError("samplers are d=1")
    cfg = config or tempered_sampler_config(spec, eps)
    if cfg.rate * dt > rate_cap:
        raise ValueError(f"Poisson rate {cfg.rate * dt:.3g} exceeds cap {rate_cap:.3g}")
    m = 1 if size is None else size
    out = rng.standard_normal(m) * math.sqrt(cfg.gauss_var_rate * dt)
    # draw jumps in blocks so the flat jump arrays stay small
    block = max(1, int(2e6 / max(cfg.rate * dt, 1.0)))
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        counts = rng.poisson(cfg.rate * dt, hi - lo)
        total = int(counts.sum())
        jumps = np.interp(rng.random(total), cfg.jump_cdf, cfg.jump_sizes)
        signs = np.where(rng.random(total) < 0.5, -1.0, 1.0)
        idx = lo + np.repeat(np.arange(hi - lo), counts)
        np.add.at(out, idx, signs * jumps)
    return float(out[0]) if size is None else out


def export_symbol_csv(ev: SymbolEvaluator, p_values, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["p", "psi_Z"])
        for p in p_values:
            wr.writerow([repr(float(p)), repr(ev.noise_exponent(p))])
