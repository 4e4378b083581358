"""Resolvent of the linear drift and the intrinsic scale matrices.

R_{s,t} solves d/ds R_{s,t} = A_s R_{s,t}, R_{t,t} = I, integrated with a
fixed-step classical Runge-Kutta scheme in either time direction. The band
structure of A makes the first block column of R_{s,t} grow like
(s-t)^(i-1)/(i-1)! block-wise; `block_scaling_exponents` fits those powers
and extracts the non-degenerate prefactors. Scale matrices come in two kinds:
T_alpha with block i carrying u^((i-1)+1/alpha), and M with u^(i-1), related
by T^alpha_u = u^(1/alpha) M_u.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec


@dataclass(frozen=True)
class ScaleMatrix:
    """Diagonal scale matrix for one time lag u."""

    u: float
    kind: str          # "T_alpha" | "M"
    n: int
    d: int
    alpha: float

    def __post_init__(self):
        if self.u <= 0:
            raise ValueError("scale lag must be positive")
        if self.kind not in ("T_alpha", "M"):
            raise ValueError(f"unknown scale kind {self.kind!r}")

    @property
    def block_powers(self) -> np.ndarray:
        i = np.arange(1, self.n + 1, dtype=np.float64)
        if self.kind == "T_alpha":
            return (i - 1.0) + 1.0 / self.alpha
        return i - 1.0

    @property
    def diag(self) -> np.ndarray:
        return np.repeat(self.u ** self.block_powers, self.d)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    def inv_diag(self) -> np.ndarray:
        return np.repeat(self.u ** (-self.block_powers), self.d)

    def det(self) -> float:
        """Closed form; for T_alpha this is u^(d(n/alpha + n(n-1)/2))."""
        if self.kind == "T_alpha":
            expo = self.d * (self.n / self.alpha + self.n * (self.n - 1) / 2.0)
        else:
            expo = self.d * self.n * (self.n - 1) / 2.0
        return self.u ** expo

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.diag * np.asarray(x, dtype=np.float64)

    def apply_inv(self, x: np.ndarray) -> np.ndarray:
        return self.inv_diag() * np.asarray(x, dtype=np.float64)


def scale_T(spec_or_alpha, u: float, n: int = None, d: int = None) -> ScaleMatrix:
    if isinstance(spec_or_alpha, ModelSpec):
        return ScaleMatrix(u, "T_alpha", spec_or_alpha.n, spec_or_alpha.d,
                           spec_or_alpha.alpha)
    return ScaleMatrix(u, "T_alpha", n, d, spec_or_alpha)


def scale_M(spec_or_alpha, u: float, n: int = None, d: int = None) -> ScaleMatrix:
    if isinstance(spec_or_alpha, ModelSpec):
        return ScaleMatrix(u, "M", spec_or_alpha.n, spec_or_alpha.d,
                           spec_or_alpha.alpha)
    return ScaleMatrix(u, "M", n, d, spec_or_alpha)


def solve_resolvent(spec: ModelSpec, t: float, s: float,
                    step: float = 1.0 / 256.0) -> np.ndarray:
    """R_{s,t} by fixed-step RK4 from t to s (either direction)."""
    if step <= 0:
        raise ValueError("step must be positive")
    nd = spec.nd
    r = np.eye(nd)
    span = s - t
    if span == 0.0:
        return r
    m = max(1, math.ceil(abs(span) / step))
    h = span / m
    tau = t
    if not spec.time_dependent():
        a = spec.drift_matrix(0.0)
        for _ in range(m):
            r = _rk4_step(r, a, a, a, h)
        return r
    for _ in range(m):
        a0 = spec.drift_matrix(tau)
        a1 = spec.drift_matrix(tau + 0.5 * h)
        a2 = spec.drift_matrix(tau + h)
        r = _rk4_step(r, a0, a1, a2, h)
        tau += h
    return r


def _rk4_step(r: np.ndarray, a0: np.ndarray, a_mid: np.ndarray,
              a1: np.ndarray, h: float) -> np.ndarray:
    k1 = a0 @ r
    k2 = a_mid @ (r + 0.5 * h * k1)
    k3 = a_mid @ (r + 0.5 * h * k2)
    k4 = a1 @ (r + h * k3)
    return r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class ResolventTable:
    """All pair resolvents on a time grid, each integrated independently.

    Keeping the entries independent (rather than composing interval factors)
    makes the flow identity R_{s,u} R_{u,t} = R_{s,t} a real solver check;
    `flow_defect` reports its worst violation.
    """

    t_grid: np.ndarray
    values: dict               # (i_s, i_t) -> nd x nd array
    solver_step: float

    def value(self, s: float, t: float) -> np.ndarray:
        i_s = _grid_index(self.t_grid, s)
        i_t = _grid_index(self.t_grid, t)
        return self.values[(i_s, i_t)]

    def flow_defect(self) -> float:
        worst = 0.0
        g = len(self.t_grid)
        for i in range(g):
            for j in range(g):
                for k in range(g):
                    lhs = self.values[(i, k)] @ self.values[(k, j)]
                    worst = max(worst, float(np.max(np.abs(lhs - self.values[(i, j)]))))
        return worst

    def flow_tolerance(self) -> float:
        span = float(self.t_grid[-1] - self.t_grid[0])
        return 10.0 * self.solver_step ** 4 * max(span, 1.0)


def _grid_index(grid: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(grid - t)))
    if abs(grid[i] - t) > 1e-12:
        raise KeyError(f"time {t} not on the table grid")
    return i


def build_table(spec: ModelSpec, t_grid, step: float = 1.0 / 256.0) -> ResolventTable:
    grid = np.asarray(sorted(t_grid), dtype=np.float64)
    values = {}
    for i_s, s in enumerate(grid):
        for i_t, t in enumerate(grid):
            values[(i_s, i_t)] = (np.eye(spec.nd) if i_s == i_t
                                  else solve_resolvent(spec, t, s, step))
    return ResolventTable(t_grid=grid, values=values, solver_step=step)


@dataclass(frozen=True)
class BlockScaling:
    """Fitted lag powers of the first block column plus prefactor spectra."""

    slopes: np.ndarray         # (n,)
    sv_min: np.ndarray         # (n,) smallest singular value of R-bar^i
    sv_max: np.ndarray
    lags: np.ndarray

    def as_dict(self):
        return {"slopes": self.slopes.tolist(), "sv_min": self.sv_min.tolist(),
                "sv_max": self.sv_max.tolist(), "lags": self.lags.tolist()}


def block_scaling_exponents(spec: ModelSpec, t: float, lags,
                            step: float = None, cond_cap: float = 1e8) -> BlockScaling:
    """Per-block log-log slope of ||R^{i,1}_{t+u,t}|| against u.

    The prefactor R-bar^i = (i-1)! u^(1-i) R^{i,1} must stay far from
    singular; a blow-up of its condition number signals either a degenerate
    sub-diagonal or a horizon too large for the small-time structure.
    """
    lags = np.asarray(sorted(lags), dtype=np.float64)
    if lags[0] <= 0:
        raise ValueError("lags must be positive")
    if lags[-1] / lags[0] < 50.0:
        raise ValueError("lags should span at least two decades")
    n, d = spec.n, spec.d
    norms = np.zeros((len(lags), n))
    sv_min = np.full(n, np.inf)
    sv_max = np.zeros(n)
    for k, u in enumerate(lags):
        h = step if step is not None else u / 16.0
        r = solve_resolvent(spec, t, t + u, h)
        for i in range(1, n + 1):
            blk = r[(i - 1) * d: i * d, 0: d]
            norms[k, i - 1] = np.linalg.norm(blk, 2)
            rbar = blk * math.factorial(i - 1) / u ** (i - 1)
            s = np.linalg.svd(rbar, compute_uv=False)
            sv_min[i - 1] = min(sv_min[i - 1], float(s[-1]))
            sv_max[i - 1] = max(sv_max[i - 1], float(s[0]))
    for i in range(n):
        if sv_min[i] <= 0 or sv_max[i] / sv_min[i] > cond_cap:
            raise ValueError(
                f"prefactor of block ({i + 1},1) is numerically singular "
                f"(sv range [{sv_min[i]:.3g}, {sv_max[i]:.3g}]): degenerate "
                "sub-diagonal or horizon too large")
    slopes = np.array([np.polyfit(np.log(lags), np.log(norms[:, i]), 1)[0]
                       for i in range(n)])
    return BlockScaling(slopes=slopes, sv_min=sv_min, sv_max=sv_max, lags=lags)


def hat_resolvent(spec: ModelSpec, t: float, big_t: float, u: float,
                  step: float = None) -> np.ndarray:
    """Rescaled resolvent (T^alpha_{T-t})^-1 R_{t+u(T-t),T} T^alpha_{T-t}."""
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must lie in [0,1]")
    if not t < big_t:
        raise ValueError("need t < T")
    lag = big_t - t
    h = step if step is not None else lag / 64.0
    r = solve_resolvent(spec, big_t, t + u * lag, h)
    ts = scale_T(spec, lag)
    return (ts.inv_diag()[:, None] * r) * ts.diag[None, :]


def hat_norm_envelope(spec: ModelSpec, t: float, big_t: float,
                      u_count: int = 65) -> tuple:
    """Operator norms of the rescaled resolvent over u in [0,1], plus sup."""
    us = np.linspace(0.0, 1.0, u_count)
    norms = np.array([np.linalg.norm(hat_resolvent(spec, t, big_t, u), 2)
                      for u in us])
    return norms, float(norms.max())


# ---------------------------------------------------------------------------
# dumps


def table_to_csv(table: ResolventTable, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "t", "row", "col", "value"])
        g = table.t_grid
        for (i_s, i_t), mat in sorted(table.values.items()):
            for r in range(mat.shape[0]):
                for c in range(mat.shape[1]):
                    wr.writerow([repr(float(g[i_s])), repr(float(g[i_t])),
                                 r, c, repr(float(mat[r, c]))])


def scaling_diagnostics_json(report: BlockScaling, path: str = None) -> str:
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
