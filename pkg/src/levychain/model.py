"""Problem instances and assumption checks.

A model is the chain (n, d, alpha) together with the banded drift blocks
a^{i,j} (zero strictly below the first sub-diagonal), a diffusion coefficient
acting on the first block only, the angular weights of the driving noise, a
tempering choice, and the constants entering the standing assumptions. The
assumptions themselves are universally quantified; `validate_assumptions`
replaces the quantifiers with seeded sampling and reports worst-case ratios,
which is the strongest check a numerical instance admits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tempering import Tempering


@dataclass(frozen=True)
class BlockProfile:
    """Time profile of one d x d drift block: constant or affine in t."""

    c0: np.ndarray
    c1: Optional[np.ndarray] = None

    @property
    def kind(self) -> str:
        return "constant" if self.c1 is None else "affine"

    def __call__(self, t: float) -> np.ndarray:
        if self.c1 is None:
            return self.c0
        return self.c0 + t * self.c1

    @staticmethod
    def constant(value, d: int = 1) -> "BlockProfile":
        m = np.atleast_2d(np.asarray(value, dtype=np.float64))
        if m.shape != (d, d):
            raise ValueError(f"block must be {d}x{d}, got {m.shape}")
        return BlockProfile(c0=m)

    @staticmethod
    def affine(c0, c1, d: int = 1) -> "BlockProfile":
        m0 = np.atleast_2d(np.asarray(c0, dtype=np.float64))
        m1 = np.atleast_2d(np.asarray(c1, dtype=np.float64))
        if m0.shape != (d, d) or m1.shape != (d, d):
            raise ValueError(f"blocks must be {d}x{d}")
        return BlockProfile(c0=m0, c1=m1)


@dataclass(frozen=True)
class SigmaSpec:
    """Diffusion coefficient on the first block.

    Affine forms are scalar (d=1) and clamp each coordinate at clip_radius
    before applying the slope, so the coefficient stays inside fixed
    ellipticity bars no matter how far a path wanders:

        sigma(t, x) = c0 + sum_i c[i] * clip(x_i, -clip_radius, clip_radius).

    dependence "fast-only" zeroes the slope on the first block, "constant"
    zeroes all slopes.
    """

    dependence: str                 # "constant" | "fast-only" | "full"
    c0: float = 1.0
    coeffs: tuple = ()              # one slope per block, length n
    clip_radius: float = 1.0

    def __post_init__(self):
        if self.dependence not in ("constant", "fast-only", "full"):
            raise ValueError(f"unknown sigma dependence {self.dependence!r}")
        lo = self.c0 - self.clip_radius * sum(abs(c) for c in self.coeffs)
        if lo <= 0:
            raise ValueError("sigma can reach 0: shrink slopes or clip_radius")

    def bounds(self) -> tuple:
        spread = self.clip_radius * sum(abs(c) for c in self.coeffs)
        return (self.c0 - spread, self.c0 + spread)

    def arrays(self, n: int) -> tuple:
        """(c0, per-block slopes, clip) as arrays for the path kernel."""
        c = np.zeros(n)
        c[: len(self.coeffs)] = self.coeffs
        return self.c0, c, self.clip_radius

    def __call__(self, t: float, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        val = self.c0
        for i, ci in enumerate(self.coeffs):
            if ci != 0.0:
                val += ci * float(np.clip(x[..., i], -self.clip_radius, self.clip_radius))
        return val


def sigma_constant(value: float = 1.0) -> SigmaSpec:
    return SigmaSpec(dependence="constant", c0=value)


def sigma_fast_affine(c0: float, slope: float, clip_radius: float = 1.0,
                      n: int = 2) -> SigmaSpec:
    """sigma depending only on the transported blocks (not the noisy one)."""
    coeffs = [0.0] * n
    for i in range(1, n):
        coeffs[i] = slope
    return SigmaSpec(dependence="fast-only", c0=c0, coeffs=tuple(coeffs),
                     clip_radius=clip_radius)


def sigma_full_affine(c0: float, slopes, clip_radius: float = 1.0) -> SigmaSpec:
    return SigmaSpec(dependence="full", c0=c0, coeffs=tuple(slopes),
                     clip_radius=clip_radius)


@dataclass(frozen=True)
class SpectralMeasure:
    """Angular part of the jump measure.

    d=1 stores the two weights on {-1,+1}; only the symmetric case is
    supported (the driving noise is symmetric). d>=2 stores a density on the
    sphere with a fixed quadrature, used by the assumption and symbol checks.
    """

    d: int
    w_minus: float = 0.5
    w_plus: float = 0.5
    h_fn: Optional[object] = field(default=None, repr=False)
    quad_points: int = 128

    def __post_init__(self):
        if self.d == 1:
            if self.w_minus <= 0 or self.w_plus <= 0:
                raise ValueError("angular weights must be positive")
            if not math.isclose(self.w_minus, self.w_plus, rel_tol=1e-12):
                raise ValueError("asymmetric angular weights are not supported")
        elif self.h_fn is None:
            raise ValueError("d >= 2 needs a spherical density callable")

    @property
    def total_mass(self) -> float:
        if self.d == 1:
            return self.w_minus + self.w_plus
        nodes, w = self.quadrature()
        return float(np.sum(w * self.h_fn(nodes)))

    def quadrature(self):
        """(nodes, weights) on S^{d-1}; nodes shape (m, d)."""
        if self.d == 1:
            return (np.array([[-1.0], [1.0]]),
                    np.array([self.w_minus, self.w_plus]))
        if self.d == 2:
            ang = (np.arange(self.quad_points) + 0.5) * (2 * np.pi / self.quad_points)
            nodes = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            w = np.full(self.quad_points, 2 * np.pi / self.quad_points)
            return nodes, w
        # Fibonacci lattice, equal weights
        m = self.quad_points
        k = np.arange(m) + 0.5
        phi = np.arccos(1 - 2 * k / m)
        theta = np.pi * (1 + 5 ** 0.5) * k
        nodes = np.stack([np.sin(phi) * np.cos(theta),
                          np.sin(phi) * np.sin(theta),
                          np.cos(phi)], axis=1)
        w = np.full(m, 4 * np.pi / m)
        return nodes, w

    def directional_moment(self, u: np.ndarray, alpha: float) -> float:
        """integral over the sphere of |<u, s>|^alpha."""
        nodes, w = self.quadrature()
        dens = (np.array([self.w_minus, self.w_plus]) / w if self.d == 1
                else self.h_fn(nodes))
        return float(np.sum(w * dens * np.abs(nodes @ np.asarray(u)) ** alpha))


@dataclass(frozen=True)
class ModelSpec:
    """One full problem instance. Immutable; shared freely across modules."""

    n: int
    d: int
    alpha: float
    a_blocks: dict                    # (i, j) 1-based -> BlockProfile
    sigma: SigmaSpec
    spectral: SpectralMeasure
    tempering: Tempering
    holder_eta: float = 1.0
    holder_H: float = 1.0
    kappa: float = 1.0
    lam: float = 1.0
    alpha_low: float = 1.0
    alpha_bar: float = 1.0
    threshold_K: float = 1.0
    delta: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        _check_basic(self)
        for (i, j) in self.a_blocks:
            if not (1 <= i <= self.n and max(i - 1, 1) <= j <= self.n):
                raise ValueError(f"block ({i},{j}) lies outside the band")
        if self.sigma.dependence != "constant" and self.d != 1:
            raise ValueError("state-dependent sigma is implemented for d=1 only")

    @property
    def nd(self) -> int:
        return self.n * self.d

    def block(self, i: int, j: int) -> BlockProfile:
        zero = BlockProfile(c0=np.zeros((self.d, self.d)))
        return self.a_blocks.get((i, j), zero)

    def drift_matrix(self, t: float) -> np.ndarray:
        """Assemble A_t; blocks strictly below the first sub-diagonal are 0."""
        d, n = self.d, self.n
        a = np.zeros((n * d, n * d))
        for (i, j), prof in self.a_blocks.items():
            a[(i - 1) * d: i * d, (j - 1) * d: j * d] = prof(t)
        return a

    def sigma_eval(self, t: float, x) -> float:
        return self.sigma(t, x)

    def time_dependent(self) -> bool:
        return any(p.kind == "affine" for p in self.a_blocks.values())


def _check_basic(spec: ModelSpec) -> None:
    if not 0.0 < spec.alpha < 2.0:
        raise ValueError(f"alpha must lie in (0,2), got {spec.alpha}")
    if spec.n < 2:
        raise ValueError(f"need n >= 2 oscillator blocks, got {spec.n}")
    if spec.d < 1:
        raise ValueError("d must be >= 1")
    if not 0.0 < spec.holder_eta <= 1.0:
        raise ValueError("holder exponent must lie in (0,1]")
    for name in ("kappa", "lam"):
        if getattr(spec, name) < 1.0:
            raise ValueError(f"{name} must be >= 1")
    if spec.threshold_K <= 0 or spec.delta <= 0:
        raise ValueError("threshold_K and delta must be positive")


def integrator_chain(n: int = 2, d: int = 1, alpha: float = 1.5,
                     sigma: Optional[SigmaSpec] = None,
                     tempering: Optional[Tempering] = None,
                     sub_diagonal: float = 1.0,
                     extra_blocks: Optional[dict] = None,
                     **consts) -> ModelSpec:
    """The workhorse instance: a^{i,i-1} = sub_diagonal, rest zero.

    extra_blocks merges additional BlockProfile entries on top of the chain.
    Keyword constants pass straight to ModelSpec.
    """
    blocks = {(i, i - 1): BlockProfile.constant(sub_diagonal * np.eye(d), d)
              for i in range(2, n + 1)}
    if extra_blocks:
        blocks.update(extra_blocks)
    sig = sigma or sigma_constant(1.0)
    temp = tempering or Tempering("none")
    smin, smax = sig.bounds()
    horizon = consts.get("horizon", 1.0)
    band = max(float(np.linalg.norm(p(t), 2))
               for p in blocks.values() for t in (0.0, horizon))
    defaults = dict(
        kappa=max(1.0, smax ** 2, 1.0 / smin ** 2),
        lam=1.0,
        alpha_low=abs(sub_diagonal),
        alpha_bar=band,
        holder_eta=1.0,
        holder_H=max(1e-12, sum(abs(c) for c in sig.coeffs))
        if sig.dependence != "constant" else 1.0,
    )
    defaults.update(consts)
    return ModelSpec(n=n, d=d, alpha=alpha, a_blocks=blocks, sigma=sig,
                     spectral=SpectralMeasure(d=d), tempering=temp, **defaults)


# ---------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    lo: float
    hi: float
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "lo": self.lo, "hi": self.hi, "note": self.note}


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple
    seed: int
    sample_count: int

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"seed": self.seed, "sample_count": self.sample_count,
                "all_passed": self.all_passed,
                "checks": [c.as_dict() for c in self.checks]}

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            verdict = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name:12s} {verdict}  range [{c.lo:.6g}, {c.hi:.6g}]"
                         + (f"  ({c.note})" if c.note else ""))
        return "\n".join(lines)


def _unit_vectors(rng, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def validate_assumptions(spec: ModelSpec, sample_count: int = 256,
                         rng_seed: int = 0) -> AssumptionReport:
    """Sampled worst-ratio verdicts for the five standing assumptions.

    Deterministic given (spec, rng_seed). Sampling replaces the universal
    quantifiers: times on a grid over the horizon, unit directions and states
    from the seeded generator, radii on a dyadic ladder for the tempering
    envelope.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    _check_basic(spec)
    for i in range(2, spec.n + 1):
        if (i, i - 1) not in spec.a_blocks:
            raise ValueError(f"missing required sub-diagonal block ({i},{i - 1})")

    rng = np.random.default_rng(rng_seed)
    t_grid = np.linspace(0.0, spec.horizon, max(4, sample_count // 16))
    checks = []

    # [H-1] Hölder continuity of sigma in space, uniform in time
    states = rng.standard_normal((sample_count, spec.nd)) * 2.0
    states2 = states + rng.standard_normal((sample_count, spec.nd)) * \
        np.exp(rng.uniform(-8, 1, (sample_count, 1)))
    worst = 0.0
    for t in t_grid:
        for x, y in zip(states, states2):
            dist = float(np.linalg.norm(x - y))
            if dist == 0.0:
                continue
            dev = abs(spec.sigma(t, x) - spec.sigma(t, y))
            worst = max(worst, dev / dist ** spec.holder_eta)
    checks.append(CheckResult("H1-holder", worst <= spec.holder_H * (1 + 1e-9),
                              0.0, worst, f"H={spec.holder_H:g}"))

    # [H-2] uniform ellipticity of sigma sigma^T on the first block
    lo, hi = math.inf, 0.0
    xis = _unit_vectors(rng, max(4, sample_count // 8), spec.d)
    for t in t_grid:
        for x in states[: max(4, sample_count // 8)]:
            s = spec.sigma(t, x)   # scalar coefficient, sigma sigma^T = s^2 I
            lo, hi = min(lo, s * s), max(hi, s * s)
    ok = lo >= 1.0 / spec.kappa * (1 - 1e-9) and hi <= spec.kappa * (1 + 1e-9)
    checks.append(CheckResult("H2-elliptic", ok, lo, hi, f"kappa={spec.kappa:g}"))

    # [H-3] non-degenerate sub-diagonal, bounded band blocks
    lo, hi, bandmax = math.inf, -math.inf, 0.0
    for t in t_grid:
        for i in range(2, spec.n + 1):
            blk = spec.block(i, i - 1)(t)
            for xi in xis:
                q = float(xi @ blk @ xi)
                lo, hi = min(lo, q), max(hi, q)
        for (i, j) in spec.a_blocks:
            bandmax = max(bandmax, float(np.linalg.norm(spec.block(i, j)(t), 2)))
    ok = (lo >= spec.alpha_low * (1 - 1e-9) and hi <= spec.alpha_bar * (1 + 1e-9)
          and bandmax <= spec.alpha_bar * (1 + 1e-9))
    checks.append(CheckResult("H3-hormander", ok, lo, max(hi, bandmax),
                              f"alpha_low={spec.alpha_low:g} alpha_bar={spec.alpha_bar:g}"))

    # [H-4] non-degeneracy of the angular measure
    us = _unit_vectors(rng, max(4, sample_count // 8), spec.d)
    lo, hi = math.inf, 0.0
    for u in us:
        m = spec.spectral.directional_moment(u, spec.alpha)
        lo, hi = min(lo, m), max(hi, m)
    ok = lo >= 1.0 / spec.lam * (1 - 1e-9) and hi <= spec.lam * (1 + 1e-9)
    checks.append(CheckResult("H4-spectral", ok, lo, hi, f"lambda={spec.lam:g}"))

    # [T] tempering envelope and doubling
    temp = spec.tempering
    if temp.is_stable:
        checks.append(CheckResult("T-tempering", True, 1.0, 1.0, "stable case"))
    else:
        r = np.geomspace(2.0 ** -10, 2.0 ** 10, 2048)
        theta_r = temp.theta(r)
        doubling = float(np.max(theta_r / temp.theta(2 * r)))
        # envelope: g(r) + r sup_u |g'(u r)| <= c theta(r), u in the ellipticity bars
        smin, smax = 1.0 / math.sqrt(spec.kappa), math.sqrt(spec.kappa)
        ugrid = np.geomspace(smin, smax, 9)
        h = 1e-6
        sup_gp = np.zeros_like(r)
        for u in ugrid:
            ur = u * r
            gp = np.abs((temp.g(ur * (1 + h)) - temp.g(ur * (1 - h))) / (2 * h * ur))
            sup_gp = np.maximum(sup_gp, gp)
        envelope_c = float(np.max((temp.g(r) + r * sup_gp) / theta_r))
        theta_bounded = float(np.max(theta_r)) < math.inf
        theta_monotone = bool(np.all(np.diff(theta_r) <= 1e-12))
        big = temp.big_theta(np.geomspace(1.0, 2.0 ** 20, 64))
        theta_vanish = bool(big[-1] < 1e-2) and bool(np.all(np.diff(big) <= 1e-12))
        ok = (doubling < math.inf and theta_bounded and theta_monotone
              and theta_vanish and envelope_c < math.inf)
        checks.append(CheckResult(
            "T-tempering", ok, envelope_c, doubling,
            f"doubling D={doubling:.6g}, envelope c={envelope_c:.6g}"))

    return AssumptionReport(checks=tuple(checks), seed=rng_seed,
                            sample_count=sample_count)
