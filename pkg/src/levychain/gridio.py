"""File formats: density grids, model files, run artifacts.

Density grids travel in two layouts. The CSV holds one row per node in
coordinate order (z1, z2, ..., value), preceded by comment lines carrying
the metadata as JSON; it reads straight into gnuplot or pandas. The binary
layout is for bulk storage: magic ``LCGRID1\\n``, then ndim as a little
endian uint32, then per axis (length uint32, origin float64, step float64),
then the values row major as little-endian float64. The binary drops the
metadata on purpose, write the CSV next to it when provenance matters.

Model files are TOML, read with tomli. The emitter below writes the few
shapes the schema needs (scalars, lists, tables, one array of tables), so
saved files parse back to an equal ModelSpec; custom tempering and d >= 2
spherical densities hold callables and cannot be serialized.
"""

from __future__ import annotations

import io
import json
import struct
from typing import Optional

import numpy as np
import tomli

from .frozen import DensityGrid
from .model import (BlockProfile, ModelSpec, SigmaSpec, SpectralMeasure,
                    integrator_chain, sigma_constant, sigma_fast_affine,
                    sigma_full_affine)
from .tempering import Tempering

_MAGIC = b"LCGRID1\n"


# --------------------------------------------------------------------------
# density grids


def write_grid_csv(grid: DensityGrid, path) -> None:
    meta = {k: v for k, v in grid.metadata.items()
            if isinstance(v, (int, float, str, bool, list, tuple, type(None)))}
    nd = len(grid.axes)
    with open(path, "w") as fh:
        fh.write("# levychain density grid\n")
        fh.write("# metadata: " + json.dumps(_plain(meta), sort_keys=True) + "\n")
        fh.write(",".join(f"z{k + 1}" for k in range(nd)) + ",value\n")
        mesh = np.meshgrid(*grid.axes, indexing="ij")
        cols = [m.ravel() for m in mesh] + [grid.values.ravel()]
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack(cols), delimiter=",", fmt="%.17g")
        fh.write(buf.getvalue())


def read_grid_csv(path) -> DensityGrid:
    meta = {}
    skip = 0
    header = None
    with open(path) as fh:
        for line in fh:
            skip += 1
            if line.startswith("# metadata: "):
                meta = json.loads(line[len("# metadata: "):])
            elif not line.startswith("#"):
                header = line.strip().split(",")
                break
    if header is None or header[-1] != "value":
        raise ValueError(f"{path} is not a density grid csv")
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    nd = len(header) - 1
    cols = [data[:, k] for k in range(nd + 1)]
    axes = [np.unique(c) for c in cols[:nd]]
    shape = tuple(ax.shape[0] for ax in axes)
    if int(np.prod(shape)) != cols[0].shape[0]:
        raise ValueError("grid csv does not cover a full rectangle")
    # rows were written in ij-mesh order; re-sorting keys makes the reader
    # robust to row shuffling
    order = np.lexsort(tuple(cols[k] for k in reversed(range(nd))))
    values = cols[nd][order].reshape(shape)
    return DensityGrid(axes=axes, values=values, metadata=dict(meta))


def write_grid_binary(grid: DensityGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(grid.axes)))
        for ax in grid.axes:
            fh.write(struct.pack("<Idd", ax.shape[0], float(ax[0]),
                                 float(ax[1] - ax[0])))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_grid_binary(path) -> DensityGrid:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a levychain grid file")
        nd, = struct.unpack("<I", fh.read(4))
        axes = []
        for _ in range(nd):
            n, origin, step = struct.unpack("<Idd", fh.read(20))
            axes.append(origin + step * np.arange(n))
        values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    shape = tuple(ax.shape[0] for ax in axes)
    if values.shape[0] != int(np.prod(shape)):
        raise ValueError(f"{path}: value count does not match the header")
    return DensityGrid(axes=axes, values=values.reshape(shape),
                       metadata={"source": "binary"})


# --------------------------------------------------------------------------
# model files


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        r = repr(float(v))
        return r if ("." in r or "e" in r or "n" in r) else r + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to a model file")


def _toml_table(name: str, table: dict, array: bool = False) -> str:
    head = f"[[{name}]]\n" if array else f"[{name}]\n"
    return head + "".join(f"{k} = {_toml_value(v)}\n"
                          for k, v in table.items() if v is not None)


def model_to_toml(spec: ModelSpec) -> str:
    if spec.tempering.kind == "custom":
        raise ValueError("custom tempering holds callables; not serializable")
    if spec.d != 1:
        raise ValueError("model files cover d = 1 (spherical densities are "
                         "callables)")
    sig = spec.sigma
    sigma_tbl = {"form": {"constant": "constant",
                          "fast-only": "fast-only-affine",
                          "full": "full-affine"}[sig.dependence],
                 "c0": sig.c0}
    if sig.dependence == "fast-only":
        sigma_tbl["slope"] = sig.coeffs[1] if len(sig.coeffs) > 1 else 0.0
        sigma_tbl["clip_radius"] = sig.clip_radius
    elif sig.dependence == "full":
        sigma_tbl["slopes"] = list(sig.coeffs)
        sigma_tbl["clip_radius"] = sig.clip_radius
    temp_tbl = {"kind": spec.tempering.kind}
    if spec.tempering.kind == "exponential":
        temp_tbl["c"] = spec.tempering.c
    elif spec.tempering.kind == "polynomial":
        temp_tbl["m"] = spec.tempering.m
    consts = {name: getattr(spec, name) for name in
              ("holder_eta", "holder_H", "kappa", "lam", "alpha_low",
               "alpha_bar", "threshold_K", "delta", "horizon")}
    parts = [f"n = {spec.n}\nd = {spec.d}\nalpha = {_toml_value(spec.alpha)}\n",
             _toml_table("sigma", sigma_tbl),
             _toml_table("tempering", temp_tbl),
             _toml_table("spectral", {"w_minus": spec.spectral.w_minus,
                                      "w_plus": spec.spectral.w_plus}),
             _toml_table("constants", consts)]
    for (i, j) in sorted(spec.a_blocks):
        prof = spec.a_blocks[(i, j)]
        tbl = {"i": i, "j": j, "profile": prof.kind,
               "c0": _plain(prof.c0)}
        if prof.c1 is not None:
            tbl["c1"] = _plain(prof.c1)
        parts.append(_toml_table("block", tbl, array=True))
    return "\n".join(parts)


def save_model(spec: ModelSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_toml(spec))


def _sigma_from_table(tbl: dict, n: int) -> SigmaSpec:
    form = tbl.get("form", "constant")
    if form == "constant":
        return sigma_constant(float(tbl.get("c0", 1.0)))
    if form == "fast-only-affine":
        return sigma_fast_affine(float(tbl.get("c0", 1.0)),
                                 float(tbl.get("slope", 0.0)),
                                 clip_radius=float(tbl.get("clip_radius", 1.0)),
                                 n=n)
    if form == "full-affine":
        return sigma_full_affine(float(tbl.get("c0", 1.0)),
                                 [float(v) for v in tbl.get("slopes", [])],
                                 clip_radius=float(tbl.get("clip_radius", 1.0)))
    raise ValueError(f"unknown sigma form {form!r}")


def load_model(path) -> ModelSpec:
    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    n = int(doc.get("n", 2))
    d = int(doc.get("d", 1))
    alpha = float(doc.get("alpha", 1.5))
    sigma = _sigma_from_table(doc.get("sigma", {}), n)
    ttbl = doc.get("tempering", {"kind": "none"})
    temp = Tempering(ttbl.get("kind", "none"), c=float(ttbl.get("c", 1.0)),
                     m=float(ttbl.get("m", 2.0)))
    consts = {k: float(v) for k, v in doc.get("constants", {}).items()}
    if "block" not in doc:
        return integrator_chain(n=n, d=d, alpha=alpha, sigma=sigma,
                                tempering=temp,
                                sub_diagonal=float(doc.get("sub_diagonal", 1.0)),
                                **consts)
    blocks = {}
    for tbl in doc["block"]:
        c0 = np.asarray(tbl["c0"], dtype=np.float64)
        prof = (BlockProfile.affine(c0, np.asarray(tbl["c1"]), d)
                if tbl.get("profile", "constant") == "affine"
                else BlockProfile.constant(c0, d))
        blocks[(int(tbl["i"]), int(tbl["j"]))] = prof
    stbl = doc.get("spectral", {})
    spectral = SpectralMeasure(d=d, w_minus=float(stbl.get("w_minus", 0.5)),
                               w_plus=float(stbl.get("w_plus", 0.5)))
    return ModelSpec(n=n, d=d, alpha=alpha, a_blocks=blocks, sigma=sigma,
                     spectral=spectral, tempering=temp, **consts)


# --------------------------------------------------------------------------
# run artifacts


def write_ensemble_csv(rows: list, path) -> None:
    cols = ["time", "component", "median", "iqr", "q999", "flagged", "n"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.17g}" if isinstance(row[c], float)
                              else str(row[c]) for c in cols) + "\n")


def write_report_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


_RAMP = np.array([[0.050, 0.030, 0.270],
                  [0.220, 0.350, 0.550],
                  [0.130, 0.620, 0.530],
                  [0.600, 0.800, 0.270],
                  [0.990, 0.910, 0.140]])


def _ramp_color(v: float) -> str:
    u = min(max(v, 0.0), 1.0) * (_RAMP.shape[0] - 1)
    k = min(int(u), _RAMP.shape[0] - 2)
    c = _RAMP[k] + (u - k) * (_RAMP[k + 1] - _RAMP[k])
    return "#{:02x}{:02x}{:02x}".format(*(int(255 * x + 0.5) for x in c))


def svg_heatmap(grid: DensityGrid, path, max_cells: int = 128,
                gamma: float = 0.35) -> None:
    """Static heatmap of a 2D grid, block-averaged down to max_cells.

    Values are shown on the scale value**gamma so heavy tails stay visible
    next to the diagonal peak.
    """
    vals = grid.values
    if vals.ndim != 2:
        raise ValueError("heatmaps are for 2D grids")
    f1 = max(1, -(-vals.shape[0] // max_cells))
    f2 = max(1, -(-vals.shape[1] // max_cells))
    n1, n2 = vals.shape[0] // f1, vals.shape[1] // f2
    pooled = vals[:n1 * f1, :n2 * f2].reshape(n1, f1, n2, f2).mean(axis=(1, 3))
    top = pooled.max()
    norm = (np.maximum(pooled, 0.0) / top) ** gamma if top > 0 else pooled * 0
    cell = max(3, 512 // max(n1, n2))
    w, h = n2 * cell, n1 * cell
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
           f'height="{h}" viewBox="0 0 {w} {h}">']
    # row 0 is the smallest z1, drawn at the bottom
    for i in range(n1):
        for j in range(n2):
            out.append(f'<rect x="{j * cell}" y="{(n1 - 1 - i) * cell}" '
                       f'width="{cell}" height="{cell}" '
                       f'fill="{_ramp_color(float(norm[i, j]))}"/>')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(out))
