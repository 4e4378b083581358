"""Model files: a small TOML subset, parsed and emitted by hand.

The runtime targets Python 3.10 (no tomllib) and the only structures needed
are scalars, flat arrays, and row-major matrices, so the reader below sticks
to that subset: `[section.sub]` headers, `key = value` lines, `#` comments,
strings in double quotes, booleans, numbers, and bracketed arrays. Floats are
emitted with repr so a save/load cycle reproduces the model bit for bit.

Schema (all sections except blocks and constants have defaults):

    n = 2
    d = 1
    alpha = 1.5

    [blocks.2_1]              # drift block a^{2,1}
    profile = "constant"      # or "affine" with an extra c1
    c0 = [[1.0]]

    [sigma]
    form = "constant"         # "fast-only-affine" | "full-affine"
    c0 = 1.0
    slope = 0.3               # fast-only-affine only
    coeffs = [0.0, 0.3]       # full-affine only
    clip_radius = 1.0

    [spectral]
    w_minus = 0.5
    w_plus = 0.5

    [tempering]
    kind = "none"             # "exponential" (c) | "polynomial" (m)

    [constants]
    holder_eta = 1.0
    ...                       # any ModelSpec constant field
"""

from __future__ import annotations

import numpy as np

from .model import (BlockProfile, ModelSpec, SigmaSpec, SpectralMeasure,
                    sigma_constant, sigma_fast_affine, sigma_full_affine)
from .tempering import Tempering

_CONSTANT_FIELDS = ("holder_eta", "holder_H", "kappa", "lam", "alpha_low",
                    "alpha_bar", "threshold_K", "delta", "horizon")


class ModelFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reader


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_scalar(tok: str, lineno: int):
    tok = tok.strip()
    if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
        return tok[1:-1]
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        if any(c in tok for c in ".eE") or tok in ("inf", "-inf", "nan"):
            return float(tok)
        return int(tok)
    except ValueError:
        raise ModelFileError(f"line {lineno}: cannot parse value {tok!r}")


def _parse_value(tok: str, lineno: int):
    tok = tok.strip()
    if not tok.startswith("["):
        return _parse_scalar(tok, lineno)
    # recursive array parse over a bracketed token
    pos = 0

    def parse_array() -> list:
        nonlocal pos
        assert tok[pos] == "["
        pos += 1
        items = []
        while True:
            while pos < len(tok) and tok[pos] in " ,":
                pos += 1
            if pos >= len(tok):
                raise ModelFileError(f"line {lineno}: unterminated array")
            if tok[pos] == "]":
                pos += 1
                return items
            if tok[pos] == "[":
                items.append(parse_array())
            else:
                end = pos
                while end < len(tok) and tok[end] not in ",]":
                    end += 1
                items.append(_parse_scalar(tok[pos:end], lineno))
                pos = end

    arr = parse_array()
    if tok[pos:].strip():
        raise ModelFileError(f"line {lineno}: trailing text after array")
    return arr


def parse_toml(text: str) -> dict:
    """Parse the supported TOML subset into nested dicts."""
    root: dict = {}
    section = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ModelFileError(f"line {lineno}: malformed section header")
            section = root
            for part in line[1:-1].strip().split("."):
                if not part:
                    raise ModelFileError(f"line {lineno}: empty section name")
                section = section.setdefault(part, {})
                if not isinstance(section, dict):
                    raise ModelFileError(f"line {lineno}: section clashes with key")
            continue
        if "=" not in line:
            raise ModelFileError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ModelFileError(f"line {lineno}: empty key")
        section[key] = _parse_value(val, lineno)
    return root


# ---------------------------------------------------------------------------
# emitter


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise ModelFileError(f"cannot serialize {type(v).__name__}")


def _matrix_rows(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(m)]


def model_to_toml(spec: ModelSpec) -> str:
    if spec.tempering.kind == "custom":
        raise ModelFileError("custom tempering callables cannot be saved")
    if spec.spectral.d != 1 and spec.spectral.h_fn is not None:
        raise ModelFileError("spherical density callables cannot be saved")
    lines = [f"n = {spec.n}", f"d = {spec.d}", f"alpha = {_fmt(float(spec.alpha))}", ""]
    for (i, j) in sorted(spec.a_blocks):
        prof = spec.a_blocks[(i, j)]
        lines.append(f"[blocks.{i}_{j}]")
        lines.append(f'profile = "{prof.kind}"')
        lines.append(f"c0 = {_fmt(_matrix_rows(prof.c0))}")
        if prof.c1 is not None:
            lines.append(f"c1 = {_fmt(_matrix_rows(prof.c1))}")
        lines.append("")
    sig = spec.sigma
    lines.append("[sigma]")
    if sig.dependence == "constant":
        lines.append('form = "constant"')
        lines.append(f"c0 = {_fmt(float(sig.c0))}")
    elif sig.dependence == "fast-only":
        lines.append('form = "fast-only-affine"')
        lines.append(f"c0 = {_fmt(float(sig.c0))}")
        slope = next((c for c in sig.coeffs if c != 0.0), 0.0)
        lines.append(f"slope = {_fmt(float(slope))}")
        lines.append(f"clip_radius = {_fmt(float(sig.clip_radius))}")
    else:
        lines.append('form = "full-affine"')
        lines.append(f"c0 = {_fmt(float(sig.c0))}")
        lines.append(f"coeffs = {_fmt([float(c) for c in sig.coeffs])}")
        lines.append(f"clip_radius = {_fmt(float(sig.clip_radius))}")
    lines.append("")
    lines.append("[spectral]")
    lines.append(f"w_minus = {_fmt(float(spec.spectral.w_minus))}")
    lines.append(f"w_plus = {_fmt(float(spec.spectral.w_plus))}")
    lines.append("")
    temp = spec.tempering
    lines.append("[tempering]")
    lines.append(f'kind = "{temp.kind}"')
    if temp.kind == "exponential":
        lines.append(f"c = {_fmt(float(temp.c))}")
    elif temp.kind == "polynomial":
        lines.append(f"m = {_fmt(float(temp.m))}")
    lines.append("")
    lines.append("[constants]")
    for name in _CONSTANT_FIELDS:
        lines.append(f"{name} = {_fmt(float(getattr(spec, name)))}")
    lines.append("")
    return "\n".join(lines)


def model_from_toml(text: str) -> ModelSpec:
    data = parse_toml(text)
    try:
        n = int(data["n"])
        d = int(data["d"])
        alpha = float(data["alpha"])
    except KeyError as exc:
        raise ModelFileError(f"missing top-level field {exc.args[0]!r}")

    blocks = {}
    for key, body in data.get("blocks", {}).items():
        try:
            i, j = (int(p) for p in key.split("_"))
        except ValueError:
            raise ModelFileError(f"bad block name {key!r}; expected like 2_1")
        prof_kind = body.get("profile", "constant")
        c0 = np.asarray(body["c0"], dtype=np.float64)
        if prof_kind == "constant":
            blocks[(i, j)] = BlockProfile.constant(c0, d)
        elif prof_kind == "affine":
            c1 = np.asarray(body["c1"], dtype=np.float64)
            blocks[(i, j)] = BlockProfile.affine(c0, c1, d)
        else:
            raise ModelFileError(f"unknown block profile {prof_kind!r}")

    sig_body = data.get("sigma", {"form": "constant", "c0": 1.0})
    form = sig_body.get("form", "constant")
    if form == "constant":
        sigma = sigma_constant(float(sig_body.get("c0", 1.0)))
    elif form == "fast-only-affine":
        sigma = sigma_fast_affine(float(sig_body.get("c0", 1.0)),
                                  float(sig_body.get("slope", 0.0)),
                                  float(sig_body.get("clip_radius", 1.0)), n=n)
    elif form == "full-affine":
        coeffs = [float(c) for c in sig_body.get("coeffs", [])]
        coeffs += [0.0] * (n - len(coeffs))
        sigma = sigma_full_affine(float(sig_body.get("c0", 1.0)), coeffs,
                                  float(sig_body.get("clip_radius", 1.0)))
    else:
        raise ModelFileError(f"unknown sigma form {form!r}")

    spc_body = data.get("spectral", {})
    spectral = SpectralMeasure(d=d, w_minus=float(spc_body.get("w_minus", 0.5)),
                               w_plus=float(spc_body.get("w_plus", 0.5)))

    tmp_body = data.get("tempering", {"kind": "none"})
    kind = tmp_body.get("kind", "none")
    if kind == "none":
        temp = Tempering("none")
    elif kind == "exponential":
        temp = Tempering("exponential", c=float(tmp_body.get("c", 1.0)))
    elif kind == "polynomial":
        temp = Tempering("polynomial", m=float(tmp_body.get("m", 2.0)))
    else:
        raise ModelFileError(f"unknown tempering kind {kind!r}")

    consts = {k: float(v) for k, v in data.get("constants", {}).items()
              if k in _CONSTANT_FIELDS}
    unknown = set(data.get("constants", {})) - set(_CONSTANT_FIELDS)
    if unknown:
        raise ModelFileError(f"unknown constants: {sorted(unknown)}")
    return ModelSpec(n=n, d=d, alpha=alpha, a_blocks=blocks, sigma=sigma,
                     spectral=spectral, tempering=temp, **consts)


def load_model(path: str) -> ModelSpec:
    with open(path) as fh:
        return model_from_toml(fh.read())


def save_model(spec: ModelSpec, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_toml(spec))


def specs_equal(a: ModelSpec, b: ModelSpec) -> bool:
    """Semantic equality, tolerant of ndarray fields."""
    return model_to_toml(a) == model_to_toml(b)
