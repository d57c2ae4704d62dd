"""Run configuration: a sectioned ``key = value`` text format.

Example::

    [domain]
    domain = torus
    [sampler]
    N = 100000
    [kernel]
    r = 0.05
    [evolution]
    T = 0.02

Keys are unique across sections, so they may also appear before the first
section header. Unknown keys, duplicates and inconsistent combinations are
reported with the key name and line number.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ConfigError, MedflowError

__all__ = ["RunConfig", "parse_config", "parse_config_text", "serialize", "config_hash",
           "SECTIONS", "MODES", "DOMAINS", "SUITE_NAMES"]

MODES = ("levelset", "mbo", "youngangle", "ssl")
DOMAINS = ("torus", "box", "dumbbell")
NORMALIZATIONS = ("energy", "degree")
SUITE_NAMES = ("consistency", "oberman", "tracking", "identities", "medians", "dkw",
               "dirichlet", "heat", "tv", "young", "tl2", "singular", "front", "classify")

_REQUIRED = object()

# section -> key -> (type, default)
SECTIONS = {
    "domain": {"domain": ("str", _REQUIRED), "d": ("int", 2), "bounds": ("floats", None)},
    "sampler": {"N": ("int", None), "intensity": ("float", None), "seed": ("int", 0)},
    "kernel": {"r": ("float", _REQUIRED), "kernel": ("str", "annulus:0.9"),
               "cell": ("float", None)},
    "evolution": {"T": ("float", _REQUIRED), "mode": ("str", "levelset"), "h": ("float", None),
                  "alpha": ("float", 90.0), "q": ("float", 0.5),
                  "initial": ("str", "disk:0.3"), "snapshots": ("floats", None),
                  "stop_near_extremum": ("bool", False), "labels": ("str", None)},
    "heatflow": {"tau": ("float", None), "heat_T": ("float", None),
                 "normalization": ("str", "energy")},
    "output": {"out": ("str", None), "resolution": ("int", 256), "verbosity": ("int", 1),
               "verify": ("str", "none")},
}
_HOME = {k: sec for sec, keys in SECTIONS.items() for k in keys}
# keys that do not change any computed artifact
_UNHASHED = ("out", "verbosity")


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters. Field names are the config keys."""

    domain: str
    r: float
    T: float
    d: int = 2
    bounds: Optional[tuple] = None
    N: Optional[int] = None
    intensity: Optional[float] = None
    seed: int = 0
    kernel: str = "annulus:0.9"
    cell: Optional[float] = None
    mode: str = "levelset"
    h: Optional[float] = None
    alpha: float = 90.0
    q: float = 0.5
    initial: str = "disk:0.3"
    snapshots: Optional[tuple] = None
    stop_near_extremum: bool = False
    labels: Optional[str] = None
    tau: Optional[float] = None
    heat_T: Optional[float] = None
    normalization: str = "energy"
    out: Optional[str] = None
    resolution: int = 256
    verbosity: int = 1
    verify: str = "none"

    @property
    def verify_suites(self) -> tuple:
        v = self.verify.strip()
        if v in ("", "none"):
            return ()
        if v == "all":
            return SUITE_NAMES
        return tuple(s.strip() for s in v.split(",") if s.strip())

    @property
    def times(self) -> tuple:
        return self.snapshots if self.snapshots is not None else (self.T,)


def _convert(kind, text, key, line):
    text = text.strip()
    try:
        if kind == "str":
            if not text:
                raise ValueError("empty value")
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "floats":
            vals = tuple(float(t) for t in text.replace(",", " ").split())
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("not finite")
            return vals
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError("not a boolean")
    except ValueError as exc:
        raise ConfigError(f"cannot read {text!r} as {kind}: {exc}", key=key, line=line) from None
    raise AssertionError(kind)


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` (key -> string) replace file values."""
    raw, lines = {}, {}
    section = None
    for lineno, full in enumerate(text.splitlines(), start=1):
        line = full.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _HOME:
            raise ConfigError("unknown key", key=key, line=lineno)
        if section is not None and _HOME[key] != section:
            raise ConfigError(f"key belongs to section [{_HOME[key]}], not [{section}]",
                              key=key, line=lineno)
        if key in raw:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})",
                              key=key, line=lineno)
        raw[key] = value
        lines[key] = lineno
    for key, value in (overrides or {}).items():
        if key not in _HOME:
            raise ConfigError("unknown key", key=key)
        raw[key] = str(value)
        lines.pop(key, None)

    vals = {}
    for sec, keys in SECTIONS.items():
        for key, (kind, default) in keys.items():
            if key in raw and raw[key].strip().lower() != "none":
                vals[key] = _convert(kind, raw[key], key, lines.get(key))
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key in [{sec}]", key=key)
    cfg = RunConfig(**vals)
    _validate(cfg, lines)
    return cfg


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, overrides)


def _validate(cfg: RunConfig, lines: dict):
    def fail(msg, key):
        raise ConfigError(msg, key=key, line=lines.get(key))

    if cfg.domain not in DOMAINS:
        fail(f"domain must be one of {', '.join(DOMAINS)}", "domain")
    if cfg.d < 1:
        fail("dimension must be positive", "d")
    if cfg.domain == "dumbbell" and cfg.d != 2:
        fail("the dumbbell domain is two-dimensional", "d")
    if cfg.bounds is not None:
        if cfg.domain != "box":
            fail("bounds apply to the box domain only", "bounds")
        b = cfg.bounds
        if len(b) != 2 * cfg.d or any(b[2 * i] >= b[2 * i + 1] for i in range(cfg.d)):
            fail("bounds must list lo hi for every axis with lo < hi", "bounds")
    if (cfg.N is None) == (cfg.intensity is None):
        fail("give exactly one of N and intensity", "intensity" if cfg.N is not None else "N")
    if cfg.N is not None and cfg.N < 1:
        fail("N must be positive", "N")
    if cfg.intensity is not None and not cfg.intensity > 0:
        fail("intensity must be positive", "intensity")
    if cfg.seed < 0:
        fail("seed must be non-negative", "seed")
    if not cfg.r > 0:
        fail("r must be positive", "r")
    try:
        spec = build_kernel(cfg)
    except MedflowError as exc:
        fail(str(exc), "kernel")
    except (ValueError, OSError) as exc:
        fail(f"bad kernel: {exc}", "kernel")
    if cfg.cell is not None and cfg.cell < spec.r_outer:
        fail(f"index cell {cfg.cell} is smaller than the stencil radius {spec.r_outer}", "cell")
    if cfg.h is not None and abs(cfg.h - cfg.r ** 2) > 1e-12 * cfg.r ** 2:
        fail(f"h = {cfg.h!r} is inconsistent with r = {cfg.r!r}: need h = r**2 = "
             f"{cfg.r ** 2!r} (keys 'h' and 'r')", "h")
    if not cfg.T > 0:
        fail("T must be positive", "T")
    if cfg.mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}", "mode")
    if cfg.mode == "youngangle" and cfg.domain == "torus":
        fail("YoungAngle requires Box", "mode")
    if not 0 < cfg.alpha < 180:
        fail("alpha must lie strictly between 0 and 180 degrees", "alpha")
    if cfg.mode == "ssl" and not cfg.labels:
        fail("ssl mode needs labels", "labels")
    if cfg.labels is not None:
        try:
            parse_labels(cfg.labels, cfg.d)
        except ValueError as exc:
            fail(str(exc), "labels")
    try:
        parse_initial(cfg.initial, cfg.d)
    except ValueError as exc:
        fail(str(exc), "initial")
    if cfg.snapshots is not None:
        if not cfg.snapshots or any(not 0 <= t <= cfg.T for t in cfg.snapshots):
            fail("snapshot times must lie in [0, T]", "snapshots")
    if (cfg.tau is None) != (cfg.heat_T is None):
        fail("tau and heat_T go together", "tau" if cfg.tau is None else "heat_T")
    if cfg.tau is not None and not (cfg.tau > 0 and cfg.heat_T > 0):
        fail("tau and heat_T must be positive", "tau")
    if cfg.normalization not in NORMALIZATIONS:
        fail(f"normalization must be one of {', '.join(NORMALIZATIONS)}", "normalization")
    if cfg.resolution < 16:
        fail("resolution must be at least 16", "resolution")
    for name in cfg.verify_suites:
        if name not in SUITE_NAMES:
            fail(f"unknown verification suite {name!r}", "verify")


def build_kernel(cfg: RunConfig):
    from .kernels import parse_kernel
    return parse_kernel(cfg.kernel, cfg.r)


def parse_initial(text: str, d: int):
    """Split an initial-field spec into ``(name, params)`` after checking it."""
    parts = text.split(":")
    name, args = parts[0], parts[1:]
    nargs = {"disk": 1, "ellipse": 2, "halfspace": 1, "sine": 0, "cosine": 0, "split": 2}
    if name not in nargs:
        raise ValueError(f"unknown initial field {name!r}; use one of {', '.join(nargs)}")
    if len(args) != nargs[name]:
        raise ValueError(f"initial field {name!r} takes {nargs[name]} parameter(s)")
    try:
        params = tuple(float(a) for a in args)
    except ValueError:
        raise ValueError(f"non-numeric parameter in {text!r}") from None
    if name == "ellipse" and d != 2:
        raise ValueError("ellipse initial field needs d = 2")
    if name in ("disk", "ellipse") and any(p <= 0 for p in params):
        raise ValueError("radii must be positive")
    if name == "split" and not 0 <= params[1] < 0.5:
        raise ValueError("split noise must lie in [0, 0.5)")
    return name, params


def parse_labels(text: str, d: int):
    """``x1,...,xd:value`` entries separated by spaces."""
    out = []
    for tok in text.split():
        if ":" not in tok:
            raise ValueError(f"label {tok!r} is not 'coords:value'")
        coords, value = tok.rsplit(":", 1)
        try:
            x = tuple(float(c) for c in coords.split(","))
            v = float(value)
        except ValueError:
            raise ValueError(f"non-numeric label {tok!r}") from None
        if len(x) != d:
            raise ValueError(f"label {tok!r} needs {d} coordinates")
        out.append((x, v))
    if not out:
        raise ValueError("empty label list")
    return out


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def serialize(cfg: RunConfig, include_output: bool = True) -> str:
    """Canonical text form; :func:`parse_config_text` inverts it exactly."""
    out = []
    for sec, keys in SECTIONS.items():
        body = []
        for key in keys:
            if not include_output and key in _UNHASHED:
                continue
            v = getattr(cfg, key)
            if v is not None:
                body.append(f"{key} = {_format(v)}")
        if body:
            out.append(f"[{sec}]")
            out.extend(body)
    return "\n".join(out) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical form.

    Output location and verbosity are left out, so the same run written to
    two directories carries the same hash.
    """
    return hashlib.sha256(serialize(cfg, include_output=False).encode()).hexdigest()[:16]


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Re-validated copy with some fields replaced."""
    new = replace(cfg, **changes)
    _validate(new, {})
    return new

