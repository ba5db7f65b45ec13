"""JSON configuration: one file describes space, generator, Psi, noise, cascade and study.

Errors are raised as ``ConfigError`` carrying the 1-based line of the
offending key (or of the JSON syntax error) so messages can be anchored.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .noise import NoiseOperator, noise_from_dict
from .nonlinearity import Nonlinearity, nonlinearity_from_dict
from .operators import Generator, generator_from_dict
from .solver import CascadeConfig

SCHEMA_VERSION = 1
SECTIONS = ("schema", "seed", "generator", "psi", "noise", "cascade", "run", "study", "verify")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        self.detail = message
        loc = path or "<config>"
        if line is not None:
            loc = f"{loc}:{line}"
        super().__init__(f"{loc}: {message}")


@dataclass
class RunSettings:
    paths: int = 1
    threads: int = 1
    output: str = "output"
    states: bool = False


@dataclass
class StudySettings:
    axis: str | None = None
    values: dict = field(default_factory=dict)
    paths: int = 64


@dataclass
class Config:
    gen: Generator
    psi: Nonlinearity
    noise: NoiseOperator
    cascade: CascadeConfig
    seed: int
    run: RunSettings
    study: StudySettings
    verify_samples: int
    sha256: str
    source: str
    raw: dict


def _line_of(text: str, key: str, start: int = 0) -> int | None:
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, start)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _anchor(text: str, section: str, spec, message: str) -> int | None:
    """Line of the key named in ``message`` inside ``section``, else of the section."""
    m = re.compile(r'"' + re.escape(section) + r'"\s*:').search(text)
    start = m.start() if m else 0
    if isinstance(spec, dict):
        for key in sorted(spec, key=len, reverse=True):
            if re.search(r"\b" + re.escape(key) + r"\b", message):
                line = _line_of(text, key, start)
                if line is not None:
                    return line
    return _line_of(text, section)


def initial_datum(spec, n: int) -> np.ndarray:
    """``x`` as a list of site values or ``{"kind": "cosine" | "random" | "constant", ...}``."""
    if isinstance(spec, list):
        x = np.asarray(spec, dtype=float)
        if x.shape != (n,):
            raise ValueError(f"x has {x.size} entries but the space has {n} sites")
        return x
    if not isinstance(spec, dict):
        raise ValueError("x must be a list or an object with 'kind'")
    kind = spec.get("kind", "cosine")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "cosine":
        mode = int(spec.get("mode", 1))
        return amp * np.cos(np.pi * mode * (np.arange(n) + 0.5) / n)
    if kind == "random":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return amp * rng.standard_normal(n)
    if kind == "constant":
        return np.full(n, float(spec.get("value", amp)))
    raise ValueError(f"unknown x kind {kind!r}")


def _cascade(spec: dict, n: int) -> CascadeConfig:
    unknown = set(spec) - {"nu", "lambda", "dt", "T", "x", "newton_tol", "newton_max"}
    if unknown:
        raise ValueError(f"unknown cascade field(s) {sorted(unknown)}")
    if "x" not in spec:
        raise ValueError("cascade needs an initial datum x")
    cfg = CascadeConfig(
        nu=float(spec.get("nu", 0.0)), lam=float(spec.get("lambda", 0.0)), dt=float(spec.get("dt", 1e-3)),
        T=float(spec.get("T", 1.0)), x=initial_datum(spec["x"], n),
        newton_tol=float(spec.get("newton_tol", 1e-10)), newton_max=int(spec.get("newton_max", 50)),
    )
    cfg.steps  # T must be a multiple of dt
    if not all(math.isfinite(v) for v in (cfg.nu, cfg.lam, cfg.dt, cfg.T)):
        raise ValueError("cascade parameters must be finite")
    return cfg


def _positive_int(d: dict, key: str, default: int) -> int:
    v = d.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ValueError(f"{key} must be a positive integer, got {v!r}")
    return v


def parse_config(text: str, source: str = "<config>") -> Config:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", 1, source)
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"unknown section {key!r}", _line_of(text, key), source)
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {raw.get('schema')!r}",
                          _line_of(text, "schema") or 1, source)

    def section(name, build):
        spec = raw.get(name)
        try:
            return build(spec)
        except (ValueError, TypeError, KeyError) as exc:
            msg = str(exc).strip("'\"")
            raise ConfigError(f"{name}: {msg}", _anchor(text, name, spec, msg), source) from None

    def need(spec, name):
        if not isinstance(spec, dict):
            raise ValueError(f"missing or malformed '{name}' section")
        return spec

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}", _line_of(text, "seed"), source)
    gen = section("generator", lambda s: generator_from_dict(need(s, "generator")))
    psi = section("psi", lambda s: nonlinearity_from_dict(need(s, "psi")))
    cascade = section("cascade", lambda s: _cascade(need(s, "cascade"), gen.size))

    def build_noise(s):
        B = noise_from_dict(s, horizon=cascade.T if cascade.T > 0 else 1.0)
        B.bind_check(gen)
        return B

    noise = section("noise", build_noise)

    def build_run(s):
        s = s or {}
        return RunSettings(paths=_positive_int(s, "paths", 1), threads=_positive_int(s, "threads", 1),
                           output=str(s.get("output", "output")), states=bool(s.get("states", False)))

    def build_study(s):
        s = s or {}
        values = {k: [float(v) for v in s[k]] for k in ("lambda", "nu", "dt") if k in s}
        axis = s.get("axis")
        if axis is not None and axis not in ("lambda", "nu", "dt"):
            raise ValueError(f"axis must be lambda, nu or dt, got {axis!r}")
        return StudySettings(axis=axis, values=values, paths=_positive_int(s, "paths", 64))

    run = section("run", build_run)
    study = section("study", build_study)
    samples = section("verify", lambda s: _positive_int(s or {}, "samples", 1000))
    return Config(
        gen=gen, psi=psi, noise=noise, cascade=cascade, seed=seed, run=run, study=study,
        verify_samples=samples, sha256=hashlib.sha256(text.encode()).hexdigest(), source=source, raw=raw,
    )


def load_config(path) -> Config:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    cfg = parse_config(data.decode("utf-8"), str(p))
    cfg.sha256 = hashlib.sha256(data).hexdigest()
    return cfg
