"""Scenario configuration: dataclass, text format, presets.

The text format is line oriented::

    [model]
    p = 1
    q = 0.5
    d_S = 1
    d_I = 1e-5

    [domain]
    kind = masked_disk
    extent = 1
    resolution = 65

    [coefficients]
    beta = sim1_beta
    gamma = sim1_gamma

    [initial]
    S0 = 0.8
    I0 = 0.2

``#`` starts a comment. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .fields import FORMS, CoefficientSpec
from .grid import KINDS, DomainSpec

DEFAULT_TOLERANCES = {
    "tol_inner": 1e-10,
    "tol_outer": 1e-12,
    "tol_resid": 1e-9,
    "max_iters": 200,
}


@dataclass(frozen=True)
class ScenarioConfig:
    p: float
    q: float
    d_S: float
    d_I: float
    domain: DomainSpec
    beta: CoefficientSpec
    gamma: CoefficientSpec
    N: float | None = None
    S0: CoefficientSpec = field(default_factory=lambda: CoefficientSpec.constant(0.8))
    I0: CoefficientSpec = field(default_factory=lambda: CoefficientSpec.constant(0.2))
    tol_inner: float = DEFAULT_TOLERANCES["tol_inner"]
    tol_outer: float = DEFAULT_TOLERANCES["tol_outer"]
    tol_resid: float = DEFAULT_TOLERANCES["tol_resid"]
    max_iters: int = DEFAULT_TOLERANCES["max_iters"]
    seed: int = 0
    tol_riskset: float | None = None

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: ScenarioConfig) -> None:
    if not 0 < cfg.p <= 1:
        raise ConfigurationError(f"p must lie in (0, 1], got {cfg.p}", key="p")
    if not cfg.q > 0:
        raise ConfigurationError(f"q must be positive, got {cfg.q}", key="q")
    for key in ("d_S", "d_I", "tol_inner", "tol_outer", "tol_resid"):
        value = getattr(cfg, key)
        if not value > 0:
            raise ConfigurationError(f"{key} must be positive, got {value}", key=key)
    if cfg.N is not None and not cfg.N > 0:
        raise ConfigurationError(f"N must be positive, got {cfg.N}", key="N")
    if int(cfg.max_iters) != cfg.max_iters or cfg.max_iters < 1:
        raise ConfigurationError("max_iters must be a positive integer", key="max_iters")
    if cfg.tol_riskset is not None and cfg.tol_riskset < 0:
        raise ConfigurationError("tol_riskset must be non-negative", key="tol_riskset")
    if cfg.domain.kind not in KINDS:
        raise ConfigurationError(f"unknown domain kind {cfg.domain.kind!r}", key="kind")


# ---------------------------------------------------------------- presets


def sim1(**overrides) -> ScenarioConfig:
    """Disk, beta = 1.5 + sin(pi x) sin(pi y), gamma = 1, S0 = 0.8, I0 = 0.2."""
    base = dict(
        p=1.0,
        q=0.5,
        d_S=1.0,
        d_I=1e-5,
        domain=DomainSpec("masked_disk", 1.0, 65),
        beta=CoefficientSpec("sim1_beta"),
        gamma=CoefficientSpec("sim1_gamma"),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def sim2(**overrides) -> ScenarioConfig:
    """Disk, beta = 0.5, gamma = f(x) f(y) with a flat minimum on a square."""
    base = dict(
        p=1.0,
        q=0.5,
        d_S=1.0,
        d_I=1e-5,
        domain=DomainSpec("masked_disk", 1.0, 72),
        beta=CoefficientSpec("sim2_beta"),
        gamma=CoefficientSpec("sim2_gamma"),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


PRESETS = {"sim1": sim1, "sim2": sim2}


# ------------------------------------------------------------ text format

_SECTIONS = {
    "model": {"p", "q", "d_S", "d_I", "N"},
    "domain": {"kind", "extent", "resolution", "boundary"},
    "coefficients": {"beta", "gamma"},
    "initial": {"S0", "I0"},
    "solver": {"tol_inner", "tol_outer", "tol_resid", "max_iters", "seed", "tol_riskset"},
}
_REQUIRED = {"model": ("p", "q", "d_S", "d_I"), "domain": ("kind", "extent", "resolution"),
             "coefficients": ("beta", "gamma")}


def _float(text, key, line):
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"expected a number, got {text!r}", key=key, line=line)


def _int(text, key, line):
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {text!r}", key=key, line=line)


def _numbers(text, key, line):
    return [_float(t.strip(), key, line) for t in text.split(",") if t.strip()]


def _coefficient(text, key, line) -> CoefficientSpec:
    parts = text.split()
    head = parts[0]
    if len(parts) == 1 and head not in FORMS:
        return CoefficientSpec.constant(_float(head, key, line))
    if head not in FORMS:
        raise ConfigurationError(f"unknown coefficient form {head!r}", key=key, line=line)
    if head == "table":
        if len(parts) != 2:
            raise ConfigurationError("table needs exactly one CSV path", key=key, line=line)
        return CoefficientSpec("table", (), parts[1])
    return CoefficientSpec(head, tuple(_float(t, key, line) for t in parts[1:]))


def _domain(values, lines) -> DomainSpec:
    kind = values["kind"]
    if kind not in KINDS:
        raise ConfigurationError(f"unknown domain kind {kind!r}", key="kind", line=lines["kind"])
    ext = _numbers(values["extent"], "extent", lines["extent"])
    res = [_int(t.strip(), "resolution", lines["resolution"]) for t in values["resolution"].split(",")]
    need = {"interval": 2, "rectangle": 4, "masked_disk": 1}[kind]
    if len(ext) != need:
        raise ConfigurationError(f"{kind} extent needs {need} numbers", key="extent", line=lines["extent"])
    if kind == "interval":
        extent = (ext[0], ext[1])
    elif kind == "rectangle":
        extent = ((ext[0], ext[1]), (ext[2], ext[3]))
    else:
        extent = ext[0]
    resolution = res[0] if len(res) == 1 else tuple(res)
    return DomainSpec(kind, extent, resolution, values.get("boundary", "neumann"))


def parse_config(text: str) -> ScenarioConfig:
    values: dict[str, dict[str, str]] = {name: {} for name in _SECTIONS}
    lines: dict[str, int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if content.startswith("["):
            if not content.endswith("]"):
                raise ConfigurationError(f"malformed section header {content!r}", line=lineno)
            section = content[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigurationError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in content:
            raise ConfigurationError(f"expected 'key = value', got {content!r}", line=lineno)
        if section is None:
            raise ConfigurationError("entry before any [section] header", line=lineno)
        key, value = (t.strip() for t in content.split("=", 1))
        if key not in _SECTIONS[section]:
            raise ConfigurationError(f"unknown key in [{section}]", key=key, line=lineno)
        if key in values[section]:
            raise ConfigurationError("duplicate key", key=key, line=lineno)
        if not value:
            raise ConfigurationError("empty value", key=key, line=lineno)
        values[section][key] = value
        lines[key] = lineno

    for sec, keys in _REQUIRED.items():
        for key in keys:
            if key not in values[sec]:
                raise ConfigurationError(f"missing required key in [{sec}]", key=key)

    m, s = values["model"], values["solver"]
    kwargs = {k: _float(m[k], k, lines[k]) for k in ("p", "q", "d_S", "d_I")}
    if "N" in m:
        kwargs["N"] = _float(m["N"], "N", lines["N"])
    kwargs["domain"] = _domain(values["domain"], lines)
    for key in ("beta", "gamma"):
        kwargs[key] = _coefficient(values["coefficients"][key], key, lines[key])
    for key in ("S0", "I0"):
        if key in values["initial"]:
            kwargs[key] = _coefficient(values["initial"][key], key, lines[key])
    for key in ("tol_inner", "tol_outer", "tol_resid", "tol_riskset"):
        if key in s:
            kwargs[key] = _float(s[key], key, lines[key])
    for key in ("max_iters", "seed"):
        if key in s:
            kwargs[key] = _int(s[key], key, lines[key])
    try:
        return ScenarioConfig(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(exc.detail, key=exc.key, line=lines.get(exc.key)) from None


def _format_coefficient(spec: CoefficientSpec) -> str:
    if spec.form == "table":
        if not isinstance(spec.table, str):
            raise ConfigurationError("only CSV-backed tables can be serialised")
        return f"table {spec.table}"
    if spec.form == "constant":
        return repr(spec.params[0])
    return " ".join([spec.form, *(repr(v) for v in spec.params)])


def serialize_config(cfg: ScenarioConfig) -> str:
    d = cfg.domain
    if d.kind == "interval":
        extent = f"{d.extent[0]!r}, {d.extent[1]!r}"
    elif d.kind == "rectangle":
        extent = ", ".join(repr(float(v)) for pair in d.extent for v in pair)
    else:
        extent = repr(float(d.extent))
    res = d.resolution
    res = ", ".join(str(int(v)) for v in res) if isinstance(res, (tuple, list)) else str(int(res))
    out = [
        "[model]",
        f"p = {cfg.p!r}",
        f"q = {cfg.q!r}",
        f"d_S = {cfg.d_S!r}",
        f"d_I = {cfg.d_I!r}",
    ]
    if cfg.N is not None:
        out.append(f"N = {cfg.N!r}")
    out += [
        "",
        "[domain]",
        f"kind = {d.kind}",
        f"extent = {extent}",
        f"resolution = {res}",
        f"boundary = {d.boundary}",
        "",
        "[coefficients]",
        f"beta = {_format_coefficient(cfg.beta)}",
        f"gamma = {_format_coefficient(cfg.gamma)}",
        "",
        "[initial]",
        f"S0 = {_format_coefficient(cfg.S0)}",
        f"I0 = {_format_coefficient(cfg.I0)}",
        "",
        "[solver]",
        f"tol_inner = {cfg.tol_inner!r}",
        f"tol_outer = {cfg.tol_outer!r}",
        f"tol_resid = {cfg.tol_resid!r}",
        f"max_iters = {int(cfg.max_iters)}",
        f"seed = {int(cfg.seed)}",
    ]
    if cfg.tol_riskset is not None:
        out.append(f"tol_riskset = {cfg.tol_riskset!r}")
    return "\n".join(out) + "\n"
