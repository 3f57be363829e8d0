"""Run configuration: flat ``key = value`` text with ``#`` comments.

Dotted keys form sections (``gains.kappa = 5.0``).  Parsing validates the
whole file and reports every problem at once, not just the first.  A parsed
config carries all keys (defaults merged in) and serializes with 17
significant digits so that serialize -> parse round-trips exactly.
"""

from __future__ import annotations

import hashlib
import importlib
import os
from dataclasses import dataclass
from typing import Any

from .controller import CouplingGains
from .dynamics import point_mass, two_link_arm
from .errors import ConfigError, PathsyncError
from .reference import circle, from_csv, line, parabola
from .simulate import CONTROLLER_MODES, AugmentedState, Scenario

_FMT = "%.17g"

_SYSTEMS = ("point_mass", "two_link", "external")
_PATHS = ("circle", "line", "parabola")  # plus csv:<file>
_EXTENSIONS = ("auto", "clamp", "linear", "periodic")

# key -> (type, default).  Types: float, floatlist, str, int.
DEFAULTS: dict[str, tuple[str, Any]] = {
    "system.type": ("str", "point_mass"),
    "system.mass": ("float", 1.0),
    "system.gravity": ("float", 0.0),
    "system.dims": ("int", 2),
    "system.m1": ("float", 1.0),
    "system.m2": ("float", 1.0),
    "system.l1": ("float", 1.0),
    "system.l2": ("float", 1.0),
    "system.lc1": ("float", 0.5),
    "system.lc2": ("float", 0.5),
    "system.I1": ("float", 1.0 / 12.0),
    "system.I2": ("float", 1.0 / 12.0),
    "system.g": ("float", 9.81),
    "system.factory": ("str", ""),
    "path.type": ("str", "circle"),
    "path.extension": ("str", "auto"),
    "path.radius": ("float", 1.0),
    "path.omega": ("float", 1.0),
    "path.center": ("floatlist", (0.0, 0.0)),
    "path.velocity": ("floatlist", (1.0, 0.0)),
    "path.origin": ("floatlist", (0.0, 0.0)),
    "path.domain": ("floatlist", ()),
    "path.beta": ("float", 1e-6),
    "gains.spring_K": ("float", 10.0),
    "gains.kappa": ("float", 5.0),
    "gains.damping_R": ("float", 2.0),
    "pump_k": ("float", 0.5),
    "controller": ("str", "theorem1"),
    "integrator.step": ("float", 1e-3),
    "integrator.horizon": ("float", 20.0),
    "initial.q": ("floatlist", ()),
    "initial.qdot": ("floatlist", ()),
    "initial.s": ("float", 0.0),
    "initial.sdot": ("float", 1.0),
    "initial.sigma": ("float", 0.0),
    "baseline.kp": ("float", 100.0),
    "baseline.kd": ("float", 20.0),
    "output.dir": ("str", "out"),
}


@dataclass(frozen=True)
class RunConfig:
    """Fully validated configuration; all keys present, defaults merged."""

    values: tuple[tuple[str, Any], ...]

    def __getitem__(self, key: str) -> Any:
        return dict(self.values)[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(self.values)


def _format_value(kind: str, value: Any) -> str:
    if kind == "float":
        return _FMT % value
    if kind == "int":
        return str(int(value))
    if kind == "floatlist":
        return ", ".join(_FMT % v for v in value)
    return str(value)


def _parse_value(kind: str, raw: str) -> Any:
    raw = raw.strip()
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "floatlist":
        if not raw:
            return ()
        return tuple(float(tok) for tok in raw.split(","))
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse config text; raises ConfigError listing every problem found."""
    problems: list[str] = []
    seen: dict[str, Any] = {}

    for lineno, rawline in enumerate(text.splitlines(), start=1):
        body = rawline.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        kind = DEFAULTS[key][0]
        try:
            seen[key] = _parse_value(kind, raw)
        except ValueError:
            problems.append(
                f"line {lineno}: cannot parse value {raw.strip()!r} for {key!r} as {kind}"
            )

    merged = {k: seen.get(k, default) for k, (_, default) in DEFAULTS.items()}
    problems.extend(_semantic_problems(merged))
    if problems:
        raise ConfigError(problems)
    return RunConfig(values=tuple(sorted(merged.items())))


def _semantic_problems(v: dict[str, Any]) -> list[str]:
    p: list[str] = []
    for key in ("gains.spring_K", "gains.kappa", "gains.damping_R"):
        if v[key] <= 0:
            p.append(
                f"{key} = {v[key]:g}: interconnection gains must be strictly "
                "positive (kappa, R > 0 and a positive-definite spring)"
            )
    if v["pump_k"] < 0:
        p.append(f"pump_k = {v['pump_k']:g}: pump gain must be >= 0")
    if v["integrator.step"] <= 0:
        p.append("integrator.step must be > 0")
    elif v["integrator.horizon"] < v["integrator.step"]:
        p.append("integrator.horizon must be >= integrator.step")
    if v["controller"] not in CONTROLLER_MODES:
        p.append(
            f"controller = {v['controller']!r}: must be one of {', '.join(CONTROLLER_MODES)}"
        )
    if v["system.type"] not in _SYSTEMS:
        p.append(
            f"system.type = {v['system.type']!r}: must be one of {', '.join(_SYSTEMS)}"
        )
    elif v["system.type"] == "external" and not v["system.factory"]:
        p.append("system.type = external requires system.factory = module:callable")
    ptype = v["path.type"]
    if ptype.startswith("csv:"):
        fname = ptype[4:]
        if not os.path.isfile(fname):
            p.append(f"path.type = {ptype!r}: file {fname!r} does not exist")
    elif ptype not in _PATHS:
        p.append(
            f"path.type = {ptype!r}: must be csv:<file> or one of {', '.join(_PATHS)}"
        )
    if v["path.extension"] not in _EXTENSIONS:
        p.append(
            f"path.extension = {v['path.extension']!r}: must be one of "
            f"{', '.join(_EXTENSIONS)}"
        )
    dom = v["path.domain"]
    if dom and (len(dom) != 2 or dom[1] <= dom[0]):
        p.append(f"path.domain = {dom}: must be two increasing numbers")
    if v["path.beta"] <= 0:
        p.append("path.beta must be > 0")
    if v["system.dims"] < 1:
        p.append("system.dims must be >= 1")
    if len(v["initial.q"]) != len(v["initial.qdot"]):
        p.append("initial.q and initial.qdot must have equal length")
    for key in ("baseline.kp", "baseline.kd"):
        if v[key] <= 0:
            p.append(f"{key} must be > 0")
    return p


def serialize_config(cfg: RunConfig) -> str:
    lines = ["# pathsync run configuration"]
    for key, value in cfg.values:
        kind = DEFAULTS[key][0]
        lines.append(f"{key} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"


def default_config() -> RunConfig:
    return parse_config("")


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


# -- scenario assembly -------------------------------------------------------


def build_model(cfg: RunConfig):
    kind = cfg["system.type"]
    if kind == "point_mass":
        return point_mass(
            mass=cfg["system.mass"],
            gravity=cfg["system.gravity"],
            dims=cfg["system.dims"],
        )
    if kind == "two_link":
        return two_link_arm(
            m1=cfg["system.m1"], m2=cfg["system.m2"],
            l1=cfg["system.l1"], l2=cfg["system.l2"],
            lc1=cfg["system.lc1"], lc2=cfg["system.lc2"],
            I1=cfg["system.I1"], I2=cfg["system.I2"],
            g=cfg["system.g"],
        )
    modname, _, attr = cfg["system.factory"].partition(":")
    try:
        factory = getattr(importlib.import_module(modname), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError([f"cannot load system.factory: {exc}"]) from exc
    return factory()


def build_path(cfg: RunConfig):
    kind = cfg["path.type"]
    ext = cfg["path.extension"]
    dom = cfg["path.domain"]
    if kind == "circle":
        path = circle(
            radius=cfg["path.radius"],
            omega=cfg["path.omega"],
            center=cfg["path.center"],
        )
        mode = "periodic" if ext == "auto" else ext
    elif kind == "line":
        path = line(
            velocity=cfg["path.velocity"],
            origin=cfg["path.origin"],
            domain=dom if dom else (0.0, 20.0),
        )
        mode = "linear" if ext == "auto" else ext
    elif kind == "parabola":
        path = parabola(domain=dom if dom else (0.5, 3.0))
        mode = "clamp" if ext == "auto" else ext
    else:  # csv:<file>
        mode = "clamp" if ext == "auto" else ext
        return from_csv(kind[4:], mode=mode)
    if mode != path.mode:
        path = type(path)(
            n=path.n, domain=path.domain, mode=mode,
            value_fn=path.value_fn, d1_fn=path.d1_fn, d2_fn=path.d2_fn,
            backing=path.backing,
        )
    return path


def build_scenario(cfg: RunConfig) -> Scenario:
    """Assemble a Scenario from a parsed config.

    When ``initial.q``/``initial.qdot`` are empty the run starts on the
    reference: q = q_r(s0), qdot = q_r'(s0) * sdot0.
    """
    from .reference import ReducedModel

    model = build_model(cfg)
    path = build_path(cfg)
    try:
        rm = ReducedModel(model=model, path=path, beta=cfg["path.beta"])
    except PathsyncError as exc:
        raise ConfigError([f"path/model assembly failed: {exc}"]) from exc

    s0 = cfg["initial.s"]
    sdot0 = cfg["initial.sdot"]
    q0 = list(cfg["initial.q"])
    qd0 = list(cfg["initial.qdot"])
    if not q0:
        q0 = path.value(s0)
        qd0 = path.d1(s0) * sdot0
    initial = AugmentedState(
        q=q0, qdot=qd0, s=s0, sdot=sdot0, sigma=cfg["initial.sigma"]
    )
    gains = CouplingGains(
        spring_K=cfg["gains.spring_K"],
        kappa=cfg["gains.kappa"],
        damping_R=cfg["gains.damping_R"],
    )
    return Scenario(
        model=model,
        rm=rm,
        gains=gains,
        initial=initial,
        horizon=cfg["integrator.horizon"],
        step=cfg["integrator.step"],
        controller=cfg["controller"],
        pump_k=cfg["pump_k"],
        baseline_kp=cfg["baseline.kp"],
        baseline_kd=cfg["baseline.kd"],
    )
