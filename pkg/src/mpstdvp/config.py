"""Experiment configuration: a single JSON document, validated against a fixed schema.

Unknown keys are rejected with the line they appear on. Missing optional
keys take the defaults below.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .integrators import IntegratorConfig, Truncation
from .krylov import KrylovConfig

TASKS = ("ground", "quench", "lightcone", "verify")
MODEL_TYPES = ("xy_power_law", "xy_nn")
INITIAL_TYPES = ("neel", "up", "x_polarized", "random", "checkpoint")

# section -> {key: (types, default)}; a default of ... marks a required key
_NUM = (int, float)
SCHEMA: dict[str, dict[str, tuple]] = {
    "": {
        "task": (str, ...),
        "seed": (int, 0),
        "model": (dict, None),
        "integrator": (dict, None),
        "ground": (dict, None),
        "evolution": (dict, None),
        "initial_state": (dict, None),
        "verify": (dict, None),
        "output": (dict, None),
    },
    "model": {
        "type": (str, ...),
        "N": (int, ...),
        "J": (_NUM, 1.0),
        "alpha": (_NUM + (list,), 3.0),
        "fit_tol": (_NUM, 1e-8),
    },
    "integrator": {
        "dt": (_NUM, ...),
        "mode": (str, "real"),
        "scheme": (str, "one_site"),
        "order": (int, 2),
        "krylov": (dict, None),
        "truncation": (dict, None),
        "skip_backward_in_imaginary": (bool, False),
    },
    "integrator.krylov": {
        "tol": (_NUM, 1e-12),
        "max_dim": (int, 30),
        "reorthogonalize": (bool, True),
        "max_restarts": (int, 50),
    },
    "integrator.truncation": {
        "epsilon": (_NUM, 0.0),
        "d_max": (int, None),
    },
    "ground": {
        "tol": (_NUM, 1e-10),
        "max_sweeps": (int, 50),
        "two_site_sweeps": (int, 10),
        "epsilon": (_NUM, 1e-10),
        "d_max": (int, 64),
        "initial_bond_dim": (int, 2),
        "checkpoint": (str, None),
    },
    "evolution": {
        "total_time": (_NUM, ...),
        "stride": (int, 1),
    },
    "initial_state": {
        "type": (str, "neel"),
        "bond_dim": (int, 1),
        "path": (str, None),
    },
    "verify": {
        "instances": (int, 20),
        "tol": (_NUM, 1e-10),
    },
    "output": {
        "dir": (str, "out"),
        "prefix": (str, ""),
    },
}


def key_lines(text: str) -> dict[tuple, int]:
    """Map every object key path in a JSON document to its 1-based line number."""
    lines: dict[tuple, int] = {}
    stack: list[list] = []  # [kind, path, pending key or index, expecting_key]
    i, line, n = 0, 1, len(text)

    def value_path():
        top = stack[-1]
        return top[1] + (top[2],)

    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == '"':
            j = i + 1
            while text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if stack and stack[-1][0] == "obj" and stack[-1][3]:
                key = json.loads(text[i:j + 1])
                stack[-1][2] = key
                stack[-1][3] = False
                lines.setdefault(stack[-1][1] + (key,), line)
            i = j
        elif ch in "{[":
            path = value_path() if stack else ()
            stack.append(["obj", path, None, True] if ch == "{" else ["arr", path, 0, False])
        elif ch in "}]":
            stack.pop()
        elif ch == "," and stack:
            if stack[-1][0] == "obj":
                stack[-1][3] = True
            else:
                stack[-1][2] += 1
        i += 1
    return lines


def _check_section(data: dict, section: str, lines: dict, source: str) -> dict:
    schema = SCHEMA[section]
    path = tuple(section.split(".")) if section else ()
    out = {}
    for key, value in data.items():
        where = lines.get(path + (key,))
        loc = f"{source}:{where}" if where else source
        if key not in schema:
            name = ".".join(path + (key,))
            raise ConfigError(f"{loc}: unknown key '{name}'")
        types, _ = schema[key]
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"{loc}: '{key}' must be {_type_name(types)}, got a boolean")
        if value is not None and not isinstance(value, types):
            raise ConfigError(f"{loc}: '{key}' must be {_type_name(types)}, got {type(value).__name__}")
        out[key] = value
    for key, (_, default) in schema.items():
        if key not in out:
            if default is ...:
                where = f"section '{section}'" if section else "top level"
                raise ConfigError(f"{source}: missing required key '{key}' in {where}")
            out[key] = default
    return out


def _type_name(types) -> str:
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join(t.__name__ for t in types)


@dataclass(frozen=True)
class ModelConfig:
    type: str
    N: int
    J: float
    alphas: tuple[float, ...]
    fit_tol: float


@dataclass(frozen=True)
class GroundConfig:
    tol: float = 1e-10
    max_sweeps: int = 50
    two_site_sweeps: int = 10
    epsilon: float = 1e-10
    d_max: int = 64
    initial_bond_dim: int = 2
    checkpoint: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    seed: int
    model: ModelConfig | None
    integrator: IntegratorConfig | None
    ground: GroundConfig
    total_time: float | None
    stride: int
    initial_state: dict
    verify: dict
    out_dir: str
    prefix: str
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(text: str, source: str = "<config>", task: str | None = None) -> ExperimentConfig:
    """Validate a JSON document; ``task`` overrides the document's own task."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: the configuration must be a JSON object")
    lines = key_lines(text)
    top = _check_section(data, "", lines, source)
    sec = {
        name: _check_section(top[name] or {}, name, lines, source)
        for name in ("ground", "initial_state", "verify", "output")
    }
    task = task or top["task"]
    if task not in TASKS:
        raise ConfigError(f"{source}:{lines.get(('task',), '?')}: task must be one of {TASKS}")
    model = None
    if top["model"] is not None:
        model = _model(_check_section(top["model"], "model", lines, source), source)
    elif task != "verify":
        raise ConfigError(f"{source}: task '{task}' needs a 'model' section")
    integ = None
    if top["integrator"] is not None:
        integ = _integrator(top["integrator"], lines, source)
    elif task in ("quench", "lightcone"):
        raise ConfigError(f"{source}: task '{task}' needs an 'integrator' section")
    total_time, stride = None, 1
    if top["evolution"] is not None:
        ev = _check_section(top["evolution"], "evolution", lines, source)
        total_time, stride = float(ev["total_time"]), ev["stride"]
        if total_time < 0 or stride < 1:
            raise ConfigError(f"{source}: evolution needs total_time >= 0 and stride >= 1")
    elif task in ("quench", "lightcone"):
        raise ConfigError(f"{source}: task '{task}' needs an 'evolution' section")
    g = sec["ground"]
    try:
        ground = GroundConfig(**{k: (float(v) if isinstance(v, float) else v) for k, v in g.items()})
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if ground.max_sweeps < 1 or ground.d_max < 1 or ground.initial_bond_dim < 1 or not ground.tol > 0:
        raise ConfigError(f"{source}: ground settings must be positive")
    init = sec["initial_state"]
    if init["type"] not in INITIAL_TYPES:
        raise ConfigError(f"{source}: initial_state.type must be one of {INITIAL_TYPES}")
    if init["type"] == "checkpoint" and not init["path"]:
        raise ConfigError(f"{source}: initial_state.type 'checkpoint' needs a 'path'")
    return ExperimentConfig(
        task=task,
        seed=top["seed"],
        model=model,
        integrator=integ,
        ground=ground,
        total_time=total_time,
        stride=stride,
        initial_state=init,
        verify=sec["verify"],
        out_dir=sec["output"]["dir"],
        prefix=sec["output"]["prefix"],
        raw=data,
    )


def _model(m: dict, source: str) -> ModelConfig:
    if m["type"] not in MODEL_TYPES:
        raise ConfigError(f"{source}: model.type must be one of {MODEL_TYPES}")
    if m["N"] < 2:
        raise ConfigError(f"{source}: model.N must be at least 2")
    alphas = m["alpha"] if isinstance(m["alpha"], list) else [m["alpha"]]
    if not alphas or any(isinstance(a, bool) or not isinstance(a, _NUM) or a < 0 for a in alphas):
        raise ConfigError(f"{source}: model.alpha must be a non-negative number or a list of them")
    if not m["fit_tol"] > 0:
        raise ConfigError(f"{source}: model.fit_tol must be positive")
    return ModelConfig(m["type"], m["N"], float(m["J"]), tuple(float(a) for a in alphas), float(m["fit_tol"]))


def _integrator(raw: dict, lines: dict, source: str) -> IntegratorConfig:
    it = _check_section(raw, "integrator", lines, source)
    kr = _check_section(it["krylov"] or {}, "integrator.krylov", lines, source)
    trunc = None
    if it["truncation"] is not None:
        tr = _check_section(it["truncation"], "integrator.truncation", lines, source)
        trunc = Truncation(float(tr["epsilon"]), tr["d_max"])
    try:
        return IntegratorConfig(
            dt=float(it["dt"]),
            mode=it["mode"],
            scheme=it["scheme"],
            order=it["order"],
            krylov=KrylovConfig(float(kr["tol"]), kr["max_dim"], kr["reorthogonalize"], kr["max_restarts"]),
            truncation=trunc,
            skip_backward_in_imaginary=it["skip_backward_in_imaginary"],
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: integrator: {exc}") from None


def load_config(path: str | Path, task: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path), task)
