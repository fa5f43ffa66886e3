"""Flat ``key = value`` run configurations and the bundled standard runs."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .field import Field
from .solver import ConfigError, SolverConfig, dipole_data, dyadic_times, gaussian_data

BUNDLED = ("std2d", "std3d", "lin2d", "dipole2d", "std4d")

_SOLVER_KEYS = {"n": int, "N": int, "L": float, "nonlinearity": str, "dt_initial": float,
                "t_end": float, "dealias": "bool", "box_double": "bool", "tail_tol": float,
                "dt_rel": float, "dt_max": float, "c_stab": float}
_DATA_KEYS = {"data": str, "M0": float, "tau0": float, "amplitude": float, "axis": int}


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {lineno}: empty key")
        out[k] = v
    return out


def _vector(v: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in v.replace(",", " ").split())
    except ValueError as e:
        raise ConfigError(f"bad vector {v!r}") from e


def _checkpoints(v: str, t_end: float) -> tuple[float, ...]:
    parts = v.split()
    try:
        if parts and parts[0] == "dyadic":
            t0, t1 = float(parts[1]), float(parts[2])
            per = int(parts[3]) if len(parts) > 3 else 1
            return tuple(dyadic_times(t0, min(t1, t_end), per))
        return tuple(float(x) for x in v.replace(",", " ").split())
    except (ValueError, IndexError) as e:
        raise ConfigError(f"bad checkpoints {v!r}") from e


@dataclass
class RunConfig:
    """A solver configuration plus the recipe for its initial data."""

    solver: SolverConfig
    data: str = "gaussian"
    M0: float = 1.0
    tau0: float = 1.0
    amplitude: float = 1.0
    axis: int = 0
    center: tuple | None = None
    name: str = ""
    raw: dict = field(default_factory=dict)

    def initial_field(self) -> Field:
        c = self.solver
        if self.data == "gaussian":
            return gaussian_data(c.n, c.N, c.L, self.M0, self.tau0, self.center)
        if self.data == "dipole":
            return dipole_data(c.n, c.N, c.L, self.amplitude, self.tau0, self.axis)
        raise ConfigError(f"unknown data kind {self.data!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "solver": self.solver.to_dict(), "data": self.data, "M0": self.M0,
                "tau0": self.tau0, "amplitude": self.amplitude, "axis": self.axis,
                "center": list(self.center) if self.center else None}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def build_config(kv: dict[str, str], overrides: dict | None = None, name: str = "") -> RunConfig:
    kv = dict(kv)
    for k, v in (overrides or {}).items():
        if v is not None:
            kv[k] = str(v)
    known = set(_SOLVER_KEYS) | set(_DATA_KEYS) | {"a", "checkpoints", "center"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    for req in ("n", "N", "L", "a", "t_end"):
        if req not in kv:
            raise ConfigError(f"missing required key {req!r}")
    args = {}
    for k, typ in _SOLVER_KEYS.items():
        if k in kv:
            try:
                args[k] = _bool(kv[k]) if typ == "bool" else typ(kv[k])
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {kv[k]!r}") from e
    args["a"] = _vector(kv["a"])
    if "checkpoints" in kv:
        args["checkpoint_times"] = _checkpoints(kv["checkpoints"], args["t_end"])
    if "dt_initial" not in args:
        h = 2.0 * args["L"] / args["N"]
        args["dt_initial"] = min(1e-3, 0.4 * h * h)
    solver = SolverConfig(**args)
    data = {}
    for k, typ in _DATA_KEYS.items():
        if k in kv:
            try:
                data[k] = typ(kv[k])
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {kv[k]!r}") from e
    center = _vector(kv["center"]) if "center" in kv else None
    if center is not None and len(center) != solver.n:
        raise ConfigError("center has the wrong length")
    if not math.isfinite(data.get("tau0", 1.0)) or data.get("tau0", 1.0) <= 0:
        raise ConfigError("tau0 must be positive")
    return RunConfig(solver, center=center, name=name, raw=kv, **data)


def load_config(name_or_path, overrides: dict | None = None) -> RunConfig:
    """Load a bundled configuration by name or a ``key = value`` file by path."""
    p = Path(str(name_or_path))
    if p.exists():
        text, name = p.read_text(), p.stem
    elif str(name_or_path) in BUNDLED:
        name = str(name_or_path)
        text = resources.files("burgers_asym").joinpath("configs", f"{name}.cfg").read_text()
    else:
        raise ConfigError(f"no config file or bundled config named {name_or_path!r}")
    return build_config(parse_kv(text), overrides, name)
