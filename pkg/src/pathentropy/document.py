"""YAML model documents.

A document either lists a system explicitly::

    schema_version: 1
    label: two pools in series
    dimension: 2
    u: [1, 0]
    B:            # row-major, B[i][j] is the rate from pool j to pool i
      - [-1, 0]
      - [1, -1]
    units: {flux: PgC/yr, rate: 1/yr, stock: PgC}

or names a built-in model::

    schema_version: 1
    builtin: {name: emanuel, params: {xi: 2.0}}
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
import yaml

from . import models
from .system import CompartmentalSystem

SCHEMA_VERSION = 1
BUILTINS = ("emanuel", "wang", "table1")
_PARAMS = {
    "emanuel": {"xi"},
    "wang": {f.name for f in fields(models.WangParameters)},
    "table1": {"row", "lam"},
}
_TOP_KEYS = {"schema_version", "label", "dimension", "u", "B", "units", "builtin"}


class DocumentError(ValueError):
    """The document cannot be parsed or is structurally inconsistent (CLI exit 2)."""


@dataclass(frozen=True)
class ModelDocument:
    schema_version: int = SCHEMA_VERSION
    label: Optional[str] = None
    dimension: Optional[int] = None
    u: Optional[tuple] = None
    B: Optional[tuple] = None
    units: dict = field(default_factory=dict)
    builtin: Optional[dict] = None

    @classmethod
    def from_system(cls, sys: CompartmentalSystem, units: Optional[dict] = None) -> "ModelDocument":
        return cls(label=sys.label, dimension=sys.d,
                   u=tuple(float(v) for v in sys.u),
                   B=tuple(tuple(float(v) for v in row) for row in sys.B),
                   units=dict(units or {}))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(B, u)`` as float arrays, without validating the system."""
        if self.builtin is not None:
            sys = self.to_system()
            return np.array(sys.B), np.array(sys.u)
        return np.array(self.B, dtype=float), np.array(self.u, dtype=float)

    def to_system(self) -> CompartmentalSystem:
        if self.builtin is None:
            return CompartmentalSystem(np.array(self.u, dtype=float),
                                       np.array(self.B, dtype=float), label=self.label)
        return _build_builtin(self.builtin["name"], self.builtin.get("params") or {})

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version}
        if self.label is not None:
            out["label"] = self.label
        if self.builtin is not None:
            out["builtin"] = {"name": self.builtin["name"],
                              "params": dict(self.builtin.get("params") or {})}
            return out
        out["dimension"] = len(self.u) if self.dimension is None else self.dimension
        out["u"] = [float(v) for v in self.u]
        out["B"] = [[float(v) for v in row] for row in self.B]
        if self.units:
            out["units"] = dict(self.units)
        return out


def _build_builtin(name: str, params: dict) -> CompartmentalSystem:
    if name in _PARAMS:
        _check_keys(params, _PARAMS[name], name)
    if name == "emanuel":
        return models.emanuel(float(params.get("xi", 1.0)))
    if name == "wang":
        return models.wang(**{k: float(v) for k, v in params.items()})
    if name == "table1":
        row = params.get("row", 1)
        if not isinstance(row, int) or not 1 <= row <= 7:
            raise DocumentError(f"table1 row must be an integer 1..7, got {row!r}")
        return models.table1_systems(float(params.get("lam", 1.0)))[row - 1]
    raise DocumentError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")


def _check_keys(params, allowed, name):
    extra = set(params) - allowed
    if extra:
        raise DocumentError(f"unknown {name} parameter(s): {', '.join(sorted(extra))}")


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {v!r}")
    return float(v)


def from_dict(data) -> ModelDocument:
    if not isinstance(data, dict):
        raise DocumentError("document must be a mapping")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise DocumentError(f"unknown key(s): {', '.join(sorted(map(str, extra)))}")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DocumentError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    label = data.get("label")
    if label is not None:
        label = str(label)
    units = data.get("units") or {}
    if not isinstance(units, dict) or set(units) - {"flux", "rate", "stock"}:
        raise DocumentError("units must be a mapping with keys among flux, rate, stock")
    units = {k: str(v) for k, v in units.items()}

    has_explicit = "u" in data or "B" in data
    if has_explicit == ("builtin" in data):
        raise DocumentError("give either u and B, or builtin (exactly one)")

    if "builtin" in data:
        b = data["builtin"]
        if isinstance(b, str):
            b = {"name": b}
        if not isinstance(b, dict) or "name" not in b or set(b) - {"name", "params"}:
            raise DocumentError("builtin must be a mapping with 'name' and optional 'params'")
        params = b.get("params") or {}
        if not isinstance(params, dict):
            raise DocumentError("builtin params must be a mapping")
        if b["name"] not in BUILTINS:
            raise DocumentError(f"unknown builtin {b['name']!r}; choose from {', '.join(BUILTINS)}")
        doc = ModelDocument(schema_version=version, label=label, units=units,
                            builtin={"name": b["name"], "params": dict(params)})
        _check_keys(params, _PARAMS[b["name"]], b["name"])
        return doc

    if "u" not in data or "B" not in data:
        raise DocumentError("explicit systems need both u and B")
    u, B = data["u"], data["B"]
    if isinstance(u, (int, float)) and not isinstance(u, bool):
        u = [u]
    if isinstance(B, (int, float)) and not isinstance(B, bool):
        B = [[B]]
    if not isinstance(u, list) or not u:
        raise DocumentError("u must be a nonempty list")
    if not isinstance(B, list) or not all(isinstance(r, list) for r in B):
        raise DocumentError("B must be a list of rows")
    d = len(u)
    if len(B) != d or any(len(r) != d for r in B):
        raise DocumentError(f"B must be {d}x{d} to match u")
    dim = data.get("dimension")
    if dim is not None and dim != d:
        raise DocumentError(f"dimension {dim!r} does not match len(u) = {d}")
    u_t = tuple(_number(v, f"u[{k + 1}]") for k, v in enumerate(u))
    B_t = tuple(tuple(_number(v, f"B[{i + 1}][{j + 1}]") for j, v in enumerate(r))
                for i, r in enumerate(B))
    return ModelDocument(schema_version=version, label=label, dimension=d, u=u_t, B=B_t,
                         units=units)


def loads(text: str) -> ModelDocument:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DocumentError(f"YAML parse error: {exc}") from exc
    return from_dict(data)


def load(path) -> ModelDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def dumps(doc: ModelDocument) -> str:
    # yaml renders floats with repr, so values survive a round trip exactly
    return yaml.safe_dump(doc.to_dict(), sort_keys=False, default_flow_style=None)

