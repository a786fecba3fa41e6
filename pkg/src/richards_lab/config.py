"""JSON run configuration: schema, parsing, and a tiny expression language.

Expressions are written ``"expression:<expr>"`` and may use x, z, t, pi,
numbers, + - * / **, parentheses, sin, cos, exp, sqrt, abs, comparisons
(yielding 0/1) and ``where(cond, a, b)``.
"""

from __future__ import annotations

import ast
import copy
import json
import operator
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .bench import EX1_SOIL, SOILS, example1_source, trench_profile
from .constitutive import VanGenuchtenParams
from .mesh import DirichletFixed, DirichletTransient, NeumannNoFlow
from .schemes import SchemeSpec, StoppingRule, SwitchRule


class ConfigError(ValueError):
    pass


# -- expressions ---------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CMPOPS = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
           ast.GtE: np.greater_equal}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
_VARS = ("x", "z", "t")


def compile_expression(text: str):
    """Compile an arithmetic expression into ``f(x, z, t=0.0)``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return lambda env: np.pi
            if node.id in _VARS:
                name = node.id
                return lambda env: env[name]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            a = build(node.operand)
            sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return lambda env: sign * a(env)
        if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
            op, a, b = _CMPOPS[type(node.ops[0])], build(node.left), build(node.comparators[0])
            return lambda env: np.asarray(op(a(env), b(env)), dtype=float)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            args = [build(arg) for arg in node.args]
            if node.func.id in _FUNCS and len(args) == 1:
                fn, a = _FUNCS[node.func.id], args[0]
                return lambda env: fn(a(env))
            if node.func.id == "where" and len(args) == 3:
                c, a, b = args
                return lambda env: np.where(np.asarray(c(env)) != 0, a(env), b(env))
            raise ConfigError(f"unsupported call {node.func.id!r} in {text!r}")
        raise ConfigError(f"unsupported syntax in {text!r}")

    fn = build(tree)

    def f(x, z, t=0.0):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.asarray(fn({"x": x, "z": z, "t": t}), dtype=float),
                               np.broadcast(x, z).shape)

    f.source_text = text
    return f


def resolve_field(spec):
    """A number, ``"expression:..."`` or a named field."""
    if isinstance(spec, (int, float)):
        v = float(spec)
        return lambda x, z, t=0.0: np.full(np.broadcast(np.asarray(x), np.asarray(z)).shape, v)
    if isinstance(spec, str) and spec.startswith("expression:"):
        return compile_expression(spec[len("expression:"):])
    if spec == "example1_source":
        return example1_source
    if spec == "example1_top":
        return lambda x, z, t=0.0: np.full(np.broadcast(np.asarray(x), np.asarray(z)).shape, -3.0)
    raise ConfigError(f"unknown field {spec!r}")


def resolve_profile(name: str, params: dict):
    if name == "example2_trench":
        return trench_profile(float(params.get("dt_D", 1.0 / 16.0)))
    if name == "example1_top":
        return resolve_field("example1_top")
    if name.startswith("expression:"):
        return compile_expression(name[len("expression:"):])
    raise ConfigError(f"unknown transient profile {name!r}")


# -- schema --------------------------------------------------------------

_number = {"type": "number"}
_field = {"oneOf": [_number, {"type": "string"}]}
_interval = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "schemes"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["domain", "mesh", "soil", "initial", "tau", "steps"],
            "properties": {
                "domain": {"type": "array", "minItems": 2, "maxItems": 2,
                           "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
                "mesh": {"type": "array", "minItems": 1,
                         "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                   "minItems": 2, "maxItems": 2}},
                "soil": {"oneOf": [
                    {"type": "string", "enum": ["example1", "silt", "clay"]},
                    {"type": "object", "additionalProperties": False,
                     "required": ["theta_R", "theta_S", "alpha", "n", "K_S"],
                     "properties": {k: _number for k in ("theta_R", "theta_S", "alpha", "n", "K_S")}},
                ]},
                "boundary": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False, "required": ["type"],
                    "properties": {
                        "type": {"enum": ["dirichlet", "transient", "neumann"]},
                        "x": _interval, "z": _interval,
                        "value": _field,
                        "profile": {"type": "string"},
                        "params": {"type": "object", "additionalProperties": _number},
                    }}},
                "initial": _field,
                "source": {"oneOf": [{"type": "null"}, _field]},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "schemes": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {
                "kind": {"enum": ["lscheme", "picard", "newton", "mixed"]},
                "name": {"type": "string"},
                "L": {"type": "number", "exclusiveMinimum": 0},
                "first": {"enum": ["lscheme", "picard"]},
                "switch": {"type": "object", "additionalProperties": False, "properties": {
                    "delta_a": _number, "delta_r": _number,
                    "fixed_iterations": {"type": "integer", "minimum": 1}}},
                "retry_more_l_iterations": {"type": "boolean"},
            }}},
        "stopping": {"type": "object", "additionalProperties": False, "properties": {
            "eps_a": {"type": "number", "exclusiveMinimum": 0},
            "eps_r": {"type": "number", "minimum": 0},
            "max_iter": {"type": "integer", "minimum": 1}}},
        "output": {"type": "object", "additionalProperties": False, "properties": {
            "formats": {"type": "array", "items": {"enum": ["csv", "vtk"]}, "uniqueItems": True},
            "basename": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
            "condest": {"type": "boolean"}}},
    },
}

DEFAULTS = {
    "stopping": {"eps_a": 1e-5, "eps_r": 1e-5, "max_iter": 50},
    "output": {"formats": ["csv"], "basename": "report", "condest": True},
}


@dataclass
class RunConfig:
    """Validated configuration; ``data`` is the normalized JSON document."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {loc}: {exc.message}") from None
        data = copy.deepcopy(raw)
        for key, default in DEFAULTS.items():
            merged = dict(default)
            merged.update(data.get(key, {}))
            data[key] = merged
        data["problem"].setdefault("boundary", [])
        data["problem"].setdefault("source", None)
        cfg = cls(data)
        cfg.schemes()  # semantic checks (e.g. L required)
        cfg.soil()
        for b in data["problem"]["boundary"]:
            cfg._tag(b)
        resolve_field(data["problem"]["initial"])
        if data["problem"]["source"] is not None:
            resolve_field(data["problem"]["source"])
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    # -- materialization -------------------------------------------------
    def soil(self) -> VanGenuchtenParams:
        s = self.data["problem"]["soil"]
        if isinstance(s, str):
            return EX1_SOIL if s == "example1" else SOILS[s]
        try:
            return VanGenuchtenParams(**s)
        except ValueError as exc:
            raise ConfigError(f"invalid soil: {exc}") from None

    def stopping(self) -> StoppingRule:
        return StoppingRule(**self.data["stopping"])

    def schemes(self) -> list:
        out = []
        for s in self.data["schemes"]:
            sw = s.get("switch")
            switch = SwitchRule(**sw) if sw is not None else None
            try:
                out.append(SchemeSpec(
                    kind=s["kind"], L=s.get("L"), first=s.get("first"), switch=switch,
                    stopping=self.stopping(), name=s.get("name"),
                    retry_more_l_iterations=s.get("retry_more_l_iterations", False),
                ))
            except ValueError as exc:
                raise ConfigError(f"invalid scheme {s}: {exc}") from None
        return out

    @staticmethod
    def _matches(spec, v) -> bool:
        if spec is None:
            return True
        if isinstance(spec, (int, float)):
            return abs(v - spec) <= 1e-12
        lo, hi = spec
        return lo - 1e-12 <= v <= hi + 1e-12

    def _tag(self, b: dict):
        if b["type"] == "neumann":
            return NeumannNoFlow()
        if b["type"] == "dirichlet":
            if "value" not in b:
                raise ConfigError("dirichlet boundary needs a value")
            v = b["value"]
            return DirichletFixed(float(v) if isinstance(v, (int, float)) else resolve_field(v))
        if "profile" not in b:
            raise ConfigError("transient boundary needs a profile")
        resolve_profile(b["profile"], b.get("params", {}))
        return DirichletTransient(b["profile"])

    def boundary_rule(self):
        entries = [(b, self._tag(b)) for b in self.data["problem"]["boundary"]]

        def rule(x, z):
            for b, tag in entries:
                if self._matches(b.get("x"), x) and self._matches(b.get("z"), z):
                    return tag
            return NeumannNoFlow()

        return rule

    def profiles(self) -> dict:
        return {b["profile"]: resolve_profile(b["profile"], b.get("params", {}))
                for b in self.data["problem"]["boundary"] if b["type"] == "transient"}

    def definition(self):
        from .bench import ProblemDefinition

        p = self.data["problem"]
        (x0, x1), (z0, z1) = p["domain"]
        src = p["source"]
        source = None if src is None else resolve_field(src)
        init = resolve_field(p["initial"])
        return ProblemDefinition(
            name="run",
            variant="config",
            domain=((float(x0), float(x1)), (float(z0), float(z1))),
            resolutions=tuple(tuple(m) for m in p["mesh"]),
            soil=self.soil(),
            boundary_rule=self.boundary_rule(),
            initial=lambda x, z: init(x, z, 0.0),
            source=source,
            tau=float(p["tau"]),
            N=int(p["steps"]),
            schemes=tuple(self.schemes()),
            profiles=self.profiles(),
        )
