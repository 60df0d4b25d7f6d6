"""Problem configuration: JSON ingestion, schema validation and defaults.

A config is a JSON document with ``"schema_version": 1``. Angles are radians,
given either as numbers or as strings such as ``"pi/3"`` or ``"-0.5*pi"``.
Degree markers are rejected rather than converted.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .kinematics import HalfPlaneConstraint, JointSpec, PlanarRobot, SpatialRobot, eval_constraint, load_gp50
from .nlp import SolverOptions
from .verify import InfeasibleReferenceError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_ANGLE = {"anyOf": [{"type": "number"}, {"type": "string"}]}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_MAT3 = {"type": "array", "items": _VEC3, "minItems": 3, "maxItems": 3}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema_version", "robot", "reference", "constraints"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "angle_unit": {"const": "rad"},
        "robot": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["planar", "spatial"]},
                "link_lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "preset": {"enum": ["gp50"]},
                "dh": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "minItems": 4, "maxItems": 4,
                              "prefixItems": [_NUM, _NUM, _ANGLE, _ANGLE]},
                },
                "base_translation": _VEC3,
                "joints": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["translation", "axis"],
                        "additionalProperties": False,
                        "properties": {"rotation": _MAT3, "translation": _VEC3, "axis": _VEC3},
                    },
                },
                "tool": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"rotation": _MAT3, "translation": _VEC3},
                },
                "name": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "reference": {"type": "array", "items": _ANGLE, "minItems": 1},
        "constraints": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["normal", "offset"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "normal": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3},
                    "offset": _NUM,
                    "frame": {"type": "integer", "minimum": 1},
                },
            },
        },
        "cone_order": {"type": "integer", "minimum": 1},
        "max_y_degree": {"anyOf": [{"type": "integer", "minimum": 2}, {"type": "null"}]},
        "taylor_allowance": {"type": "boolean"},
        "solver": {"type": "object"},
        "verification": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "oracle": {"type": "boolean"},
                "grid_per_axis": {"type": "integer", "minimum": 2},
                "oracle_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    """Parse or validation failure; ``errors`` lists every problem found."""

    def __init__(self, message: str, errors: list[str] | None = None):
        self.errors = list(errors or [message])
        super().__init__(message if errors is None else message + "\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    robot: PlanarRobot | SpatialRobot
    reference: np.ndarray
    constraints: tuple[HalfPlaneConstraint, ...]
    cone_order: int = 2
    max_y_degree: int | None = 2
    taylor_allowance: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)
    samples: int = 10000
    seed: int = 0
    oracle: bool = True
    grid_per_axis: int | None = None
    oracle_tol: float = 1e-4
    source: str | None = None

    @property
    def dof(self) -> int:
        return self.robot.dof


_PI_RE = re.compile(r"^([+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?$")


def parse_angle(value) -> float:
    """Radians from a number or a ``k*pi/m`` style string."""
    if isinstance(value, bool):
        raise ValueError(f"not an angle: {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    else:
        text = str(value).strip().lower()
        if "deg" in text or "°" in text:
            raise ValueError(f"degrees are not accepted, use radians: {value!r}")
        m = _PI_RE.match(text.replace(" ", ""))
        if m:
            coeff = m.group(1)
            if coeff in ("", "+"):
                k = 1.0
            elif coeff == "-":
                k = -1.0
            else:
                k = float(coeff)
            out = k * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
        else:
            try:
                out = float(text)
            except ValueError:
                raise ValueError(f"cannot read angle {value!r}") from None
    if not math.isfinite(out):
        raise ValueError(f"angle must be finite: {value!r}")
    if abs(out) > 2.0 * math.pi:
        raise ValueError(f"angle {value!r} exceeds 2*pi; degrees are not accepted")
    return out


def shipped_configs() -> list[str]:
    root = resources.files("jte.configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config_path(path) -> Path:
    """A filesystem path, or the name of a shipped config (with or without ``.json``)."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if name in shipped_configs():
        with resources.as_file(resources.files("jte.configs") / f"{name}.json") as found:
            return Path(found)
    raise ConfigError(f"{path}: no such file or shipped config")


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _where(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _build_robot(raw: dict, errors: list[str]):
    kind = raw["kind"]
    if kind == "planar":
        if "link_lengths" not in raw:
            errors.append("robot: planar robots need link_lengths")
            return None
        return PlanarRobot(tuple(raw["link_lengths"]))
    forms = [k for k in ("preset", "dh", "joints") if k in raw]
    if len(forms) != 1:
        errors.append("robot: spatial robots need exactly one of preset, dh, joints")
        return None
    form = forms[0]
    try:
        if form == "preset":
            return load_gp50()
        if form == "dh":
            rows = []
            for i, row in enumerate(raw["dh"]):
                try:
                    rows.append((row[0], row[1], parse_angle(row[2]), parse_angle(row[3])))
                except ValueError as exc:
                    errors.append(f"robot/dh/{i}: {exc}")
            if len(rows) != len(raw["dh"]):
                return None
            return SpatialRobot.from_dh(rows, raw.get("base_translation", (0.0, 0.0, 0.0)),
                                        name=raw.get("name", "spatial"))
        joints = tuple(JointSpec(np.asarray(j.get("rotation", np.eye(3)), dtype=float), j["translation"], j["axis"])
                       for j in raw["joints"])
        tool = raw.get("tool", {})
        return SpatialRobot(joints, np.asarray(tool.get("rotation", np.eye(3)), dtype=float),
                            np.asarray(tool.get("translation", np.zeros(3)), dtype=float),
                            name=raw.get("name", "spatial"))
    except ValueError as exc:
        errors.append(f"robot: {exc}")
        return None


def _solver_options(raw: dict, errors: list[str]) -> SolverOptions:
    known = SolverOptions.__dataclass_fields__
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            errors.append(f"solver/{key}: unknown solver option")
            continue
        want = type(getattr(SolverOptions(), key))
        if isinstance(value, bool) or not isinstance(value, (int, float)) or (want is int and not isinstance(value, int)):
            errors.append(f"solver/{key}: expected {want.__name__}")
            continue
        kwargs[key] = want(value)
    return SolverOptions(**kwargs)


def parse_config(doc: dict, source: str = "<config>", *, check_reference: bool = True) -> ProblemSpec:
    """Validate a decoded config document and build the problem."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{_where(e)}: {e.message}" for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))]
    if errors:
        raise ConfigError(f"{source}: invalid config", errors)

    robot = _build_robot(doc["robot"], errors)
    reference = []
    for i, v in enumerate(doc["reference"]):
        try:
            reference.append(parse_angle(v))
        except ValueError as exc:
            errors.append(f"reference/{i}: {exc}")
    solver = _solver_options(doc.get("solver", {}), errors)

    constraints = []
    for i, raw in enumerate(doc["constraints"]):
        name = raw.get("name", f"c{i + 1}")
        try:
            constraints.append(HalfPlaneConstraint(raw["normal"], raw["offset"], name, raw.get("frame")))
        except ValueError as exc:
            errors.append(f"constraints/{i}: {exc}")

    cone_order = doc.get("cone_order", 2)
    if robot is not None:
        n = robot.dof
        if len(reference) == len(doc["reference"]) and len(reference) != n:
            errors.append(f"reference: expected {n} joint angles, got {len(reference)}")
        if not 1 <= cone_order <= n + 1:
            errors.append(f"cone_order: must be in 1..{n + 1}, got {cone_order}")
        for i, c in enumerate(constraints):
            if c.normal.size != robot.space_dim:
                errors.append(f"constraints/{i}: normal has {c.normal.size} entries, robot works in {robot.space_dim}D")
            if c.frame is not None and c.frame > n:
                errors.append(f"constraints/{i}: frame {c.frame} exceeds the {n} joints")
    names = [c.name for c in constraints]
    for dup in sorted({x for x in names if names.count(x) > 1}):
        errors.append(f"constraints: duplicate name {dup!r}")
    if errors:
        raise ConfigError(f"{source}: invalid config", errors)

    ver = doc.get("verification", {})
    spec = ProblemSpec(
        name=doc.get("name", Path(source).stem),
        robot=robot,
        reference=np.array(reference),
        constraints=tuple(constraints),
        cone_order=cone_order,
        max_y_degree=doc.get("max_y_degree", 2),
        taylor_allowance=doc.get("taylor_allowance", True),
        solver=solver,
        samples=ver.get("samples", 10000),
        seed=ver.get("seed", 0),
        oracle=ver.get("oracle", True),
        grid_per_axis=ver.get("grid_per_axis"),
        oracle_tol=ver.get("oracle_tol", 1e-4),
        source=source,
    )
    if check_reference:
        check_reference_feasible(spec)
    return spec


def check_reference_feasible(spec: ProblemSpec) -> None:
    for c in spec.constraints:
        f0 = float(eval_constraint(c, spec.robot, spec.reference))
        if not f0 > 0.0:
            raise InfeasibleReferenceError(
                f"constraint {c.name!r} is not satisfied at the reference configuration (f = {f0:.6g} m)")


def load_config(path, *, check_reference: bool = True) -> ProblemSpec:
    p = resolve_config_path(path)
    doc = _read_json(p)
    spec = parse_config(doc, str(p), check_reference=check_reference)
    logger.debug("loaded %s: %d joints, %d constraints", p, spec.dof, len(spec.constraints))
    return spec
