"""Serial-arm forward kinematics, half-plane constraints and small-angle lower bounds.

Both robot kinds reduce to the same representation: the Cartesian position
of a chosen body point as a polynomial in per-joint trig atoms
``c_i = cos(x_i)`` and ``s_i = sin(x_i)``. The lower-bound polynomial is
obtained by substituting angle-sum expansions with small-angle replacements
for those atoms.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Sequence

import numpy as np

from .polyalg import LAMBDA, Polynomial, Var, deviation_vars

logger = logging.getLogger(__name__)

#: Above this deviation the small-angle replacements lose their ~1% accuracy.
SMALL_ANGLE_LIMIT = 0.244


class KinematicsError(ValueError):
    pass


def cos_atom(i: int) -> Var:
    return Var(f"c{i + 1}", "trig")


def sin_atom(i: int) -> Var:
    return Var(f"s{i + 1}", "trig")


# --------------------------------------------------------------------------- robots


@dataclass(frozen=True)
class PlanarRobot:
    """Planar chain whose joint angles are measured in the world frame."""

    link_lengths: tuple[float, ...]
    kind: str = field(default="planar", init=False)

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        object.__setattr__(self, "link_lengths", lengths)
        if not lengths:
            raise KinematicsError("a robot needs at least one joint")
        if any(not (v > 0) or not math.isfinite(v) for v in lengths):
            raise KinematicsError("link lengths must be positive and finite")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def space_dim(self) -> int:
        return 2

    def num_frames(self) -> int:
        return self.dof

    def fk(self, x, frame: int | None = None) -> np.ndarray:
        """Angle-sum position; ``x`` may carry leading batch dimensions."""
        x = _check_joints(self, x)
        k = self.dof if frame is None else frame
        L = np.asarray(self.link_lengths[:k])
        xs = x[..., :k]
        return np.stack([(L * np.cos(xs)).sum(-1), (L * np.sin(xs)).sum(-1)], axis=-1)

    def fk_matrix_chain(self, x, frame: int | None = None) -> np.ndarray:
        """Same position via a product of homogeneous planar transforms."""
        x = np.asarray(x, dtype=float)
        k = self.dof if frame is None else frame
        T = np.eye(3)
        prev = 0.0
        for i in range(k):
            rel = x[i] - prev
            prev = x[i]
            c, s = math.cos(rel), math.sin(rel)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            trans = np.array([[1.0, 0.0, self.link_lengths[i]], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
            T = T @ rot @ trans
        return T[:2, 2].copy()

    def position_atoms(self, frame: int | None = None) -> list[Polynomial]:
        k = self.dof if frame is None else frame
        px = Polynomial()
        py = Polynomial()
        for i in range(k):
            px = px + Polynomial.var(cos_atom(i), self.link_lengths[i])
            py = py + Polynomial.var(sin_atom(i), self.link_lengths[i])
        return [px, py]


@dataclass(frozen=True)
class JointSpec:
    """Fixed transform from the previous frame followed by a rotation about ``axis``."""

    rotation: np.ndarray
    translation: np.ndarray
    axis: np.ndarray


def _as_rotation(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise KinematicsError("rotation blocks must be 3x3")
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0) or np.linalg.det(r) < 0:
        raise KinematicsError("rotation blocks must be orthonormal with det +1 (tolerance 1e-9)")
    return r


@dataclass(frozen=True, eq=False)
class SpatialRobot:
    """Serial chain ``F_0 R_1(x_1) F_1 R_2(x_2) ... R_n(x_n) F_n``.

    ``joints[i]`` holds the fixed transform ``F_i`` preceding joint ``i+1`` and
    its rotation axis; ``tool`` is the final fixed transform to the body point.
    """

    joints: tuple[JointSpec, ...]
    tool_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    tool_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "spatial"
    kind: str = field(default="spatial", init=False)

    def __post_init__(self):
        if not self.joints:
            raise KinematicsError("a robot needs at least one joint")
        fixed = []
        for j in self.joints:
            axis = np.asarray(j.axis, dtype=float)
            norm = np.linalg.norm(axis)
            if axis.shape != (3,) or norm == 0:
                raise KinematicsError("joint axes must be nonzero 3-vectors")
            t = np.asarray(j.translation, dtype=float)
            if t.shape != (3,):
                raise KinematicsError("translations must be 3-vectors")
            fixed.append(JointSpec(_as_rotation(j.rotation), t, axis / norm))
        object.__setattr__(self, "joints", tuple(fixed))
        object.__setattr__(self, "tool_rotation", _as_rotation(self.tool_rotation))
        tt = np.asarray(self.tool_translation, dtype=float)
        if tt.shape != (3,):
            raise KinematicsError("tool translation must be a 3-vector")
        object.__setattr__(self, "tool_translation", tt)

    @classmethod
    def from_dh(cls, table: Sequence[Sequence[float]], base_translation=(0.0, 0.0, 0.0), name="spatial"):
        """Build from standard DH rows ``(d, a, alpha, theta_offset)``.

        Row ``i`` describes ``Rz(x_i + offset) Tz(d) Tx(a) Rx(alpha)``.
        """
        rows = [tuple(float(v) for v in row) for row in table]
        joints = []
        prev_r = np.eye(3)
        prev_t = np.asarray(base_translation, dtype=float)
        for d, a, alpha, offset in rows:
            r = prev_r @ _rot_z(offset)
            joints.append(JointSpec(r, prev_t, np.array([0.0, 0.0, 1.0])))
            prev_r = _rot_x(alpha)
            prev_t = np.array([a, 0.0, d])
            # Tz(d) Tx(a) Rx(alpha): translation (a, 0, d), rotation Rx(alpha)
        return cls(tuple(joints), tool_rotation=prev_r, tool_translation=prev_t, name=name)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def space_dim(self) -> int:
        return 3

    def num_frames(self) -> int:
        return self.dof

    @cached_property
    def _axis_parts(self):
        parts = []
        for j in self.joints:
            a = j.axis
            K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
            A = np.outer(a, a)
            parts.append((A, np.eye(3) - A, K))
        return parts

    def _frame_tail(self, frame: int | None):
        k = self.dof if frame is None else frame
        if k == self.dof:
            return k, self.tool_rotation, self.tool_translation
        nxt = self.joints[k]
        return k, nxt.rotation, nxt.translation

    def fk(self, x, frame: int | None = None) -> np.ndarray:
        """Homogeneous-matrix product; ``x`` may carry leading batch dimensions."""
        x = _check_joints(self, x)
        k, _, tail_t = self._frame_tail(frame)
        batch = x.shape[:-1]
        R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
        p = np.zeros(batch + (3,))
        for i in range(k):
            j = self.joints[i]
            p = p + np.einsum("...ij,j->...i", R, j.translation)
            R = np.einsum("...ij,jk->...ik", R, j.rotation)
            A, B, K = self._axis_parts[i]
            c = np.cos(x[..., i])[..., None, None]
            s = np.sin(x[..., i])[..., None, None]
            R = np.einsum("...ij,...jk->...ik", R, A + c * B + s * K)
        return p + np.einsum("...ij,j->...i", R, tail_t)

    def position_atoms(self, frame: int | None = None) -> list[Polynomial]:
        """Body-point position as polynomials in the trig atoms (backward recursion)."""
        k, _, tail_t = self._frame_tail(frame)
        v = [Polynomial.constant(float(t)) for t in tail_t]
        for i in reversed(range(k)):
            A, B, K = self._axis_parts[i]
            c = Polynomial.var(cos_atom(i))
            s = Polynomial.var(sin_atom(i))
            rotated = []
            for r in range(3):
                acc = Polynomial()
                for col in range(3):
                    # rotation about the axis is A + cos(x) B + sin(x) K
                    entry = c * B[r, col] + s * K[r, col] + A[r, col]
                    if not entry.is_zero():
                        acc = acc + entry * v[col]
                rotated.append(acc)
            j = self.joints[i]
            v = [
                sum((rotated[col] * j.rotation[r, col] for col in range(3) if j.rotation[r, col] != 0.0), Polynomial())
                + float(j.translation[r])
                for r in range(3)
            ]
        return v


def _rot_z(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _check_joints(robot, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != robot.dof:
        raise KinematicsError(f"expected {robot.dof} joint values, got shape {x.shape}")
    return x


def load_gp50() -> SpatialRobot:
    """Approximate YASKAWA GP50 model from the shipped DH table."""
    data = json.loads(resources.files("jte.data").joinpath("gp50.json").read_text())
    return SpatialRobot.from_dh(data["dh"], base_translation=data.get("base_translation", (0, 0, 0)), name="gp50")


# --------------------------------------------------------------------------- constraints


@dataclass(frozen=True, eq=False)
class HalfPlaneConstraint:
    """Safe iff ``normal . p <= offset`` for the tracked body point ``p``.

    ``frame`` selects the body point (``None`` means the end effector).
    """

    normal: np.ndarray
    offset: float
    name: str = "constraint"
    frame: int | None = None

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float)
        if a.ndim != 1 or not np.all(np.isfinite(a)) or np.linalg.norm(a) == 0:
            raise KinematicsError(f"{self.name}: normal must be a nonzero finite vector")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def unit_normal(self) -> np.ndarray:
        return self.normal / np.linalg.norm(self.normal)

    @property
    def unit_offset(self) -> float:
        return self.offset / float(np.linalg.norm(self.normal))

    def _check_robot(self, robot):
        if self.normal.shape[0] != robot.space_dim:
            raise KinematicsError(
                f"{self.name}: normal has dimension {self.normal.shape[0]}, robot works in {robot.space_dim}D"
            )
        if self.frame is not None and not 1 <= self.frame <= robot.num_frames():
            raise KinematicsError(f"{self.name}: frame {self.frame} out of range 1..{robot.num_frames()}")


def fk_position(robot, x, frame: int | None = None) -> np.ndarray:
    return robot.fk(x, frame)


def eval_constraint(c: HalfPlaneConstraint, robot, x) -> np.ndarray | float:
    """Signed distance ``(offset - a.p) / |a|`` in meters; positive is safe."""
    c._check_robot(robot)
    p = robot.fk(x, c.frame)
    val = c.unit_offset - p @ c.unit_normal
    return float(val) if np.ndim(val) == 0 else val


def constraint_atoms(c: HalfPlaneConstraint, robot) -> Polynomial:
    """Constraint as a polynomial in the trig atoms."""
    c._check_robot(robot)
    pos = robot.position_atoms(c.frame)
    out = Polynomial.constant(c.unit_offset)
    for a, p in zip(c.unit_normal, pos):
        if a != 0.0:
            out = out - p * float(a)
    return out


def small_angle_atoms(xr: Sequence[float]) -> dict[Var, Polynomial]:
    """Angle-sum expansions of the atoms with cos(d) -> 1 - d^2/2 and sin(d) -> d, d = y_i * lambda."""
    ys = deviation_vars(len(xr))
    out = {}
    for i, (xi, y) in enumerate(zip(xr, ys)):
        d = Polynomial.var(y) * Polynomial.var(LAMBDA)
        cos_d = 1.0 - d * d * 0.5
        cr, sr = math.cos(xi), math.sin(xi)
        out[cos_atom(i)] = cos_d * cr - d * sr
        out[sin_atom(i)] = cos_d * sr + d * cr
    return out


def lower_bound_poly(c: HalfPlaneConstraint, robot, xr: Sequence[float]) -> Polynomial:
    """Small-angle polynomial g(y, lambda) standing in for f(xr + y*lambda)."""
    xr = np.asarray(xr, dtype=float)
    if xr.shape != (robot.dof,) or not np.all(np.isfinite(xr)):
        raise KinematicsError(f"reference must be {robot.dof} finite joint angles")
    f_atoms = constraint_atoms(c, robot)
    return f_atoms.substitute(small_angle_atoms(xr))


def truncate_with_remainder(g: Polynomial, n: int, max_degree: int) -> tuple[Polynomial, Polynomial]:
    """Keep terms of degree <= ``max_degree`` in y, subtract a bound on the rest.

    On ``|y_i| <= 1`` every dropped term ``c * m(y) * lambda^k`` is at least
    ``-|c| lambda^k``, so the returned polynomial never exceeds ``g``.
    Returns ``(bounded, remainder_bound)``.
    """
    ys = deviation_vars(n)
    kept = {}
    bound = {}
    for m, coef in g.items():
        ym, rest = m.split(ys)
        if ym.degree <= max_degree:
            kept[m] = coef
        else:
            bound[rest] = bound.get(rest, 0.0) + abs(coef)
    remainder = Polynomial(bound)
    return Polynomial(kept) - remainder, remainder


def _atom_error_bound() -> Polynomial:
    """Bound on |(cos d, sin d) - (1 - d^2/2, d)| for |d| <= lambda."""
    lam = Polynomial.var(LAMBDA)
    return lam ** 3 * (1.0 / 6.0) + lam ** 4 * (1.0 / 24.0)


def taylor_allowance(c: HalfPlaneConstraint, robot) -> Polynomial:
    """Polynomial in lambda bounding |f - g| on the cube, g the small-angle polynomial.

    Replacing joint ``i``'s rotation by its small-angle surrogate moves the
    body point by at most ``rho_i * e(lambda)`` times the norm of the already
    replaced rotations, where ``rho_i`` is the lever arm beyond joint ``i``.
    """
    c._check_robot(robot)
    err = _atom_error_bound()
    k = robot.dof if c.frame is None else c.frame
    if robot.kind == "planar":
        return err * float(sum(robot.link_lengths[:k]))
    _, _, tail_t = robot._frame_tail(c.frame)
    lever = float(np.linalg.norm(tail_t))
    arms = []
    for j in reversed(range(k)):
        arms.append(lever)
        lever += float(np.linalg.norm(robot.joints[j].translation))
    arms.reverse()
    growth = 1.0 + Polynomial.var(LAMBDA) ** 4 * 0.125
    total = Polynomial()
    scale = Polynomial.constant(1.0)
    for rho in arms:
        total = total + scale * err * rho
        scale = scale * growth
    return total


@dataclass(frozen=True)
class LowerBound:
    """Polynomial actually certified, with its pieces.

    ``poly = truncated small-angle part - truncation_bound - allowance``.
    """

    poly: Polynomial
    small_angle: Polynomial
    truncation_bound: Polynomial
    allowance: Polynomial


def certified_lower_bound(c: HalfPlaneConstraint, robot, xr: Sequence[float], max_y_degree: int | None = 2,
                          allowance: bool = True) -> LowerBound:
    """Lower bound of f(xr + y*lambda) valid on |y_i| <= 1 for every lambda >= 0."""
    g = lower_bound_poly(c, robot, xr)
    if max_y_degree is not None and g.degree(deviation_vars(robot.dof)) > max_y_degree:
        poly, trunc = truncate_with_remainder(g, robot.dof, max_y_degree)
    else:
        poly, trunc = g, Polynomial()
    extra = taylor_allowance(c, robot) if allowance else Polynomial()
    return LowerBound(poly - extra, g, trunc, extra)
