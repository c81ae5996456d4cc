"""Forward and inverse kinematics for tree-structured robot models."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from mobman.assets.model import JointSpec, RobotModel
from mobman.errors import MissingJoint, NoConvergence, UnknownLink, UnreachableTarget
from mobman.geometry import JointState, Pose3D, matrix_to_quat, normalize_angle

JointValues = Union[JointState, Mapping[str, float]]


def _as_map(q: JointValues) -> Mapping[str, float]:
    return q.as_dict() if isinstance(q, JointState) else q


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


class _Tree:
    """Precomputed traversal order and fixed transforms for one model."""

    def __init__(self, model: RobotModel):
        self.model = model
        children: dict[str, list[JointSpec]] = {}
        for j in model.joints:
            children.setdefault(j.parent, []).append(j)
        order: list[JointSpec] = []
        stack = [model.root_link]
        while stack:
            cur = stack.pop()
            for j in reversed(children.get(cur, [])):
                order.append(j)
                stack.append(j.child)
        self.order = order
        self.origin = {j.name: j.origin.as_matrix() for j in model.joints}
        self.axis = {j.name: np.asarray(j.axis, dtype=float) for j in model.joints}
        self.actuated = [j.name for j in model.joints if j.actuated]
        self.chains: dict[str, list[JointSpec]] = {}

    def chain(self, tip: str) -> list[JointSpec]:
        if tip not in self.chains:
            if tip not in self.model.link_names:
                raise UnknownLink(tip)
            self.chains[tip] = self.model.chain(tip)
        return self.chains[tip]

    def joint_matrix(self, j: JointSpec, value: float) -> np.ndarray:
        m = self.origin[j.name].copy()
        if j.kind in ("revolute", "continuous"):
            m[:3, :3] = m[:3, :3] @ axis_angle_matrix(self.axis[j.name], value)
        elif j.kind == "prismatic":
            m[:3, 3] = m[:3, 3] + m[:3, :3] @ (self.axis[j.name] * value)
        return m


_trees: dict[int, _Tree] = {}


def _tree(model: RobotModel) -> _Tree:
    t = _trees.get(id(model))
    if t is None or t.model is not model:
        if len(_trees) > 256:
            _trees.clear()
        t = _trees[id(model)] = _Tree(model)
    return t


def link_transforms(model: RobotModel, q: JointValues) -> dict[str, np.ndarray]:
    """4x4 root-frame transform of every link."""
    qm = _as_map(q)
    tree = _tree(model)
    out = {model.root_link: np.eye(4)}
    for j in tree.order:
        if j.actuated:
            try:
                v = qm[j.name]
            except KeyError:
                raise MissingJoint(j.name) from None
        else:
            v = 0.0
        out[j.child] = out[j.parent] @ tree.joint_matrix(j, v)
    return out


def forward_kinematics(model: RobotModel, q: JointValues) -> dict[str, Pose3D]:
    """Pose of every link in the model's root frame."""
    return {name: Pose3D.from_matrix(m) for name, m in link_transforms(model, q).items()}


def tip_transform(model: RobotModel, tip_link: str, q: JointValues) -> np.ndarray:
    """Root-frame transform of one link, touching only its chain."""
    qm = _as_map(q)
    tree = _tree(model)
    m = np.eye(4)
    for j in tree.chain(tip_link):
        if j.actuated:
            try:
                v = qm[j.name]
            except KeyError:
                raise MissingJoint(j.name) from None
        else:
            v = 0.0
        m = m @ tree.joint_matrix(j, v)
    return m


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix."""
    cos = max(-1.0, min(1.0, (np.trace(r) - 1.0) / 2.0))
    angle = math.acos(cos)
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-7:
        return v / 2.0
    if math.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        q = matrix_to_quat(r)
        axis = np.array(q[1:])
        n = np.linalg.norm(axis)
        return axis / n * angle if n > 0 else np.zeros(3)
    return v * (angle / (2.0 * math.sin(angle)))


def chain_joint_names(model: RobotModel, tip_link: str) -> list[str]:
    return [j.name for j in _tree(model).chain(tip_link) if j.actuated]


def jacobian(
    model: RobotModel,
    tip_link: str,
    q: JointValues,
    joints: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """6xN geometric Jacobian [linear; angular] of ``tip_link`` in the root frame.

    Columns follow ``joints`` (default: actuated joints on the tip chain).
    Joints off the chain get zero columns.
    """
    qm = _as_map(q)
    tree = _tree(model)
    names = list(joints) if joints is not None else chain_joint_names(model, tip_link)
    frames: dict[str, tuple[np.ndarray, np.ndarray, str]] = {}
    m = np.eye(4)
    for j in tree.chain(tip_link):
        if j.actuated:
            try:
                v = qm[j.name]
            except KeyError:
                raise MissingJoint(j.name) from None
        else:
            v = 0.0
        m = m @ tree.joint_matrix(j, v)
        # the joint's own motion leaves its axis and origin fixed in the child frame
        frames[j.name] = (m[:3, :3] @ tree.axis[j.name], m[:3, 3].copy(), j.kind)
    p_tip = m[:3, 3]
    jac = np.zeros((6, len(names)))
    for k, n in enumerate(names):
        if n not in frames:
            continue
        a, o, kind = frames[n]
        if kind in ("revolute", "continuous"):
            jac[:3, k] = np.cross(a, p_tip - o)
            jac[3:, k] = a
        elif kind == "prismatic":
            jac[:3, k] = a
    return jac


@dataclass(frozen=True)
class IkOptions:
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    max_iters: int = 200
    damping: float = 0.05
    max_step: float = 0.2
    # "none": position only; "full": whole orientation; "axis": tool z axis only
    orientation: str = "none"
    joints: Optional[tuple[str, ...]] = None
    check_reach: bool = True
    stall_iters: int = 40


def _limits(model: RobotModel, names):
    lo, hi, wrap = [], [], []
    for n in names:
        j = model.joint(n)
        if j.kind == "continuous" or j.limits is None:
            lo.append(-np.inf)
            hi.append(np.inf)
            wrap.append(j.kind == "continuous")
        else:
            lo.append(j.limits[0])
            hi.append(j.limits[1])
            wrap.append(False)
    return np.array(lo), np.array(hi), np.array(wrap)


def reach_bound(model: RobotModel, tip_link: str, q: JointValues) -> tuple[np.ndarray, float]:
    """Center and radius of a sphere containing every reachable tip position."""
    chain = _tree(model).chain(tip_link)
    first = next((i for i, j in enumerate(chain) if j.actuated), None)
    qm = _as_map(q)
    if first is None:
        return tip_transform(model, tip_link, qm)[:3, 3], 0.0
    m = np.eye(4)
    for j in chain[:first]:
        m = m @ _tree(model).joint_matrix(j, 0.0)
    center = (m @ chain[first].origin.as_matrix())[:3, 3]
    radius = 0.0
    for j in chain[first + 1:]:
        radius += float(np.linalg.norm(j.origin.translation))
    for j in chain[first:]:
        if j.kind == "prismatic" and j.limits is not None:
            radius += max(abs(j.limits[0]), abs(j.limits[1]))
    return center, radius


def _error(cur: np.ndarray, target: np.ndarray, mode: str):
    e_pos = target[:3, 3] - cur[:3, 3]
    if mode == "full":
        e_rot = rotation_log(target[:3, :3] @ cur[:3, :3].T)
        return e_pos, e_rot, float(np.linalg.norm(e_rot))
    if mode == "axis":
        z, zt = cur[:3, 2], target[:3, 2]
        c = np.cross(z, zt)
        s = float(np.linalg.norm(c))
        ang = math.atan2(s, float(np.dot(z, zt)))
        if s < 1e-12:
            perp = np.cross(z, [1.0, 0.0, 0.0])
            if np.linalg.norm(perp) < 1e-6:
                perp = np.cross(z, [0.0, 1.0, 0.0])
            c, s = perp, float(np.linalg.norm(perp))
        return e_pos, c / s * ang, ang
    return e_pos, None, 0.0


def ik_solve(
    model: RobotModel,
    tip_link: str,
    target: Pose3D,
    seed: JointValues,
    opts: IkOptions = IkOptions(),
) -> JointState:
    """Damped least-squares IK.

    Returns the seed state with the solved joints replaced. Raises
    :class:`UnreachableTarget` when the target lies outside the chain's reach
    sphere or the solver stalls above tolerance, :class:`NoConvergence` when
    ``max_iters`` is exhausted while still making progress.
    """
    seed_state = seed if isinstance(seed, JointState) else JointState.from_mapping(dict(seed))
    qm = dict(seed_state.as_dict())
    names = list(opts.joints) if opts.joints is not None else [
        n for n in chain_joint_names(model, tip_link) if n in qm
    ]
    for n in chain_joint_names(model, tip_link):
        if n not in qm:
            raise MissingJoint(n)
    tgt = target.as_matrix()
    if opts.check_reach:
        center, radius = reach_bound(model, tip_link, qm)
        if np.linalg.norm(tgt[:3, 3] - center) > radius + opts.pos_tol:
            raise UnreachableTarget(
                f"target {tuple(np.round(tgt[:3, 3], 4))} beyond reach {radius:.4f} m of {tip_link!r}"
            )
    lo, hi, wrap = _limits(model, names)
    q = np.array([qm[n] for n in names])
    mode = opts.orientation
    lam2 = opts.damping ** 2
    best = math.inf
    since_best = 0
    for _ in range(opts.max_iters + 1):
        for n, v in zip(names, q):
            qm[n] = float(v)
        cur = tip_transform(model, tip_link, qm)
        e_pos, e_rot, rot_err = _error(cur, tgt, mode)
        pos_err = float(np.linalg.norm(e_pos))
        if pos_err <= opts.pos_tol and rot_err <= opts.rot_tol:
            return seed_state.with_positions([qm[n] for n in seed_state.names])
        resid = pos_err + rot_err
        if resid < best - 1e-12:
            best, since_best = resid, 0
        else:
            since_best += 1
            if since_best >= opts.stall_iters:
                raise UnreachableTarget(f"solver stalled with residual {best:.3g}")
        jac = jacobian(model, tip_link, qm, names)
        if mode == "none":
            jm, e = jac[:3], e_pos
        elif mode == "full":
            jm, e = jac, np.concatenate([e_pos, e_rot])
        else:
            z = cur[:3, 2]
            proj = np.eye(3) - np.outer(z, z)
            jm, e = np.vstack([jac[:3], proj @ jac[3:]]), np.concatenate([e_pos, e_rot])
        dq = jm.T @ np.linalg.solve(jm @ jm.T + lam2 * np.eye(jm.shape[0]), e)
        biggest = float(np.max(np.abs(dq))) if dq.size else 0.0
        if biggest > opts.max_step:
            dq *= opts.max_step / biggest
        q = np.clip(q + dq, lo, hi)
        q = np.where(wrap, [normalize_angle(v) for v in q], q) if wrap.any() else q
    raise NoConvergence(f"no convergence after {opts.max_iters} iterations (best residual {best:.3g})")


def within_limits(model: RobotModel, q: JointValues, tol: float = 1e-9) -> bool:
    for n, v in _as_map(q).items():
        j = model.joint(n)
        if j.limits is not None and j.kind != "continuous":
            if v < j.limits[0] - tol or v > j.limits[1] + tol:
                return False
    return True
