"""Asset manifests: resolve unit names to URDF files and assemble robots."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from mobman.assets.model import RobotModel, SceneObject, compose_models, namespace
from mobman.assets.urdf import parse_urdf
from mobman.errors import AssetError
from mobman.geometry import Pose3D

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_MANIFEST = DATA_DIR / "manifest.yaml"


@dataclass
class AssetManifest:
    root: Path
    units: dict = field(default_factory=dict)
    scene: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=DEFAULT_MANIFEST) -> "AssetManifest":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls(path.parent, dict(data.get("units") or {}), dict(data.get("scene") or {}))

    def _text(self, entry) -> str:
        return (self.root / entry["urdf"]).read_text(encoding="utf-8")

    def unit(self, name: str) -> RobotModel:
        try:
            entry = self.units[name]
        except KeyError:
            raise AssetError(f"unit {name!r} not in manifest") from None
        return parse_urdf(self._text(entry), unit_kind=entry.get("kind", "composite"))

    def scene_object(self, name: str, object_id: Optional[str] = None, pose: Pose3D = Pose3D(),
                     movable: bool = False) -> SceneObject:
        try:
            entry = self.scene[name]
        except KeyError:
            raise AssetError(f"scene asset {name!r} not in manifest") from None
        model = parse_urdf(self._text(entry))
        shaped = [ln for ln in model.links if ln.collision is not None]
        if len(shaped) != 1:
            raise AssetError(f"scene asset {name!r} must have exactly one collision link")
        return SceneObject(object_id or name, shaped[0].collision, pose, movable)


@dataclass(frozen=True)
class Mount:
    unit: str
    mount_link: str
    offset: Pose3D = Pose3D()


def assemble(manifest: AssetManifest, base: str, parts: list[Mount] = (), name: str = "robot") -> RobotModel:
    """Namespace each unit by its kind and mount the parts in order.

    Mount links are given in the namespaced form, e.g. ``arm/wrist3``.
    """
    first = manifest.unit(base)
    model = namespace(first, first.unit_kind if first.unit_kind != "composite" else "base")
    for m in parts:
        unit = manifest.unit(m.unit)
        unit = namespace(unit, unit.unit_kind if unit.unit_kind != "composite" else m.unit)
        model = compose_models(model, unit, m.mount_link, m.offset, name=name)
    if not parts:
        model = RobotModel(name, model.links, model.joints, model.root_link, model.unit_kind, model.groups)
    return model


REFERENCE_ARM_MOUNT = Mount("arm6", "base/base_link", Pose3D((0.0, 0.0, 0.32)))
REFERENCE_GRIPPER_MOUNT = Mount("pj_gripper", "arm/wrist3", Pose3D((0.0, 0.0, 0.03)))


def reference_robot(manifest: Optional[AssetManifest] = None) -> RobotModel:
    """The shipped mobile manipulator: diff-drive base + 6-DoF arm + gripper."""
    manifest = manifest or AssetManifest.load()
    return assemble(manifest, "diffdrive_base", [REFERENCE_ARM_MOUNT, REFERENCE_GRIPPER_MOUNT], name="mobman")


def gripper_joint_positions(model: RobotModel, width: float) -> dict[str, float]:
    """Finger joint values for a jaw opening; fingers split the width evenly."""
    fingers = model.group("gripper")
    if not fingers:
        return {}
    return {n: width / len(fingers) for n in fingers}


def gripper_max_width(model: RobotModel) -> float:
    return sum(model.joint(n).limits[1] for n in model.group("gripper"))


def tip_link(model: RobotModel) -> str:
    """Tool frame: the gripper's ``tcp`` link if present, else the last arm link."""
    for ln in model.link_names:
        if ln.endswith("/tcp") or ln == "tcp":
            return ln
    arm = model.group("arm")
    if arm:
        return model.joint(arm[-1]).child
    raise AssetError("model has no tool frame")
