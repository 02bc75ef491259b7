"""
Pinhole cameras and rectified stereo rigs.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Union

import jsonschema
import numpy as np

from ..core.errors import FormatError, ValidationError

ORTHONORMAL_TOL = 1e-6


class View(str, Enum):
    """Source view tag of a rectified pair."""

    LEFT = "L"
    RIGHT = "R"

    @property
    def opposite(self) -> "View":
        return View.RIGHT if self is View.LEFT else View.LEFT

    @property
    def code(self) -> int:
        return 0 if self is View.LEFT else 1


VIEWS = (View.LEFT, View.RIGHT)


_CAMERA_SCHEMA = {
    "type": "object",
    "required": ["fx", "fy", "cx", "cy", "width", "height", "world_to_camera"],
    "properties": {
        "fx": {"type": "number", "exclusiveMinimum": 0},
        "fy": {"type": "number", "exclusiveMinimum": 0},
        "cx": {"type": "number"},
        "cy": {"type": "number"},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "world_to_camera": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 12,
            "maxItems": 12,
        },
    },
}

RIG_SCHEMA = {
    "type": "object",
    "required": ["baseline", "left", "right"],
    "properties": {
        "baseline": {"type": "number", "exclusiveMinimum": 0},
        "left": _CAMERA_SCHEMA,
        "right": _CAMERA_SCHEMA,
        "targets": {"type": "array", "items": _CAMERA_SCHEMA},
    },
}


@dataclass
class CameraModel:
    """Pinhole intrinsics plus a 3x4 world-to-camera transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray = field(
        default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=np.float64).reshape(3, 4)
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive",
                                  details={"fx": self.fx, "fy": self.fy})
        if self.width < 1 or self.height < 1:
            raise ValidationError("image size must be positive",
                                  details={"width": self.width, "height": self.height})
        rot = self.rotation
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValidationError("world_to_camera rotation is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def size(self):
        return (self.height, self.width)

    def intrinsics(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
            "world_to_camera": [float(v) for v in self.world_to_camera.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CameraModel":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
            world_to_camera=np.asarray(data["world_to_camera"], dtype=np.float64),
        )

    def resized(self, width: int, height: int) -> "CameraModel":
        """Same camera over a canvas padded or cropped at the bottom/right."""
        return CameraModel(self.fx, self.fy, self.cx, self.cy, width, height,
                           self.world_to_camera.copy())


@dataclass
class CameraRig:
    """A rectified stereo pair plus novel-view target cameras."""

    left: CameraModel
    right: CameraModel
    baseline: float
    targets: List[CameraModel] = field(default_factory=list)

    def __post_init__(self):
        if self.baseline <= 0:
            raise ValidationError("baseline must be positive", details={"baseline": self.baseline})
        a, b = self.left, self.right
        if (a.fx, a.fy, a.cy) != (b.fx, b.fy, b.cy) or a.size != b.size:
            raise ValidationError("left/right cameras are not a rectified pair",
                                  details={"left": a.to_dict(), "right": b.to_dict()})

    @property
    def fx(self) -> float:
        return self.left.fx

    @property
    def focal_baseline(self) -> float:
        return self.left.fx * self.baseline

    def camera(self, view: View) -> CameraModel:
        return self.left if view is View.LEFT else self.right

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": float(self.baseline),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "targets": [t.to_dict() for t in self.targets],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CameraRig":
        try:
            jsonschema.validate(data, RIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise FormatError(f"invalid camera file: {e.message}",
                              details={"path": list(e.absolute_path)}) from e
        return cls(
            left=CameraModel.from_dict(data["left"]),
            right=CameraModel.from_dict(data["right"]),
            baseline=float(data["baseline"]),
            targets=[CameraModel.from_dict(t) for t in data.get("targets", [])],
        )

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CameraRig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise FormatError(f"camera file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise FormatError(f"camera file is not valid JSON: {e}") from e
        return cls.from_dict(data)


def load_target_cameras(path: Union[str, Path]) -> List[CameraModel]:
    """Read novel-view cameras from a rig file or a bare list of cameras."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise FormatError(f"target camera file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"target camera file is not valid JSON: {e}") from e
    if isinstance(data, dict):
        return CameraRig.from_dict(data).targets
    try:
        jsonschema.validate(data, {"type": "array", "items": _CAMERA_SCHEMA})
    except jsonschema.ValidationError as e:
        raise FormatError(f"invalid target camera list: {e.message}") from e
    return [CameraModel.from_dict(item) for item in data]


def rectified_rig(fx: float, width: int, height: int, baseline: float,
                  depth_offset: float = 0.0, targets: int = 1) -> CameraRig:
    """Axis-aligned pair with the left camera at x = -b/2 and the right at +b/2.

    Targets sit on the baseline, evenly spaced strictly between the sources.
    """
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

    def at(x: float) -> CameraModel:
        w2c = np.hstack([np.eye(3), np.array([[-x], [0.0], [depth_offset]])])
        return CameraModel(fx, fx, cx, cy, width, height, w2c)

    half = baseline / 2.0
    xs = [-half + baseline * (i + 1) / (targets + 1) for i in range(targets)]
    return CameraRig(at(-half), at(half), baseline, [at(x) for x in xs])
