"""On-disk layout of a stereo sequence."""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..geometry.camera import CameraRig, View
from ..render.image_io import list_frames, read_image, write_image
from ..tensor.io import atomic_write, read_tensor, write_tensor
from .errors import DatasetError, FormatError


class DatasetStore:
    """Directory-backed store for frames, disparities, masks and cameras.

    Layout::

        left/0000.ppm, right/0000.ppm
        targets/<k>/0000.ppm
        disparity/<view>/0000.gst, masks/<view>/0000.gst
        cameras.json, scene.json
    """

    def __init__(self, base_path: Union[str, Path], create: bool = True):
        """Initialize the store.

        Args:
            base_path: Dataset root directory
            create: Create the directory tree when missing
        """
        self.base_path = Path(base_path)
        self.left_dir = self.base_path / "left"
        self.right_dir = self.base_path / "right"
        self.targets_dir = self.base_path / "targets"
        self.disparity_dir = self.base_path / "disparity"
        self.masks_dir = self.base_path / "masks"

        if create:
            for dir_path in [self.left_dir, self.right_dir, self.targets_dir,
                             self.disparity_dir / "left", self.disparity_dir / "right",
                             self.masks_dir / "left", self.masks_dir / "right"]:
                dir_path.mkdir(parents=True, exist_ok=True)
        elif not self.base_path.is_dir():
            raise DatasetError(f"dataset directory not found: {self.base_path}")

    @staticmethod
    def _name(t: int, suffix: str) -> str:
        return f"{t:04d}{suffix}"

    def view_dir(self, view: View) -> Path:
        return self.left_dir if view is View.LEFT else self.right_dir

    def _view_name(self, view: View) -> str:
        return "left" if view is View.LEFT else "right"

    # -- frames -------------------------------------------------------------

    def save_frame(self, view: View, t: int, image: np.ndarray) -> Path:
        return write_image(self.view_dir(view) / self._name(t, ".ppm"), image)

    def load_frames(self, view: View) -> List[np.ndarray]:
        return [read_image(p) for p in list_frames(self.view_dir(view))]

    def frame_count(self) -> int:
        left = len(list_frames(self.left_dir))
        right = len(list_frames(self.right_dir))
        if left != right:
            raise DatasetError("left and right frame counts differ",
                               details={"left": left, "right": right})
        return left

    def save_target(self, k: int, t: int, image: np.ndarray) -> Path:
        target_dir = self.targets_dir / f"{k}"
        target_dir.mkdir(parents=True, exist_ok=True)
        return write_image(target_dir / self._name(t, ".ppm"), image)

    def load_targets(self) -> List[List[np.ndarray]]:
        """Frames per target camera, in camera order."""
        dirs = sorted((d for d in self.targets_dir.iterdir() if d.is_dir()),
                      key=lambda d: int(d.name)) if self.targets_dir.is_dir() else []
        return [[read_image(p) for p in list_frames(d)] for d in dirs]

    # -- per-pixel ground truth ---------------------------------------------

    def save_disparity(self, view: View, t: int, disparity: np.ndarray) -> Path:
        path = self.disparity_dir / self._view_name(view) / self._name(t, ".gst")
        write_tensor(path, np.asarray(disparity, dtype=np.float32))
        return path

    def load_disparity(self, view: View, t: int) -> Optional[np.ndarray]:
        path = self.disparity_dir / self._view_name(view) / self._name(t, ".gst")
        if not path.exists():
            return None
        return read_tensor(path).astype(np.float64)

    def save_mask(self, view: View, t: int, mask: np.ndarray) -> Path:
        path = self.masks_dir / self._view_name(view) / self._name(t, ".gst")
        write_tensor(path, np.asarray(mask, dtype=np.uint8))
        return path

    def load_mask(self, view: View, t: int) -> Optional[np.ndarray]:
        path = self.masks_dir / self._view_name(view) / self._name(t, ".gst")
        if not path.exists():
            return None
        return read_tensor(path).astype(bool)

    # -- metadata -----------------------------------------------------------

    @property
    def cameras_path(self) -> Path:
        return self.base_path / "cameras.json"

    def save_rig(self, rig: CameraRig) -> Path:
        payload = json.dumps(rig.to_dict(), indent=2).encode("utf-8")
        atomic_write(self.cameras_path, payload)
        return self.cameras_path

    def load_rig(self) -> CameraRig:
        return CameraRig.load(self.cameras_path)

    def save_metadata(self, metadata: Dict[str, Any]) -> Path:
        path = self.base_path / "scene.json"
        atomic_write(path, json.dumps(metadata, indent=2, sort_keys=True).encode("utf-8"))
        return path

    def load_metadata(self) -> Optional[Dict[str, Any]]:
        path = self.base_path / "scene.json"
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"scene metadata is not valid JSON: {e}") from e
