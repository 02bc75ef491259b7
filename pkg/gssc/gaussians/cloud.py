"""
Per-pixel Gaussian clouds.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Union

import numpy as np

from ..core.errors import DimensionError, ValidationError
from ..tensor import ops
from ..tensor.tensor import Tensor

logger = logging.getLogger(__name__)

QUATERNION_TOL = 1e-6
ATTRIBUTES = ("centers", "scales", "rotations", "opacities", "colors")
_WIDTHS = {"centers": 3, "scales": 3, "rotations": 4, "opacities": 1, "colors": 3}


@dataclass
class GaussianCloud:
    """Gaussians as (N, k) tensors plus their source pixels and view tags."""

    centers: Tensor
    scales: Tensor
    rotations: Tensor
    opacities: Tensor
    colors: Tensor
    pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int32))
    views: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    valid: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        n = self.centers.shape[0]
        for name in ATTRIBUTES:
            tensor = getattr(self, name)
            if tensor.shape != (n, _WIDTHS[name]):
                raise DimensionError(f"cloud attribute '{name}' has shape {tensor.shape}",
                                     details={"expected": (n, _WIDTHS[name])})
        if len(self.pixels) != n:
            self.pixels = np.zeros((n, 2), dtype=np.int32)
        if len(self.views) != n:
            self.views = np.zeros(n, dtype=np.uint8)
        if len(self.valid) != n:
            self.valid = np.ones(n, dtype=bool)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def __len__(self) -> int:
        return self.count

    def arrays(self) -> Dict[str, np.ndarray]:
        """Attribute arrays in float64, the renderer's working precision."""
        return {name: getattr(self, name).data.astype(np.float64) for name in ATTRIBUTES}

    def tensors(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in ATTRIBUTES}

    def check_bounds(self, s_max: float) -> None:
        """Raise when an attribute leaves its structural range."""
        a = self.arrays()
        if self.count == 0:
            return
        norms = np.linalg.norm(a["rotations"], axis=1)
        problems = {
            "rotation_norm": float(np.max(np.abs(norms - 1.0))) > QUATERNION_TOL,
            "scale": bool(np.any(a["scales"] <= 0) or np.any(a["scales"] > s_max)),
            "opacity": bool(np.any(a["opacities"] <= 0) or np.any(a["opacities"] >= 1)),
            "color": bool(np.any(a["colors"] < 0) or np.any(a["colors"] > 1)),
        }
        failed = [k for k, bad in problems.items() if bad]
        if failed:
            raise ValidationError("Gaussian attributes out of range", details={"failed": failed})

    def to_ply(self, path: Union[str, Path]) -> Path:
        """Write an ASCII PLY point list."""
        path = Path(path)
        a = self.arrays()
        header = [
            "ply",
            "format ascii 1.0",
            f"element vertex {self.count}",
            "property float x", "property float y", "property float z",
            "property float scale_0", "property float scale_1", "property float scale_2",
            "property float rot_0", "property float rot_1", "property float rot_2",
            "property float rot_3",
            "property float opacity",
            "property float red", "property float green", "property float blue",
            "property uchar view",
            "end_header",
        ]
        rows = np.hstack([a["centers"], a["scales"], a["rotations"], a["opacities"],
                          a["colors"]])
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(header) + "\n")
            for row, view in zip(rows, self.views):
                f.write(" ".join(f"{v:.6g}" for v in row) + f" {int(view)}\n")
        logger.info(f"Wrote {self.count} Gaussians to {path}")
        return path


def empty_cloud(dtype: type = np.float64) -> GaussianCloud:
    def blank(k: int) -> Tensor:
        return Tensor(np.zeros((0, k)), dtype=dtype)

    return GaussianCloud(blank(3), blank(3), blank(4), blank(1), blank(3))


def concat_clouds(clouds: Sequence[GaussianCloud]) -> GaussianCloud:
    """Merge clouds, keeping gradient links to every part."""
    clouds = [c for c in clouds if c.count > 0]
    if not clouds:
        return empty_cloud()
    if len(clouds) == 1:
        return clouds[0]
    merged = {name: ops.concat([getattr(c, name) for c in clouds], axis=0) for name in ATTRIBUTES}
    return GaussianCloud(
        **merged,
        pixels=np.concatenate([c.pixels for c in clouds]),
        views=np.concatenate([c.views for c in clouds]),
        valid=np.concatenate([c.valid for c in clouds]),
    )
