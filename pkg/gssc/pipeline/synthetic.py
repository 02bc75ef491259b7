"""
Seeded synthetic stereo scenes with exact ground truth.

Scenes are textured fronto-parallel planes and spheres moving along linear
trajectories. Every camera ray is intersected analytically, so disparity,
masks and the novel target views are exact.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..core.errors import ConfigurationError, DatasetError
from ..core.store import DatasetStore
from ..geometry.camera import VIEWS, CameraModel, CameraRig, View, rectified_rig
from ..geometry.projection import pixel_grid, pixel_rays

logger = logging.getLogger(__name__)


@dataclass
class PlaneSpec:
    """Plane z = depth; ``extent`` (x0, x1, y0, y1) bounds it, None is unbounded."""

    depth: float
    extent: Optional[Tuple[float, float, float, float]] = None
    velocity: Tuple[float, float] = (0.0, 0.0)
    frequency: float = 2.0


@dataclass
class SphereSpec:
    center: Tuple[float, float, float]
    radius: float
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def _default_planes() -> List[PlaneSpec]:
    return [PlaneSpec(depth=4.0, frequency=1.5),
            PlaneSpec(depth=2.5, extent=(-0.6, 0.2, -0.5, 0.4), velocity=(0.02, 0.0),
                      frequency=3.0)]


def _default_spheres() -> List[SphereSpec]:
    return [SphereSpec(center=(0.45, 0.1, 2.0), radius=0.3, velocity=(-0.015, 0.005, 0.0))]


@dataclass
class SceneSpec:
    """Synthetic capture: geometry, motion, rig and sequence length."""

    width: int = 64
    height: int = 64
    frames: int = 8
    fx: float = 64.0
    baseline: float = 0.2
    targets: int = 1
    planes: List[PlaneSpec] = field(default_factory=_default_planes)
    spheres: List[SphereSpec] = field(default_factory=_default_spheres)
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.frames < 1:
            raise ConfigurationError("scene needs positive size and frame count")
        if self.fx <= 0 or self.baseline <= 0:
            raise ConfigurationError("scene needs positive focal length and baseline")
        if any(p.depth <= 0 for p in self.planes) or any(s.radius <= 0 for s in self.spheres):
            raise ConfigurationError("planes need positive depth and spheres positive radius")

    def rig(self) -> CameraRig:
        return rectified_rig(self.fx, self.width, self.height, self.baseline,
                             targets=self.targets)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneSpec":
        values = dict(data)
        known = cls.__dataclass_fields__
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown scene keys: {', '.join(unknown)}")
        try:
            if "planes" in values:
                values["planes"] = [PlaneSpec(**p) for p in values["planes"]]
            if "spheres" in values:
                values["spheres"] = [SphereSpec(**s) for s in values["spheres"]]
        except TypeError as e:
            raise ConfigurationError(f"invalid scene object: {e}") from e
        for key in ("background",):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)


@dataclass
class SyntheticDataset:
    """Frames (3, H, W), disparities (H, W) and masks (H, W) per view and time."""

    rig: CameraRig
    frames: Dict[View, List[np.ndarray]]
    disparities: Dict[View, List[np.ndarray]]
    masks: Dict[View, List[np.ndarray]]
    targets: List[List[np.ndarray]]

    @property
    def frame_count(self) -> int:
        return len(self.frames[View.LEFT])


@dataclass
class _Texture:
    low: np.ndarray
    high: np.ndarray
    phase: np.ndarray


def _textures(scene: SceneSpec, seed: int) -> List[_Texture]:
    rng = np.random.default_rng(seed)
    count = len(scene.planes) + len(scene.spheres)
    return [_Texture(rng.uniform(0.1, 0.5, 3), rng.uniform(0.5, 0.9, 3),
                     rng.uniform(0.0, 2.0 * np.pi, 2)) for _ in range(count)]


def _pattern(u: np.ndarray, v: np.ndarray, frequency: float, tex: _Texture) -> np.ndarray:
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * frequency * u + tex.phase[0]) \
        * np.sin(2 * np.pi * frequency * v + tex.phase[1])
    return tex.low[None, :] + (tex.high - tex.low)[None, :] * wave[:, None]


def cast_rays(scene: SceneSpec, cam: CameraModel, t: int,
              textures: List[_Texture]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ray-cast one camera at frame ``t``.

    Returns:
        (image (3, H, W), camera depth (H, W), hit mask (H, W))
    """
    h, w = cam.height, cam.width
    directions = pixel_rays(cam, pixel_grid(h, w)) @ cam.rotation
    origin = cam.center
    n = h * w
    depth = np.full(n, np.inf)
    color = np.tile(np.asarray(scene.background, dtype=np.float64), (n, 1))

    for k, plane in enumerate(scene.planes):
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane.depth - origin[2]) / directions[:, 2]
        points = origin[None, :] + s[:, None] * directions
        shift_x, shift_y = plane.velocity[0] * t, plane.velocity[1] * t
        hit = np.isfinite(s) & (s > 0)
        if plane.extent is not None:
            x0, x1, y0, y1 = plane.extent
            px, py = points[:, 0] - shift_x, points[:, 1] - shift_y
            hit &= (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
        closer = hit & (s < depth)
        if np.any(closer):
            depth[closer] = s[closer]
            color[closer] = _pattern(points[closer, 0] - shift_x, points[closer, 1] - shift_y,
                                     plane.frequency, textures[k])

    for k, sphere in enumerate(scene.spheres):
        center = np.asarray(sphere.center) + np.asarray(sphere.velocity) * t
        oc = origin - center
        a = np.sum(directions * directions, axis=1)
        b = 2.0 * directions @ oc
        c = float(oc @ oc) - sphere.radius ** 2
        disc = b * b - 4 * a * c
        hit = disc >= 0
        s = np.where(hit, (-b - np.sqrt(np.maximum(disc, 0.0))) / (2 * a), np.inf)
        closer = hit & (s > 0) & (s < depth)
        if np.any(closer):
            depth[closer] = s[closer]
            normal = (origin[None, :] + s[closer, None] * directions[closer] - center) / sphere.radius
            shade = 0.55 + 0.45 * np.clip(-normal[:, 2] * 0.8 - normal[:, 1] * 0.2, 0.0, 1.0)
            tex = textures[len(scene.planes) + k]
            base = _pattern(normal[:, 0], normal[:, 1], 1.0, tex)
            color[closer] = base * shade[:, None]

    hit = np.isfinite(depth)
    image = np.clip(color, 0.0, 1.0).T.reshape(3, h, w)
    return image, np.where(hit, depth, 0.0).reshape(h, w), hit.reshape(h, w)


def make_synthetic(scene: SceneSpec, seed: int = 0,
                   out_dir: Optional[Union[str, Path]] = None) -> SyntheticDataset:
    """Generate a sequence; when ``out_dir`` is given it is also written to disk."""
    rig = scene.rig()
    textures = _textures(scene, seed)
    fb = rig.focal_baseline
    data = SyntheticDataset(rig, {v: [] for v in VIEWS}, {v: [] for v in VIEWS},
                            {v: [] for v in VIEWS}, [[] for _ in rig.targets])
    for t in range(scene.frames):
        for v in VIEWS:
            image, depth, hit = cast_rays(scene, rig.camera(v), t, textures)
            disparity = np.where(hit, fb / np.where(hit, depth, 1.0), 0.0)
            data.frames[v].append(image)
            data.disparities[v].append(disparity)
            data.masks[v].append(hit)
        for k, cam in enumerate(rig.targets):
            data.targets[k].append(cast_rays(scene, cam, t, textures)[0])

    logger.info(f"Generated synthetic scene: {scene.frames} frames of "
                f"{scene.width}x{scene.height}, {len(rig.targets)} target views")
    if out_dir is not None:
        write_dataset(data, out_dir, {"scene": scene.to_dict(), "seed": seed})
    return data


def write_dataset(data: SyntheticDataset, out_dir: Union[str, Path],
                  metadata: Optional[Dict[str, Any]] = None) -> DatasetStore:
    store = DatasetStore(out_dir)
    store.save_rig(data.rig)
    for t in range(data.frame_count):
        for v in VIEWS:
            store.save_frame(v, t, data.frames[v][t])
            store.save_disparity(v, t, data.disparities[v][t])
            store.save_mask(v, t, data.masks[v][t])
        for k, frames in enumerate(data.targets):
            store.save_target(k, t, frames[t])
    if metadata is not None:
        store.save_metadata(metadata)
    logger.info(f"Wrote dataset to {out_dir}")
    return store


def load_dataset(path: Union[str, Path]) -> SyntheticDataset:
    """Read a dataset directory; ground-truth disparity and masks are optional."""
    store = DatasetStore(path, create=False)
    rig = store.load_rig()
    count = store.frame_count()
    if count == 0:
        raise DatasetError(f"no frames in {path}")
    frames = {v: store.load_frames(v) for v in VIEWS}
    disparities: Dict[View, List[np.ndarray]] = {v: [] for v in VIEWS}
    masks: Dict[View, List[np.ndarray]] = {v: [] for v in VIEWS}
    for v in VIEWS:
        for t in range(count):
            d = store.load_disparity(v, t)
            m = store.load_mask(v, t)
            if d is not None:
                disparities[v].append(d)
            if m is not None:
                masks[v].append(m)
    targets = store.load_targets()
    for k, seq in enumerate(targets):
        if len(seq) != count:
            raise DatasetError(f"target {k} has {len(seq)} frames, expected {count}")
    return SyntheticDataset(rig, frames, disparities, masks, targets)
