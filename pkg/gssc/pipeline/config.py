"""
Run configuration: loss weights, QP schedule, stereo and Gaussian constants, paths.

Two file formats are accepted. Plain text holds one ``key = value`` per line,
``#`` comments and ``include <path>`` lines resolved against the including
file; later keys override earlier ones. Files ending in .yaml or .yml are
read as a flat YAML mapping.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

import jsonschema
import yaml

from ..codec.fusion import MODES
from ..codec.model import ModelConfig
from ..codec.qp import DEFAULT_GOP, DEFAULT_PATTERN, QpSchedule, parse_pattern, resolve_qp
from ..codec.transforms import CodecDims
from ..core.errors import ConfigurationError, ValidationError
from ..gaussians.predictor import GaussianConfig
from ..stereo.estimator import StereoConfig

logger = logging.getLogger(__name__)

YAML_SUFFIXES = (".yaml", ".yml")

RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "qp": {"type": ["integer", "string"]},
        "pattern": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 63},
                    "minItems": 1, "maxItems": 255},
        "gop": {"type": "integer", "minimum": 1, "maximum": 255},
        "hierarchical_quality": {"type": "boolean"},
        "cross_view": {"enum": list(MODES)},
        "residuals": {"type": "boolean"},
        "alpha": {"type": "number", "minimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "gamma": {"type": "number", "minimum": 0},
        "stereo_iterations": {"type": "integer", "minimum": 1},
        "stereo_mu": {"type": "number", "minimum": 0},
        "max_disparity": {"type": "integer", "minimum": 1},
        "temperature": {"type": "number", "exclusiveMinimum": 0},
        "s_max": {"type": "number", "exclusiveMinimum": 0},
        "color_amplitude": {"type": "number", "minimum": 0},
        "depth_amplitude": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "stage1_steps": {"type": "integer", "minimum": 0},
        "stage2_steps": {"type": "integer", "minimum": 0},
        "train_qps": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 63},
                      "minItems": 1},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "background": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                       "minItems": 3, "maxItems": 3},
        "left": {"type": ["string", "null"]},
        "right": {"type": ["string", "null"]},
        "cams": {"type": ["string", "null"]},
        "ckpt": {"type": ["string", "null"]},
        "targets": {"type": ["string", "null"]},
        "output": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    """Everything a command needs beyond its positional arguments."""

    qp: Union[int, str] = "p3"
    pattern: Tuple[int, ...] = DEFAULT_PATTERN
    gop: int = DEFAULT_GOP
    hierarchical_quality: bool = True
    cross_view: str = "fusion"
    residuals: bool = True
    alpha: float = 0.2
    beta: float = 0.2
    gamma: float = 0.05
    stereo_iterations: int = 4
    stereo_mu: float = 0.9
    max_disparity: int = 24
    temperature: float = 1.0
    s_max: float = 0.05
    color_amplitude: float = 0.25
    depth_amplitude: float = 0.05
    seed: int = 0
    learning_rate: float = 1e-4
    stage1_steps: int = 300
    stage2_steps: int = 200
    train_qps: Tuple[int, ...] = (7, 15, 23, 31, 39, 47)
    threads: Optional[int] = None
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    left: Optional[str] = None
    right: Optional[str] = None
    cams: Optional[str] = None
    ckpt: Optional[str] = None
    targets: Optional[str] = None
    output: Optional[str] = None

    def __post_init__(self):
        self.pattern = tuple(int(v) for v in self.pattern)
        self.train_qps = tuple(int(v) for v in self.train_qps)
        self.background = tuple(float(v) for v in self.background)
        self.validate()

    def validate(self) -> None:
        try:
            jsonschema.validate(self.to_dict(), RUN_SCHEMA)
        except jsonschema.ValidationError as e:
            where = ".".join(str(p) for p in e.absolute_path) or "config"
            raise ConfigurationError(f"invalid run configuration at '{where}': {e.message}") from e
        try:
            resolve_qp(self.qp)
        except ValidationError as e:
            raise ConfigurationError(e.message, details=e.details) from e

    @property
    def base_qp(self) -> int:
        return resolve_qp(self.qp)

    def schedule(self) -> QpSchedule:
        """QP schedule; a flat pattern when hierarchical quality is off."""
        pattern = self.pattern if self.hierarchical_quality else (0,)
        return QpSchedule(self.base_qp, pattern, self.gop)

    def model_config(self, dims: Optional[CodecDims] = None) -> ModelConfig:
        return ModelConfig(
            seed=self.seed,
            cross_view=self.cross_view,
            dims=dims or CodecDims(),
            stereo=StereoConfig(iterations=self.stereo_iterations, mu=self.stereo_mu,
                                max_disparity=self.max_disparity, temperature=self.temperature),
            gaussians=GaussianConfig(s_max=self.s_max, color_amplitude=self.color_amplitude,
                                     depth_amplitude=self.depth_amplitude,
                                     residuals=self.residuals),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ("pattern", "train_qps", "background"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}",
                                     details={"known": sorted(known)})
        values = dict(data)
        for key in ("pattern", "train_qps"):
            if isinstance(values.get(key), str):
                try:
                    values[key] = parse_pattern(values[key])
                except ValidationError as e:
                    raise ConfigurationError(f"invalid value for '{key}': {e.message}") from e
        if isinstance(values.get("background"), str):
            values["background"] = [float(v) for v in values["background"].split(",")]
        return cls(**values)

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Copy with non-None overrides applied (CLI options win over files)."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw
    return value


def _read_plain(path: Path, seen: Set[Path]) -> Dict[str, Any]:
    resolved = path.resolve()
    if resolved in seen:
        raise ConfigurationError(f"include cycle through {path}")
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    seen = seen | {resolved}
    values: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as f:
        lines: List[str] = f.read().splitlines()
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("include "):
            target = Path(text[len("include "):].strip())
            values.update(_read_plain(path.parent / target, seen))
            continue
        if "=" not in text:
            raise ConfigurationError(f"{path}:{number}: expected 'key = value'",
                                     details={"line": line})
        key, raw = text.split("=", 1)
        values[key.strip()] = _parse_value(raw)
    return values


def _read_yaml(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping at the top level")
    return data


def read_config_values(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if path.suffix.lower() in YAML_SUFFIXES:
        return _read_yaml(path)
    return _read_plain(path, set())


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values: Dict[str, Any] = read_config_values(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.from_dict(values)
    logger.debug(f"Run configuration: {config.to_dict()}")
    return config
