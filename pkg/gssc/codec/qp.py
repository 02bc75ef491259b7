"""
Quantization parameters, rate-distortion weights and GOP structure.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple, Union

from ..core.errors import ValidationError

QP_MIN = 0
QP_MAX = 63
LAMBDA_MAX = 750.0
QP_PRESETS: Tuple[int, ...] = (7, 15, 23, 31, 39, 47)
DEFAULT_PATTERN: Tuple[int, ...] = (0, 8, 0, 4)
DEFAULT_GOP = 32

FRAME_I = 0
FRAME_P = 1


def qp_to_lambda(qp: Union[int, float]) -> float:
    """Log-linear map from QP to the rate-distortion weight, 1 at QP 0 and 750 at QP 63."""
    if not QP_MIN <= qp <= QP_MAX:
        raise ValidationError(f"QP {qp} outside [{QP_MIN}, {QP_MAX}]")
    return float(LAMBDA_MAX ** (qp / QP_MAX))


def parse_pattern(text: str) -> Tuple[int, ...]:
    """'0,8,0,4' -> (0, 8, 0, 4)."""
    try:
        values = tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as e:
        raise ValidationError(f"invalid QP offset pattern '{text}'") from e
    if not values or any(v < 0 or v > QP_MAX for v in values):
        raise ValidationError(f"invalid QP offset pattern '{text}'")
    return values


@dataclass
class QpSchedule:
    """Base QP with a periodic offset pattern and a GOP length."""

    base_qp: int
    pattern: Tuple[int, ...] = field(default=DEFAULT_PATTERN)
    gop: int = DEFAULT_GOP

    def __post_init__(self):
        self.pattern = tuple(int(v) for v in self.pattern)
        if not QP_MIN <= self.base_qp <= QP_MAX:
            raise ValidationError(f"base QP {self.base_qp} outside [{QP_MIN}, {QP_MAX}]")
        if not self.pattern or len(self.pattern) > 255 or any(v < 0 for v in self.pattern):
            raise ValidationError("offset pattern must hold 1..255 non-negative entries",
                                  details={"pattern": self.pattern})
        if not 1 <= self.gop <= 255:
            raise ValidationError(f"GOP length {self.gop} outside [1, 255]")

    def offset_index(self, t: int) -> int:
        return t % len(self.pattern)

    def frame_type(self, t: int) -> int:
        return FRAME_I if t % self.gop == 0 else FRAME_P

    def to_dict(self) -> Dict[str, Any]:
        return {"base_qp": self.base_qp, "pattern": list(self.pattern), "gop": self.gop}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QpSchedule":
        return cls(int(data["base_qp"]), tuple(data.get("pattern", DEFAULT_PATTERN)),
                   int(data.get("gop", DEFAULT_GOP)))


def offset_qp(schedule: QpSchedule, index: int) -> int:
    """QP of pattern entry ``index``, clamped to the valid range."""
    qp = schedule.base_qp + schedule.pattern[index]
    return max(QP_MIN, min(QP_MAX, qp))


def effective_qp(schedule: QpSchedule, t: int) -> int:
    """clamp(base + pattern[t mod len], 0, 63)."""
    if t < 0:
        raise ValidationError("frame index must be non-negative")
    return offset_qp(schedule, schedule.offset_index(t))


def resolve_qp(value: Union[int, str]) -> int:
    """Accept an explicit QP or a preset name 'p0'..'p5'."""
    if isinstance(value, str) and value.lower().startswith("p"):
        try:
            return QP_PRESETS[int(value[1:])]
        except (ValueError, IndexError) as e:
            raise ValidationError(f"unknown QP preset '{value}'",
                                  details={"presets": QP_PRESETS}) from e
    try:
        qp = int(value)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"invalid QP '{value}'") from e
    if not QP_MIN <= qp <= QP_MAX:
        raise ValidationError(f"QP {qp} outside [{QP_MIN}, {QP_MAX}]")
    return qp


def qp_sequence(schedule: QpSchedule, frames: int) -> Sequence[int]:
    return [effective_qp(schedule, t) for t in range(frames)]
