"""
Rate-distortion points and their CSV / SVG artifacts.
"""

import csv
import io
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from ..core.errors import FormatError, ValidationError
from ..tensor.io import atomic_write

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("label", "bpp", "psnr", "ssim")

_WIDTH, _HEIGHT, _MARGIN = 480, 320, 48
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class RdPoint:
    """One operating point of a codec on a sequence."""

    label: str
    bpp: float
    psnr: float
    ssim: float

    def __post_init__(self):
        if not self.bpp > 0:
            raise ValidationError(f"RD point '{self.label}' has non-positive bpp {self.bpp}")
        if not -1.0 <= self.ssim <= 1.0:
            raise ValidationError(f"RD point '{self.label}' has SSIM {self.ssim} outside [-1, 1]")

    def to_dict(self) -> Dict[str, Union[str, float]]:
        return asdict(self)


def rd_csv(points: Sequence[RdPoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        writer.writerow([p.label, repr(float(p.bpp)), repr(float(p.psnr)), repr(float(p.ssim))])
    return buffer.getvalue()


def read_rd(path: Union[str, Path]) -> List[RdPoint]:
    """Load points written by ``emit_rd``."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"RD file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise FormatError(f"unexpected RD columns in {path}",
                              details={"columns": reader.fieldnames})
        try:
            return [RdPoint(row["label"], float(row["bpp"]), float(row["psnr"]), float(row["ssim"]))
                    for row in reader]
        except ValueError as e:
            raise FormatError(f"malformed RD row in {path}: {e}") from e


def _scale(values: Sequence[float], lo_px: float, hi_px: float) -> Tuple[float, float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi, (hi_px - lo_px) / (hi - lo)


def rd_svg(points: Sequence[RdPoint], metric: str = "psnr") -> str:
    """Polyline per label prefix with a log10 rate axis."""
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(_WIDTH), height=str(_HEIGHT))
    ET.SubElement(svg, "rect", x="0", y="0", width=str(_WIDTH), height=str(_HEIGHT), fill="white")
    usable = [p for p in points if math.isfinite(getattr(p, metric))]
    if usable:
        xs = [math.log10(p.bpp) for p in usable]
        ys = [getattr(p, metric) for p in usable]
        x_lo, _, x_k = _scale(xs, _MARGIN, _WIDTH - _MARGIN)
        y_lo, _, y_k = _scale(ys, _MARGIN, _HEIGHT - _MARGIN)
        curves: Dict[str, List[Tuple[float, float]]] = {}
        for p, x, y in zip(usable, xs, ys):
            name = p.label.split("@")[0]
            curves.setdefault(name, []).append((_MARGIN + (x - x_lo) * x_k,
                                                _HEIGHT - _MARGIN - (y - y_lo) * y_k))
        for i, (name, coords) in enumerate(sorted(curves.items())):
            coords.sort()
            color = _COLORS[i % len(_COLORS)]
            ET.SubElement(svg, "polyline", fill="none", stroke=color,
                          points=" ".join(f"{x:.2f},{y:.2f}" for x, y in coords))
            label = ET.SubElement(svg, "text", x=str(_MARGIN + 4), y=str(16 + 14 * i), fill=color)
            label.text = name
    ET.SubElement(svg, "line", x1=str(_MARGIN), y1=str(_HEIGHT - _MARGIN),
                  x2=str(_WIDTH - _MARGIN), y2=str(_HEIGHT - _MARGIN), stroke="black")
    ET.SubElement(svg, "line", x1=str(_MARGIN), y1=str(_MARGIN),
                  x2=str(_MARGIN), y2=str(_HEIGHT - _MARGIN), stroke="black")
    x_title = ET.SubElement(svg, "text", x=str(_WIDTH // 2), y=str(_HEIGHT - 12))
    x_title.text = "log10 bpp"
    y_title = ET.SubElement(svg, "text", x="4", y=str(_MARGIN - 8))
    y_title.text = metric.upper()
    return ET.tostring(svg, encoding="unicode")


def emit_rd(points: Sequence[RdPoint], path: Union[str, Path],
            metric: str = "psnr") -> Tuple[Path, Path]:
    """Write ``path`` as CSV and a sibling .svg chart."""
    csv_path = Path(path)
    svg_path = csv_path.with_suffix(".svg")
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(csv_path, rd_csv(points).encode("utf-8"))
        atomic_write(svg_path, rd_svg(points, metric).encode("utf-8"))
    except OSError as e:
        raise FormatError(f"cannot write RD report to {csv_path}: {e}") from e
    logger.info(f"Wrote {len(points)} RD points to {csv_path} and {svg_path}")
    return csv_path, svg_path
