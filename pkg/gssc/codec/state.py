"""
Temporal state shared by the encoder's local decoder and the receiver.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..geometry.camera import VIEWS, View
from ..tensor.tensor import Tensor, default_dtype
from .transforms import PATCH


@dataclass
class TemporalState:
    """Previous decoded disparity and image features per view, at 1/8 resolution."""

    channels: int
    height: int
    width: int
    frame_index: int = 0
    disparity_features: Dict[View, Tensor] = field(default_factory=dict)
    image_features: Dict[View, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        for view in VIEWS:
            self.disparity_features.setdefault(view, self._zeros())
            self.image_features.setdefault(view, self._zeros())

    def _zeros(self) -> Tensor:
        return Tensor(np.zeros((self.channels, self.height // PATCH, self.width // PATCH)),
                      dtype=default_dtype())

    @classmethod
    def initial(cls, channels: int, height: int, width: int) -> "TemporalState":
        return cls(channels, height, width)

    def is_zero(self) -> bool:
        return all(not np.any(t.data) for t in
                   list(self.disparity_features.values()) + list(self.image_features.values()))

    def reset(self) -> "TemporalState":
        """Zero buffers for an I-frame, keeping the frame index."""
        return TemporalState(self.channels, self.height, self.width, self.frame_index)

    def advance(self, disparity_features: Dict[View, Tensor],
                image_features: Dict[View, Tensor]) -> "TemporalState":
        """State for the next frame; only decoded features enter it."""
        return TemporalState(
            self.channels, self.height, self.width, self.frame_index + 1,
            {v: disparity_features[v].detach() for v in VIEWS},
            {v: image_features[v].detach() for v in VIEWS},
        )

    def matches(self, other: "TemporalState") -> bool:
        """Bit-exact comparison of every buffer."""
        if self.frame_index != other.frame_index:
            return False
        return all(
            np.array_equal(mine[v].data, theirs[v].data)
            for mine, theirs in ((self.disparity_features, other.disparity_features),
                                 (self.image_features, other.image_features))
            for v in VIEWS
        )
