"""Scalar nodal fields on box grids with the discrete norms used everywhere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fdcore import gradient_energy
from .geometry import BoxRegion

__all__ = ["GridField"]


@dataclass
class GridField:
    """A real or complex scalar field sampled at the nodes of a box grid."""

    box: BoxRegion
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.box.shape:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def l2(self) -> float:
        """Volume-weighted L2 norm over the box."""
        w = self.box.node_volumes()
        return math.sqrt(float(np.sum(w * np.abs(self.values) ** 2)))

    def h1(self) -> float:
        """Full H1 norm: L2 plus the discrete gradient energy on cell faces."""
        if np.iscomplexobj(self.values):
            grad = gradient_energy(self.box, self.values.real) \
                + gradient_energy(self.box, self.values.imag)
        else:
            grad = gradient_energy(self.box, self.values)
        return math.sqrt(self.l2() ** 2 + grad)

    def l2_gamma1(self) -> float:
        """Surface L2 norm over the top face (the z = 0 plane)."""
        w = self.box.top_face_areas()
        return math.sqrt(float(np.sum(w * np.abs(self.values[:, :, -1]) ** 2)))
