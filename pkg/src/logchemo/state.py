from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, MacVelocity, ScalarField


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class State:
    """Published snapshot ``(t, n, c, u)``; arrays are read-only."""

    grid: GridSpec
    t: float
    n: np.ndarray
    c: np.ndarray
    u: MacVelocity

    def __post_init__(self):
        object.__setattr__(self, "n", _frozen(self.n))
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "u", MacVelocity(self.grid, _frozen(self.u.x), _frozen(self.u.y)))
        if self.n.shape != self.grid.shape or self.c.shape != self.grid.shape:
            raise ValueError("state fields do not match the grid")

    @property
    def n_field(self) -> ScalarField:
        return ScalarField(self.grid, self.n)

    @property
    def c_field(self) -> ScalarField:
        return ScalarField(self.grid, self.c)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in (self.n, self.c, self.u.x, self.u.y):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        h.update(np.float64(self.t).tobytes())
        return h.hexdigest()
