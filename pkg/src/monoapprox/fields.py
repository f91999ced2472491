"""Analytic test fields on standard masked domains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import DomainGrid, ScalarField, sample_analytic

__all__ = ["Builtin", "BUILTINS", "builtin", "builtin_nodes", "square_mask", "disk_mask", "annulus_mask"]

_EDGE = 1e-12


def square_mask(X, Y):
    return np.ones_like(X, dtype=bool)


def disk_mask(X, Y, radius=1.0):
    return np.hypot(X, Y) <= radius + _EDGE


def annulus_mask(X, Y, inner=0.25, outer=1.0):
    r = np.hypot(X, Y)
    return (r >= inner - _EDGE) & (r <= outer + _EDGE)


@dataclass(frozen=True)
class Builtin:
    name: str
    f: Callable
    bbox: tuple[float, float, float, float]
    mask: Callable

    @property
    def side(self) -> float:
        return self.bbox[1] - self.bbox[0]

    def grid(self, h: float) -> DomainGrid:
        return DomainGrid.box(*self.bbox, h, self.mask)

    def sample(self, h: float) -> ScalarField:
        return sample_analytic(self.f, self.grid(h))


BUILTINS = {
    b.name: b
    for b in [
        Builtin("linear", lambda x, y: x + 0.0 * y, (0.0, 1.0, 0.0, 1.0), square_mask),
        Builtin("saddle", lambda x, y: x**2 - y**2, (-1.0, 1.0, -1.0, 1.0), square_mask),
        Builtin("radial-annulus", lambda x, y: np.hypot(x, y), (-1.0, 1.0, -1.0, 1.0), annulus_mask),
        Builtin("bowl-disk", lambda x, y: x**2 + y**2, (-1.0, 1.0, -1.0, 1.0), disk_mask),
        Builtin("log-annulus", lambda x, y: np.log(4.0 * np.hypot(x, y)) / np.log(4.0),
                (-1.0, 1.0, -1.0, 1.0), annulus_mask),
        Builtin("sine-grid", lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                (0.0, 2.0, 0.0, 2.0), square_mask),
    ]
}


def builtin(name: str, h: float = 1.0 / 128) -> ScalarField:
    """Sample a builtin field at spacing ``h``."""
    try:
        b = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin field {name!r}; choose from {sorted(BUILTINS)}") from None
    return b.sample(h)


def builtin_nodes(name: str, nodes: int) -> ScalarField:
    """Sample a builtin field with ``nodes`` nodes along each side of its box."""
    b = BUILTINS[name]
    return b.sample(b.side / (nodes - 1))
