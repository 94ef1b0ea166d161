"""Closed-form graphs with exact jets, used as numerical oracles.

These states have known analytic behavior: flat planes and half-planes
pin the Gaussian-density dichotomy (1 vs 1/2), the radius sqrt(2n) sphere
cap solves the self-shrinker system exactly, and the Scherk graph solves
the codimension-one minimal surface equation, so every discrete residual
on them is pure truncation error.
"""

from __future__ import annotations

import numpy as np

from .boundary import LinearMap
from .domains import DomainSpec
from .flow import GraphState, make_state
from .grid import build_grid


class SphereCapMap:
    """Upper cap f(x) = sqrt(radius^2 - |x|^2); radius sqrt(2n) shrinks
    self-similarly (H + F_perp / 2 = 0 exactly)."""

    m = 1

    def __init__(self, radius: float, dim: int):
        self.radius = float(radius)
        self.n = int(dim)

    def values(self, pts):
        pts = np.atleast_2d(pts)
        return np.sqrt(self.radius ** 2 - (pts ** 2).sum(axis=1))[:, None]

    def jets(self, pts):
        pts = np.atleast_2d(pts)
        f = np.sqrt(self.radius ** 2 - (pts ** 2).sum(axis=1))
        jac = (-pts / f[:, None])[:, None, :]
        outer = pts[:, :, None] * pts[:, None, :]
        hess = (-(np.eye(self.n)[None] / f[:, None, None])
                - outer / (f ** 3)[:, None, None])[:, None]
        return f[:, None], jac, hess


class ScherkMap:
    """Scherk graph f(x) = log(cos x_1 / cos x_2), a minimal graph on the
    square |x_i| < pi/2."""

    n = 2
    m = 1

    def values(self, pts):
        pts = np.atleast_2d(pts)
        return (np.log(np.cos(pts[:, 0])) - np.log(np.cos(pts[:, 1])))[:, None]

    def jets(self, pts):
        pts = np.atleast_2d(pts)
        t0, t1 = np.tan(pts[:, 0]), np.tan(pts[:, 1])
        vals = (np.log(np.cos(pts[:, 0])) - np.log(np.cos(pts[:, 1])))[:, None]
        jac = np.stack([-t0, t1], axis=1)[:, None, :]
        hess = np.zeros((pts.shape[0], 1, 2, 2))
        hess[:, 0, 0, 0] = -(1.0 + t0 * t0)
        hess[:, 0, 1, 1] = 1.0 + t1 * t1
        return vals, jac, hess


def plane_state(h: float, halfwidth: float = 3.0, dim: int = 2,
                slope=None, offset=None, m: int = 1) -> GraphState:
    """Affine graph over a centered box; the default is the flat zero plane."""
    spec = DomainSpec.box(np.full(dim, 2.0 * halfwidth),
                          lo=np.full(dim, -halfwidth))
    grid = build_grid(spec, h)
    A = np.zeros((m, dim)) if slope is None else np.asarray(slope, float)
    b = np.zeros(m) if offset is None else np.asarray(offset, float)
    return make_state(grid, LinearMap(A, b))


def half_plane_state(h: float, halfwidth: float = 3.0, dim: int = 2,
                     slope=None, m: int = 1) -> GraphState:
    """Affine graph over a box resting on the hyperplane x_n = 0.

    With zero data the graph is a flat half-plane whose straight edge
    passes through the origin: the boundary-point density oracle.
    """
    lo = np.full(dim, -halfwidth)
    lo[dim - 1] = 0.0
    edges = np.full(dim, 2.0 * halfwidth)
    edges[dim - 1] = halfwidth
    spec = DomainSpec.box(edges, lo=lo)
    grid = build_grid(spec, h)
    A = np.zeros((m, dim)) if slope is None else np.asarray(slope, float)
    return make_state(grid, LinearMap(A))


def sphere_cap_state(h: float, halfwidth: float = 0.8,
                     dim: int = 2) -> GraphState:
    """Cap of the radius sqrt(2n) sphere over a centered box (a shrinker)."""
    spec = DomainSpec.box(np.full(dim, 2.0 * halfwidth),
                          lo=np.full(dim, -halfwidth))
    grid = build_grid(spec, h)
    return make_state(grid, SphereCapMap(np.sqrt(2.0 * dim), dim))


def scherk_state(h: float, halfwidth: float = 0.7) -> GraphState:
    """Scherk minimal graph over a centered square inside its singular frame."""
    spec = DomainSpec.box(np.full(2, 2.0 * halfwidth),
                          lo=np.full(2, -halfwidth))
    grid = build_grid(spec, h)
    return make_state(grid, ScherkMap())
