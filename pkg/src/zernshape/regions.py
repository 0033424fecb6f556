"""Implicit planar regions: point-membership predicates composed as a CSG tree.

Masks are rasterised from these trees with a centre-of-pixel test, which keeps
analytic transforms exact (a rotated circle rasterises to the same pixels) and
makes recipes replayable bit for bit.  Every node is immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

# Tolerance on |p|^2 <= R^2 tests, so points computed to sit exactly on a
# clipping circle survive rounding.
DISK_EPS = 1e-12


class Region:
    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def map_leaves(self, fn: Callable[["Region"], "Region"]) -> "Region":
        return fn(self)


@dataclass(frozen=True)
class Ellipse(Region):
    cx: float
    cy: float
    a: float
    b: float
    angle: float = 0.0

    def contains(self, x, y):
        c, s = np.cos(self.angle), np.sin(self.angle)
        dx, dy = x - self.cx, y - self.cy
        u = (c * dx + s * dy) / self.a
        v = (-s * dx + c * dy) / self.b
        return u * u + v * v <= 1.0

    def to_dict(self):
        return {"type": "ellipse", "cx": self.cx, "cy": self.cy, "a": self.a, "b": self.b,
                "angle": self.angle}


@dataclass(frozen=True)
class Polygon(Region):
    vertices: tuple

    def contains(self, x, y):
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        v = self.vertices
        for i in range(len(v)):
            xi, yi = v[i]
            xj, yj = v[i - 1]
            if yi == yj:
                continue
            cross = (yi > y) != (yj > y)
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= cross & (x < xint)
        return inside

    def to_dict(self):
        return {"type": "polygon", "vertices": [list(p) for p in self.vertices]}


@dataclass(frozen=True)
class Sector(Region):
    cx: float
    cy: float
    radius: float
    start: float
    span: float

    def contains(self, x, y):
        dx, dy = x - self.cx, y - self.cy
        rr = dx * dx + dy * dy
        ang = np.mod(np.arctan2(dy, dx) - self.start, 2 * np.pi)
        return (rr <= self.radius**2) & (ang <= self.span)

    def to_dict(self):
        return {"type": "sector", "cx": self.cx, "cy": self.cy, "radius": self.radius,
                "start": self.start, "span": self.span}


@dataclass(frozen=True)
class DiskClip(Region):
    """Restriction of ``child`` to the closed disk of ``radius`` about (cx, cy)."""

    child: Region
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 1.0

    def contains(self, x, y):
        x, y = np.broadcast_arrays(x, y)
        dx = (x - self.cx) / self.radius
        dy = (y - self.cy) / self.radius
        inside = dx * dx + dy * dy <= 1.0 + DISK_EPS
        inside[inside] = self.child.contains(x[inside], y[inside])
        return inside

    def to_dict(self):
        return {"type": "diskclip", "child": self.child.to_dict(), "cx": self.cx, "cy": self.cy,
                "radius": self.radius}

    def map_leaves(self, fn):
        return DiskClip(self.child.map_leaves(fn), self.cx, self.cy, self.radius)


@dataclass(frozen=True)
class Affine(Region):
    """Image of ``child`` under p -> matrix @ p + offset."""

    child: Region
    matrix: tuple  # ((a, b), (c, d))
    offset: tuple

    def contains(self, x, y):
        (a, b), (c, d) = self.matrix
        det = a * d - b * c
        px = x - self.offset[0]
        py = y - self.offset[1]
        qx = (d * px - b * py) / det
        qy = (-c * px + a * py) / det
        return self.child.contains(qx, qy)

    def to_dict(self):
        return {"type": "affine", "child": self.child.to_dict(),
                "matrix": [list(r) for r in self.matrix], "offset": list(self.offset)}

    def map_leaves(self, fn):
        return Affine(self.child.map_leaves(fn), self.matrix, self.offset)


BOOLEAN_OPS = ("union", "intersect", "subtract", "xor")


def combine_pixels(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if op == "union":
        return a | b
    if op == "intersect":
        return a & b
    if op == "subtract":
        return a & ~b
    if op == "xor":
        return a ^ b
    raise DomainError(f"unknown boolean operator {op!r}")


@dataclass(frozen=True)
class Boolean(Region):
    op: str
    a: Region
    b: Region

    def contains(self, x, y):
        # the second operand is only evaluated where it can change the result
        x, y = np.broadcast_arrays(x, y)
        a = np.asarray(self.a.contains(x, y), dtype=bool)
        if self.op == "xor":
            return a ^ self.b.contains(x, y)
        out = a.copy()
        if self.op == "union":
            sel = ~a
            out[sel] = self.b.contains(x[sel], y[sel])
        elif self.op == "intersect":
            out[a] = self.b.contains(x[a], y[a])
        elif self.op == "subtract":
            out[a] = ~self.b.contains(x[a], y[a])
        else:
            raise DomainError(f"unknown boolean operator {self.op!r}")
        return out

    def to_dict(self):
        return {"type": "boolean", "op": self.op, "a": self.a.to_dict(), "b": self.b.to_dict()}

    def map_leaves(self, fn):
        return Boolean(self.op, self.a.map_leaves(fn), self.b.map_leaves(fn))


@dataclass(frozen=True, eq=False)
class Warp(Region):
    """Pull-back of ``child`` through a displacement: p is inside iff p - d(p) is."""

    child: Region
    displacement: Callable

    def contains(self, x, y):
        dx, dy = self.displacement(x, y)
        return self.child.contains(x - dx, y - dy)

    def to_dict(self):
        raise DomainError("warped regions are not serialisable")

    def map_leaves(self, fn):
        return Warp(self.child.map_leaves(fn), self.displacement)


def region_from_dict(d: dict) -> Region:
    t = d["type"]
    if t == "ellipse":
        return Ellipse(d["cx"], d["cy"], d["a"], d["b"], d["angle"])
    if t == "polygon":
        return Polygon(tuple(tuple(p) for p in d["vertices"]))
    if t == "sector":
        return Sector(d["cx"], d["cy"], d["radius"], d["start"], d["span"])
    if t == "diskclip":
        return DiskClip(region_from_dict(d["child"]), d["cx"], d["cy"], d["radius"])
    if t == "affine":
        return Affine(region_from_dict(d["child"]), tuple(tuple(r) for r in d["matrix"]),
                      tuple(d["offset"]))
    if t == "boolean":
        return Boolean(d["op"], region_from_dict(d["a"]), region_from_dict(d["b"]))
    raise DomainError(f"unknown region type {t!r}")


def regular_polygon(sides: int, radius: float, cx=0.0, cy=0.0, angle=0.0) -> Polygon:
    t = angle + np.pi / 2 + 2 * np.pi * np.arange(sides) / sides
    return Polygon(tuple((float(cx + radius * np.cos(a)), float(cy + radius * np.sin(a))) for a in t))


def rotated_box(w: float, h: float, cx=0.0, cy=0.0, angle=0.0) -> Polygon:
    c, s = np.cos(angle), np.sin(angle)
    pts = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
    return Polygon(tuple((float(cx + c * u - s * v), float(cy + s * u + c * v)) for u, v in pts))


def rotated_diamond(w: float, h: float, cx=0.0, cy=0.0, angle=0.0) -> Polygon:
    c, s = np.cos(angle), np.sin(angle)
    pts = [(w / 2, 0.0), (0.0, h / 2), (-w / 2, 0.0), (0.0, -h / 2)]
    return Polygon(tuple((float(cx + c * u - s * v), float(cy + s * u + c * v)) for u, v in pts))
