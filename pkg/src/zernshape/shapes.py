"""Rasterised shapes, primitives, CSG operators and the geometry/pose split."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import ConvexHull, QhullError

from . import regions as rg
from .errors import DegenerateShapeError, DomainError, FormatError, FrameError, ShapeMismatchError
from .zernike import PolarGrid

UNIT_DISK = "unit_disk"
WORLD = "world"
DEFAULT_RESOLUTION = 300
DEFAULT_WORLD_BOUNDS = (-50.0, -50.0, 50.0, 50.0)
MASK_FORMAT_VERSION = 1

PRIMITIVES = ("circle", "square", "rectangle", "triangle", "diamond", "ellipse", "pentagon", "sector")
UNARY_OPS = ("scale", "translate", "rotate")
BINARY_OPS = ("union", "intersect", "subtract", "xor", "convex_hull")


@dataclass(frozen=True, eq=False)
class ShapeMask:
    """Binary occupancy grid.  ``pixels[iy, ix]``; row 0 is the lowest y.

    In the ``UNIT_DISK`` frame the grid spans [-1, 1]^2 and cells whose
    centre lies outside the disk are always empty.  ``region`` is the exact
    implicit shape the pixels were rasterised from, when known.
    """

    pixels: np.ndarray
    frame: str = UNIT_DISK
    bounds: tuple = (-1.0, -1.0, 1.0, 1.0)
    region: rg.Region | None = field(default=None, repr=False)

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]

    @property
    def degenerate(self) -> bool:
        return not self.pixels.any()

    @property
    def area_fraction(self) -> float:
        return float(self.pixels.mean())

    @property
    def pixel_size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return ((x1 - x0) / self.resolution, (y1 - y0) / self.resolution)

    @property
    def pixel_area(self) -> float:
        hx, hy = self.pixel_size
        return hx * hy

    def area(self) -> float:
        return float(self.pixels.sum()) * self.pixel_area

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return pixel_centers(self.resolution, self.bounds)

    def set_centers(self) -> np.ndarray:
        """(k, 2) array of the centres of set pixels."""
        x, y = self.centers()
        return np.stack([x[self.pixels], y[self.pixels]], axis=1)

    def same_pixels(self, other: "ShapeMask") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def with_pixels(self, pixels: np.ndarray, region=None) -> "ShapeMask":
        pixels = np.asarray(pixels, dtype=bool)
        pixels.setflags(write=False)
        return replace(self, pixels=pixels, region=region)


_CENTER_CACHE: dict = {}


def pixel_centers(resolution: int, bounds) -> tuple[np.ndarray, np.ndarray]:
    key = (resolution, tuple(bounds))
    hit = _CENTER_CACHE.get(key)
    if hit is None:
        x0, y0, x1, y1 = bounds
        xs = x0 + (np.arange(resolution) + 0.5) * ((x1 - x0) / resolution)
        ys = y0 + (np.arange(resolution) + 0.5) * ((y1 - y0) / resolution)
        x, y = np.meshgrid(xs, ys)
        x.setflags(write=False)
        y.setflags(write=False)
        hit = _CENTER_CACHE[key] = (x, y)
    return hit


def unit_disk_support(resolution: int) -> np.ndarray:
    x, y = pixel_centers(resolution, (-1.0, -1.0, 1.0, 1.0))
    return x * x + y * y <= 1.0 + rg.DISK_EPS


def rasterize(region: rg.Region, resolution: int = DEFAULT_RESOLUTION, frame: str = UNIT_DISK,
              bounds=None) -> ShapeMask:
    """Centre-of-pixel rasterisation of an implicit region."""
    if resolution < 1:
        raise DomainError("resolution must be positive")
    if frame == UNIT_DISK:
        bounds = (-1.0, -1.0, 1.0, 1.0)
        region = region if isinstance(region, rg.DiskClip) else rg.DiskClip(region)
    elif frame == WORLD:
        bounds = tuple(float(b) for b in (bounds or DEFAULT_WORLD_BOUNDS))
    else:
        raise FrameError(f"unknown frame {frame!r}")
    if frame == UNIT_DISK and (region.cx, region.cy, region.radius) == (0.0, 0.0, 1.0):
        # the outer clip is the cached disk support; test the child there only
        sx, sy, sup = _support_points(resolution)
        pixels = np.zeros((resolution, resolution), dtype=bool)
        pixels[sup] = region.child.contains(sx, sy)
    else:
        x, y = pixel_centers(resolution, bounds)
        pixels = np.asarray(region.contains(x, y), dtype=bool)
    pixels.setflags(write=False)
    return ShapeMask(pixels, frame, bounds, region)


_SUPPORT_CACHE: dict = {}


def _support_points(resolution: int):
    hit = _SUPPORT_CACHE.get(resolution)
    if hit is None:
        x, y = pixel_centers(resolution, (-1.0, -1.0, 1.0, 1.0))
        sup = unit_disk_support(resolution)
        hit = _SUPPORT_CACHE[resolution] = (x[sup], y[sup], sup)
    return hit


def empty_mask(resolution: int = DEFAULT_RESOLUTION, frame: str = UNIT_DISK, bounds=None) -> ShapeMask:
    bounds = (-1.0, -1.0, 1.0, 1.0) if frame == UNIT_DISK else tuple(bounds or DEFAULT_WORLD_BOUNDS)
    px = np.zeros((resolution, resolution), dtype=bool)
    px.setflags(write=False)
    return ShapeMask(px, frame, bounds, None)


# ---------------------------------------------------------------- primitives

_DEFAULTS = {
    "circle": {"radius": 1.0},
    "square": {"side": 1.0},
    "rectangle": {"width": 1.2, "height": 0.7},
    "triangle": {"radius": 0.9},
    "diamond": {"width": 1.4, "height": 1.0},
    "ellipse": {"a": 0.9, "b": 0.5},
    "pentagon": {"radius": 0.9},
    "sector": {"radius": 1.0, "span": np.pi / 2, "start": 0.0},
}


def make_primitive(kind: str, params: dict | None = None) -> rg.Region:
    """Implicit region for one of the eight primitives.

    Every kind accepts ``center`` (default origin) and ``angle`` (rotation,
    radians).  Size parameters: circle ``radius``; square ``side``;
    rectangle ``width``, ``height``; triangle and pentagon ``radius``
    (circumradius); diamond ``width``, ``height`` (diagonals); ellipse ``a``,
    ``b`` (semi-axes); sector ``radius``, ``span`` in (0, 2*pi], ``start``.
    The primitive must fit inside the unit disk.
    """
    if kind not in _DEFAULTS:
        raise DomainError(f"unknown primitive {kind!r}")
    p = dict(_DEFAULTS[kind])
    p.update(params or {})
    cx, cy = (float(v) for v in p.get("center", (0.0, 0.0)))
    ang = float(p.get("angle", 0.0))
    sizes = [v for k, v in p.items() if k not in ("center", "angle", "start")]
    if any(not np.isfinite(v) or v <= 0 for v in sizes):
        raise DomainError(f"degenerate {kind} parameters {p}")
    if kind == "circle":
        reg = rg.Ellipse(cx, cy, float(p["radius"]), float(p["radius"]), 0.0)
        extent = np.hypot(cx, cy) + p["radius"]
    elif kind == "ellipse":
        reg = rg.Ellipse(cx, cy, float(p["a"]), float(p["b"]), ang)
        extent = np.hypot(cx, cy) + max(p["a"], p["b"])
    elif kind == "sector":
        if p["span"] > 2 * np.pi:
            raise DomainError("sector span must not exceed 2*pi")
        reg = rg.Sector(cx, cy, float(p["radius"]), float(p["start"]) + ang, float(p["span"]))
        extent = np.hypot(cx, cy) + p["radius"]
    else:
        if kind == "square":
            reg = rg.rotated_box(p["side"], p["side"], cx, cy, ang)
        elif kind == "rectangle":
            reg = rg.rotated_box(p["width"], p["height"], cx, cy, ang)
        elif kind == "diamond":
            reg = rg.rotated_diamond(p["width"], p["height"], cx, cy, ang)
        elif kind == "triangle":
            reg = rg.regular_polygon(3, p["radius"], cx, cy, ang)
        else:
            reg = rg.regular_polygon(5, p["radius"], cx, cy, ang)
        extent = max(np.hypot(*v) for v in reg.vertices)
    if extent > 1.0 + 1e-9:
        raise DomainError(f"{kind} with {p} extends to radius {extent:.4f} outside the unit disk")
    return reg


def rasterize_primitive(kind: str, params: dict | None = None,
                        resolution: int = DEFAULT_RESOLUTION) -> ShapeMask:
    if resolution < 32:
        raise DomainError("resolution must be at least 32")
    mask = rasterize(make_primitive(kind, params), resolution)
    if mask.degenerate:
        raise DomainError(f"{kind} with {params} covers no pixel centre at resolution {resolution}")
    return mask


# ------------------------------------------------------------------ operators

def affine_params(op: str, params: dict) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and offset of p -> M p + t for a unary operator."""
    c = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)
    if op == "scale":
        f = params["factor"]
        sx, sy = (f, f) if np.isscalar(f) else f
        if sx <= 0 or sy <= 0:
            raise DomainError("scale factors must be positive")
        M = np.array([[sx, 0.0], [0.0, sy]])
    elif op == "rotate":
        a = params["angle"]
        M = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    elif op == "translate":
        M = np.eye(2)
        c = np.zeros(2)
    elif op == "shear":
        M = np.array([[1.0, params.get("kx", 0.0)], [params.get("ky", 0.0), 1.0]])
    elif op == "affine":
        M = np.asarray(params["matrix"], dtype=float)
    else:
        raise DomainError(f"unknown unary operator {op!r}")
    t = np.asarray(params.get("offset", (0.0, 0.0)), dtype=float) if op in ("translate", "affine") \
        else np.zeros(2)
    if abs(np.linalg.det(M)) < 1e-12:
        raise DomainError("singular transform")
    return M, c + t - M @ c


def _resample(mask: ShapeMask, M: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Nearest-neighbour pull-back of ``mask`` through p -> M p + t."""
    x, y = mask.centers()
    Minv = np.linalg.inv(M)
    qx = Minv[0, 0] * (x - t[0]) + Minv[0, 1] * (y - t[1])
    qy = Minv[1, 0] * (x - t[0]) + Minv[1, 1] * (y - t[1])
    return _lookup(mask, qx, qy)


def _lookup(mask: ShapeMask, qx, qy) -> np.ndarray:
    x0, y0, _, _ = mask.bounds
    hx, hy = mask.pixel_size
    ix = np.rint((qx - x0) / hx - 0.5).astype(np.int64)
    iy = np.rint((qy - y0) / hy - 0.5).astype(np.int64)
    res = mask.resolution
    ok = (ix >= 0) & (ix < res) & (iy >= 0) & (iy < res)
    out = np.zeros(np.shape(qx), dtype=bool)
    out[ok] = mask.pixels[iy[ok], ix[ok]]
    return out


def apply_unary(mask: ShapeMask, op: str, params: dict) -> ShapeMask:
    """Scale, translate or rotate a mask.

    ``scale``: ``factor`` (scalar or pair) about ``center``; ``rotate``:
    ``angle`` (counter-clockwise, radians) about ``center``; ``translate``:
    ``offset``.  Masks that carry their implicit region are transformed
    exactly and re-rasterised; others are resampled nearest-neighbour.
    """
    M, t = affine_params(op, params)
    if mask.region is not None:
        reg = rg.Affine(mask.region, tuple(map(tuple, M.tolist())), tuple(t.tolist()))
        out = rasterize(reg, mask.resolution, mask.frame, mask.bounds)
    else:
        px = _resample(mask, M, t)
        if mask.frame == UNIT_DISK:
            px &= unit_disk_support(mask.resolution)
        out = mask.with_pixels(px)
    if out.degenerate:
        raise DegenerateShapeError(f"{op} {params} moved the shape entirely outside the domain")
    return out


def _check_compatible(a: ShapeMask, b: ShapeMask) -> None:
    if a.frame != b.frame:
        raise FrameError(f"cannot combine {a.frame} and {b.frame} masks")
    if a.pixels.shape != b.pixels.shape or tuple(a.bounds) != tuple(b.bounds):
        raise ShapeMismatchError("masks differ in resolution or bounds")


def hull_region(mask: ShapeMask) -> rg.Region | None:
    pts = mask.set_centers()
    if len(pts) < 3:
        return None
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    v = pts[hull.vertices]
    c = v.mean(axis=0)
    # grow by a hair so pixel centres on hull edges test as inside
    hx, hy = mask.pixel_size
    d = v - c
    norm = np.hypot(d[:, 0], d[:, 1])
    v = v + d / np.maximum(norm, 1e-300)[:, None] * (1e-6 * min(hx, hy))
    return rg.Polygon(tuple((float(px), float(py)) for px, py in v))


def apply_binary(a: ShapeMask, b: ShapeMask, op: str, allow_empty: bool = False) -> ShapeMask:
    """Pixelwise CSG combination; ``convex_hull`` rasterises the hull of the union."""
    _check_compatible(a, b)
    if op == "convex_hull":
        union = a.with_pixels(a.pixels | b.pixels)
        reg = hull_region(union)
        if reg is None:
            out = union
        else:
            hull = rasterize(reg, a.resolution, a.frame, a.bounds)
            full = None
            if a.region is not None and b.region is not None:
                full = rg.Boolean("union", hull.region, rg.Boolean("union", a.region, b.region))
            out = a.with_pixels(hull.pixels | union.pixels, full)
    elif op in rg.BOOLEAN_OPS:
        reg = None
        if a.region is not None and b.region is not None:
            reg = rg.Boolean(op, a.region, b.region)
        out = a.with_pixels(rg.combine_pixels(op, a.pixels, b.pixels), reg)
    else:
        raise DomainError(f"unknown binary operator {op!r}")
    if out.degenerate and not allow_empty:
        raise DegenerateShapeError(f"{op} produced an empty mask")
    return out


def iou(a: ShapeMask, b: ShapeMask) -> float:
    inter = np.logical_and(a.pixels, b.pixels).sum()
    union = np.logical_or(a.pixels, b.pixels).sum()
    return 1.0 if union == 0 else float(inter / union)


def perimeter(mask: ShapeMask) -> float:
    """Length of the pixel-edge boundary between set and unset cells."""
    px = np.pad(mask.pixels, 1)
    hx, hy = mask.pixel_size
    vert = np.count_nonzero(px[:, 1:] != px[:, :-1])
    horiz = np.count_nonzero(px[1:, :] != px[:-1, :])
    return vert * hy + horiz * hx


def boundary_complexity(mask: ShapeMask) -> float:
    """Perimeter over area; infinite for empty masks."""
    area = mask.area()
    return float("inf") if area == 0 else perimeter(mask) / area


# ----------------------------------------------------------------------- pose

@dataclass(frozen=True, eq=False)
class Pose:
    """Placement of unit-disk geometry in the world: S = A @ S_G + b.

    ``flattened`` is [A11, A12, A21, A22, b1, b2] with A and b measured in
    units of half the world extent (b relative to the world centre), divided
    by its L2 norm ``norm``.
    """

    flattened: np.ndarray
    norm: float
    world_bounds: tuple = DEFAULT_WORLD_BOUNDS

    @staticmethod
    def _frame(bounds):
        x0, y0, x1, y1 = bounds
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2]), max(x1 - x0, y1 - y0) / 2

    @classmethod
    def from_parts(cls, transform, translation, world_bounds=DEFAULT_WORLD_BOUNDS) -> "Pose":
        A = np.asarray(transform, dtype=float).reshape(2, 2)
        b = np.asarray(translation, dtype=float).reshape(2)
        center, half = cls._frame(world_bounds)
        raw = np.concatenate([A.ravel() / half, (b - center) / half])
        norm = float(np.linalg.norm(raw))
        if norm <= 0:
            raise DomainError("pose vector is identically zero")
        flat = raw / norm
        flat.setflags(write=False)
        return cls(flat, norm, tuple(float(v) for v in world_bounds))

    @property
    def raw(self) -> np.ndarray:
        return self.flattened * self.norm

    @property
    def transform(self) -> np.ndarray:
        _, half = self._frame(self.world_bounds)
        return self.raw[:4].reshape(2, 2) * half

    @property
    def translation(self) -> np.ndarray:
        center, half = self._frame(self.world_bounds)
        return self.raw[4:] * half + center

    def to_dict(self) -> dict:
        return {"flattened": self.flattened.tolist(), "norm": self.norm,
                "world_bounds": list(self.world_bounds),
                "transform": self.transform.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        flat = np.asarray(d["flattened"], dtype=float)
        flat.setflags(write=False)
        return cls(flat, float(d["norm"]), tuple(d["world_bounds"]))


@dataclass(frozen=True, eq=False)
class GroundedShape:
    geometry: ShapeMask
    pose: Pose


def decompose(world_mask: ShapeMask, world_bounds=None,
              resolution: int = DEFAULT_RESOLUTION) -> GroundedShape:
    """Split a world-frame mask into unit-disk geometry and an isotropic pose.

    The translation is the occupancy centroid and the transform is s * I with
    s the largest centroid-to-pixel-centre distance, so the geometry touches
    the unit circle.  Rotation and shear stay in the geometry.
    """
    if world_mask.frame != WORLD:
        raise FrameError("decompose expects a WORLD-frame mask")
    if world_mask.degenerate:
        raise DegenerateShapeError("cannot decompose an empty mask")
    bounds = tuple(world_mask.bounds) if world_bounds is None else tuple(float(v) for v in world_bounds)
    pts = world_mask.set_centers()
    x0, y0, x1, y1 = bounds
    if pts[:, 0].min() < x0 or pts[:, 0].max() > x1 or pts[:, 1].min() < y0 or pts[:, 1].max() > y1:
        raise DomainError("shape extends beyond the world bounds")
    b = pts.mean(axis=0)
    s = float(np.sqrt(((pts - b) ** 2).sum(axis=1).max()))
    hx, hy = world_mask.pixel_size
    s = max(s, 0.5 * np.hypot(hx, hy))
    pose = Pose.from_parts(s * np.eye(2), b, bounds)
    if world_mask.region is not None:
        reg = rg.Affine(world_mask.region, ((1.0 / s, 0.0), (0.0, 1.0 / s)),
                        (float(-b[0] / s), float(-b[1] / s)))
        geom = rasterize(reg, resolution)
    else:
        gx, gy = pixel_centers(resolution, (-1.0, -1.0, 1.0, 1.0))
        px = _lookup(world_mask, s * gx + b[0], s * gy + b[1]) & unit_disk_support(resolution)
        geom = empty_mask(resolution).with_pixels(px)
    return GroundedShape(geom, pose)


def apply_pose(shape: GroundedShape, resolution: int = DEFAULT_RESOLUTION,
               world_bounds=None) -> ShapeMask:
    """Place the geometry in the world frame (inverse of :func:`decompose`)."""
    geom, pose = shape.geometry, shape.pose
    if geom.frame != UNIT_DISK:
        raise FrameError("geometry must be in the UNIT_DISK frame")
    bounds = tuple(pose.world_bounds) if world_bounds is None else tuple(world_bounds)
    A, b = pose.transform, pose.translation
    if geom.region is not None:
        base = geom.region if isinstance(geom.region, rg.DiskClip) else rg.DiskClip(geom.region)
        reg = rg.Affine(base, tuple(map(tuple, A.tolist())), tuple(b.tolist()))
        return rasterize(reg, resolution, WORLD, bounds)
    x, y = pixel_centers(resolution, bounds)
    Ainv = np.linalg.inv(A)
    qx = Ainv[0, 0] * (x - b[0]) + Ainv[0, 1] * (y - b[1])
    qy = Ainv[1, 0] * (x - b[0]) + Ainv[1, 1] * (y - b[1])
    px = (qx * qx + qy * qy <= 1.0 + rg.DISK_EPS) & _lookup(geom, qx, qy)
    return empty_mask(resolution, WORLD, bounds).with_pixels(px)


# ---------------------------------------------------------------- polar field

@dataclass(frozen=True, eq=False)
class PolarField:
    values: np.ndarray
    grid: PolarGrid

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ShapeMismatchError(f"field {self.values.shape} does not match grid {self.grid.shape}")


def _bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of img[v, u] at fractional indices, edge-clamped.

    Written as two lerps so constant neighbourhoods reproduce exactly.
    """
    h, w = img.shape
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), w - 2)
    j0 = np.minimum(np.floor(v).astype(np.int64), h - 2)
    fu = u - i0
    fv = v - j0
    a = img[j0, i0]
    b = img[j0, i0 + 1]
    c = img[j0 + 1, i0]
    d = img[j0 + 1, i0 + 1]
    lo = a + fu * (b - a)
    hi = c + fu * (d - c)
    return lo + fv * (hi - lo)


_EXTEND_CACHE: dict = {}


def _rim_extension(resolution: int):
    """Index arrays copying each outside-disk cell from its nearest inside cell."""
    hit = _EXTEND_CACHE.get(resolution)
    if hit is None:
        outside = ~unit_disk_support(resolution)
        _, (iy, ix) = distance_transform_edt(outside, return_indices=True)
        hit = _EXTEND_CACHE[resolution] = (iy, ix)
    return hit


def to_polar(mask: ShapeMask, grid: PolarGrid) -> PolarField:
    """Sample a unit-disk mask at the polar grid nodes by bilinear interpolation.

    Cells outside the disk are filled from their nearest inside cell first, so
    the always-empty exterior does not bleed into nodes near r = 1.
    """
    if mask.frame != UNIT_DISK:
        raise FrameError("to_polar expects a UNIT_DISK mask")
    r, t = grid.mesh()
    x = r * np.cos(t)
    y = r * np.sin(t)
    res = mask.resolution
    u = (x + 1.0) * (res / 2.0) - 0.5
    v = (y + 1.0) * (res / 2.0) - 0.5
    iy, ix = _rim_extension(res)
    vals = _bilinear(mask.pixels[iy, ix].astype(float), u, v)
    return PolarField(vals, grid)


def polar_from_function(fn, grid: PolarGrid) -> PolarField:
    r, t = grid.mesh()
    return PolarField(np.asarray(fn(r, t), dtype=float) * np.ones(grid.shape), grid)


# ------------------------------------------------------------------------ i/o

def write_pgm(mask: ShapeMask, path) -> None:
    """Write a P5 graymap (255 = set, +y up) plus a ``.meta`` key=value sidecar."""
    path = Path(path)
    img = np.where(np.flipud(mask.pixels), 255, 0).astype(np.uint8)
    h, w = img.shape
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())
    tmp.replace(path)
    meta = {"format_version": MASK_FORMAT_VERSION, "frame": mask.frame,
            "bounds": ",".join(repr(float(v)) for v in mask.bounds), "resolution": mask.resolution}
    side = path.with_name(path.name + ".meta")
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    tmp.replace(side)


def _pgm_tokens(data: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> ShapeMask:
    """Read a P5 graymap, binarising at 128; frame and bounds come from the sidecar."""
    path = Path(path)
    data = path.read_bytes()
    try:
        tokens, pos = _pgm_tokens(data)
    except IndexError as exc:
        raise FormatError(f"{path}: truncated PGM header") from exc
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if w != h:
        raise FormatError(f"{path}: masks must be square, got {w}x{h}")
    if maxval > 255:
        raise FormatError(f"{path}: 16-bit PGM is not supported")
    img = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8)
    if img.size != w * h:
        raise FormatError(f"{path}: truncated PGM payload")
    pixels = np.flipud(img.reshape(h, w)) >= 128
    meta = read_sidecar(path)
    frame = meta.get("frame", UNIT_DISK)
    if frame == UNIT_DISK:
        bounds = (-1.0, -1.0, 1.0, 1.0)
        pixels &= unit_disk_support(w)
    elif frame == WORLD:
        bounds = tuple(float(v) for v in meta.get("bounds", ",".join(map(str, DEFAULT_WORLD_BOUNDS))).split(","))
    else:
        raise FormatError(f"{path}: unknown frame {frame!r}")
    pixels = np.ascontiguousarray(pixels)
    pixels.setflags(write=False)
    return ShapeMask(pixels, frame, bounds, None)


def read_sidecar(path) -> dict:
    side = Path(path).with_name(Path(path).name + ".meta")
    if not side.exists():
        return {}
    out = {}
    for line in side.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{side}: malformed line {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
