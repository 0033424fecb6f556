"""Seeded CSG shape corpus: depth-stratified recipes, replay, augmentation and on-disk layout."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from . import regions as rg
from .errors import DegenerateShapeError, DomainError, FormatError, FrameError, GenerationError
from .shapes import (DEFAULT_RESOLUTION, DEFAULT_WORLD_BOUNDS, PRIMITIVES, UNIT_DISK, GroundedShape, Pose,
                     ShapeMask, apply_binary, apply_pose, apply_unary, hull_region, iou, make_primitive, rasterize,
                     read_pgm, write_pgm)

CORPUS_FORMAT_VERSION = 1
OPERATORS = ("scale", "translate", "rotate", "union", "intersect", "subtract", "xor", "convex_hull")
BINARY = ("union", "intersect", "subtract", "xor", "convex_hull")
AUGMENTATIONS = ("rotation", "shearing", "vertex_jitter", "elastic")


@dataclass(frozen=True)
class CorpusConfig:
    """Sampling ranges of the generator; every value is recorded in the manifest."""

    resolution: int = DEFAULT_RESOLUTION
    world_bounds: tuple = DEFAULT_WORLD_BOUNDS
    extent_range: tuple = (0.6, 1.0)
    aspect_range: tuple = (0.35, 0.85)
    sector_span_range: tuple = (math.pi / 3, 1.5 * math.pi)
    fraction_range: tuple = (0.3, 0.8)
    scale_range: tuple = (0.7, 1.1)
    translate_range: tuple = (0.05, 0.3)
    pose_scale_range: tuple = (2.0, 20.0)
    binary_divisor: int = 3
    min_area_fraction: float = 0.02
    step_iou_range: tuple = (0.6, 0.97)
    max_step_retries: int = 40
    max_shape_retries: int = 20

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class AugmentConfig:
    """Perturbation ranges used by :func:`augment`."""

    max_rotation: float = math.pi / 4
    max_shear: float = 0.3
    jitter_sigma: float = 0.03
    axis_jitter: float = 0.1
    elastic_grid: int = 4
    elastic_amplitude: float = 0.08

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ShapeRecipe:
    """Replayable construction: a start primitive, ``depth`` operator steps, normalisation, pose."""

    depth: int
    seed: tuple
    start: dict
    steps: list
    normalize: dict
    pose: dict

    @property
    def binary_count(self) -> int:
        return sum(s["op"] in BINARY for s in self.steps)

    def to_dict(self) -> dict:
        return {"format_version": CORPUS_FORMAT_VERSION, "depth": self.depth, "seed": list(self.seed),
                "start": self.start, "steps": self.steps, "normalize": self.normalize, "pose": self.pose}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeRecipe":
        if d.get("format_version") != CORPUS_FORMAT_VERSION:
            raise FormatError(f"unsupported recipe version {d.get('format_version')}")
        return cls(d["depth"], tuple(d["seed"]), d["start"], d["steps"], d["normalize"], d["pose"])


@dataclass
class CorpusEntry:
    id: str
    recipe: ShapeRecipe
    shape: GroundedShape


@dataclass
class Corpus:
    entries: list
    seed: int
    config: CorpusConfig = field(default_factory=CorpusConfig)

    @property
    def counts(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out[e.recipe.depth] = out.get(e.recipe.depth, 0) + 1
        return dict(sorted(out.items()))

    @property
    def manifest(self) -> dict:
        return {"format_version": CORPUS_FORMAT_VERSION, "seed": self.seed, "config": self.config.to_dict(),
                "counts": {str(k): v for k, v in self.counts.items()}, "total": len(self.entries),
                "entries": [e.id for e in self.entries]}

    def by_depth(self, depth: int) -> list:
        return [e for e in self.entries if e.recipe.depth == depth]


# ------------------------------------------------------------------ sampling

def _f(x) -> float:
    return float(x)


def sample_primitive(rng: np.random.Generator, cfg: CorpusConfig, kind: str | None = None) -> dict:
    """Random primitive centred at the origin whose farthest point lies at a sampled extent."""
    kind = PRIMITIVES[rng.integers(len(PRIMITIVES))] if kind is None else kind
    e = _f(rng.uniform(*cfg.extent_range))
    q = _f(rng.uniform(*cfg.aspect_range))
    angle = _f(rng.uniform(0, 2 * math.pi))
    if kind == "circle":
        p = {"radius": e}
    elif kind == "square":
        p = {"side": e * math.sqrt(2.0)}
    elif kind == "rectangle":
        w = 2 * e / math.sqrt(1 + q * q)
        p = {"width": w, "height": q * w}
    elif kind in ("triangle", "pentagon"):
        p = {"radius": e}
    elif kind == "diamond":
        p = {"width": 2 * e, "height": 2 * e * q}
    elif kind == "ellipse":
        p = {"a": e, "b": e * q}
    else:
        p = {"radius": e, "span": _f(rng.uniform(*cfg.sector_span_range))}
    p["angle"] = angle
    return {"kind": kind, "params": p}


def _centroid(mask: ShapeMask) -> np.ndarray:
    return mask.set_centers().mean(axis=0)


def _bbox(mask: ShapeMask):
    """Extremes of set pixel centres as ((xmin, ymin), (xmax, ymax))."""
    x0, y0, _, _ = mask.bounds
    hx, hy = mask.pixel_size
    cols = np.flatnonzero(mask.pixels.any(axis=0))
    rows = np.flatnonzero(mask.pixels.any(axis=1))
    lo = np.array([x0 + (cols[0] + 0.5) * hx, y0 + (rows[0] + 0.5) * hy])
    hi = np.array([x0 + (cols[-1] + 0.5) * hx, y0 + (rows[-1] + 0.5) * hy])
    return lo, hi


def _sample_unary(op: str, mask: ShapeMask, rng, cfg: CorpusConfig) -> dict:
    c = [float(v) for v in _centroid(mask)]
    if op == "scale":
        return {"factor": _f(rng.uniform(*cfg.scale_range)), "center": c}
    if op == "rotate":
        return {"angle": _f(rng.uniform(0, 2 * math.pi)), "center": c}
    d = _f(rng.uniform(*cfg.translate_range))
    a = rng.uniform(0, 2 * math.pi)
    return {"offset": [d * math.cos(a), d * math.sin(a)]}


def _sample_operand(mask: ShapeMask, rng, cfg: CorpusConfig) -> dict:
    """New primitive whose bounding box spans a sampled fraction of the current one.

    It is centred on a random set pixel of the current shape so the two overlap.
    """
    prim = sample_primitive(rng, cfg)
    raw = rasterize(make_primitive(prim["kind"], prim["params"]), mask.resolution)
    (lo, hi), (plo, phi) = _bbox(mask), _bbox(raw)
    frac = _f(rng.uniform(*cfg.fraction_range))
    s = frac * float(max(hi - lo)) / float(max(phi - plo))
    pts = mask.set_centers()
    anchor = pts[rng.integers(len(pts))]
    pc = (plo + phi) / 2
    offset = [float(anchor[0] - s * pc[0]), float(anchor[1] - s * pc[1])]
    return {**prim, "fit": {"scale": s, "offset": offset, "fraction": frac}}


# -------------------------------------------------------------------- replay

def primitive_region(spec: dict) -> rg.Region:
    reg = make_primitive(spec["kind"], spec["params"])
    fit = spec.get("fit")
    if fit is not None:
        s = fit["scale"]
        reg = rg.Affine(reg, ((s, 0.0), (0.0, s)), tuple(fit["offset"]))
    return reg


def apply_step(mask: ShapeMask, step: dict, allow_empty: bool = False) -> ShapeMask:
    op = step["op"]
    if op in BINARY:
        operand = rasterize(primitive_region(step["operand"]), mask.resolution)
        return apply_binary(mask, operand, op, allow_empty=allow_empty)
    return apply_unary(mask, op, step["params"])


def normalize_params(mask: ShapeMask) -> dict:
    """Centroid shift and max-extent scale that put the shape snugly in the unit disk."""
    pts = mask.set_centers()
    c = pts.mean(axis=0)
    s = float(np.sqrt(((pts - c) ** 2).sum(axis=1).max()))
    s = max(s, 1.0 / mask.resolution)
    return {"scale": 1.0 / s, "offset": [float(-c[0] / s), float(-c[1] / s)]}


def apply_normalize(mask: ShapeMask, norm: dict) -> ShapeMask:
    k = norm["scale"]
    reg = rg.Affine(mask.region, ((k, 0.0), (0.0, k)), tuple(norm["offset"]))
    return rasterize(reg, mask.resolution)


def replay(recipe: ShapeRecipe, resolution: int = DEFAULT_RESOLUTION, normalized: bool = True) -> ShapeMask:
    """Rebuild the unit-disk geometry of a recipe; bit-identical to generation."""
    mask = rasterize(primitive_region(recipe.start), resolution)
    for step in recipe.steps:
        mask = apply_step(mask, step)
    return apply_normalize(mask, recipe.normalize) if normalized else mask


def replay_grounded(recipe: ShapeRecipe, resolution: int = DEFAULT_RESOLUTION) -> GroundedShape:
    return GroundedShape(replay(recipe, resolution), Pose.from_dict(recipe.pose))


# ---------------------------------------------------------------- generation

def entry_rng(seed: int, depth: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, depth, index]))


def _binary_floor(depth: int, cfg: CorpusConfig) -> int:
    return -(-depth // cfg.binary_divisor)


def sample_pose(rng, cfg: CorpusConfig) -> Pose:
    x0, y0, x1, y1 = cfg.world_bounds
    s = _f(rng.uniform(*cfg.pose_scale_range))
    b = [_f(rng.uniform(x0 + s, x1 - s)), _f(rng.uniform(y0 + s, y1 - s))]
    return Pose.from_parts(s * np.eye(2), b, cfg.world_bounds)


def _try_shape(depth: int, rng, cfg: CorpusConfig):
    res = cfg.resolution
    min_px = cfg.min_area_fraction * math.pi * (res / 2) ** 2
    start = sample_primitive(rng, cfg)
    mask = rasterize(primitive_region(start), res)
    raws = [mask]
    forced = set(rng.choice(depth, size=_binary_floor(depth, cfg), replace=False).tolist())
    steps = []
    for i in range(depth):
        for _ in range(cfg.max_step_retries):
            op = BINARY[rng.integers(len(BINARY))] if i in forced else OPERATORS[rng.integers(len(OPERATORS))]
            if op in BINARY:
                step = {"op": op, "operand": _sample_operand(mask, rng, cfg)}
            else:
                step = {"op": op, "params": _sample_unary(op, mask, rng, cfg)}
            try:
                nxt = apply_step(mask, step, allow_empty=True)
            except DegenerateShapeError:
                continue
            if nxt.pixels.sum() < min_px or nxt.same_pixels(mask):
                continue
            lo, hi = cfg.step_iou_range
            if not lo <= iou(mask, nxt) <= hi:
                continue
            if op in BINARY:
                raws.append(rasterize(primitive_region(step["operand"]), res))
                if op == "convex_hull":
                    hull = hull_region(mask.with_pixels(mask.pixels | raws[-1].pixels))
                    step["hull_vertices"] = [list(v) for v in hull.vertices] if hull is not None else []
            steps.append(step)
            mask = nxt
            break
        else:
            return None
    norm = normalize_params(mask)
    geom = apply_normalize(mask, norm)
    if geom.degenerate:
        return None
    if depth >= 2 and any(geom.same_pixels(r) or mask.same_pixels(r) for r in raws):
        return None
    return start, steps, norm, geom


def generate_shape(depth: int, rng: np.random.Generator, config: CorpusConfig | None = None,
                   seed: tuple = ()) -> tuple[ShapeRecipe, GroundedShape]:
    """Random primitive followed by ``depth`` random operators, then an independent pose.

    At least ceil(depth / binary_divisor) steps are binary.  A step producing
    an empty, tiny or unchanged mask is redrawn, as is one whose IoU with the
    previous mask falls outside ``step_iou_range`` (each step modifies the shape
    rather than replacing it).  A shape whose steps keep failing, or that ends
    equal to one of its raw primitives, is redrawn whole.
    """
    cfg = CorpusConfig() if config is None else config
    if depth < 1:
        raise DomainError("depth must be at least 1")
    for _ in range(cfg.max_shape_retries):
        out = _try_shape(depth, rng, cfg)
        if out is not None:
            break
    else:
        raise GenerationError(f"no valid depth-{depth} shape in {cfg.max_shape_retries} attempts")
    start, steps, norm, geom = out
    pose = sample_pose(rng, cfg)
    recipe = ShapeRecipe(depth, tuple(seed), start, steps, norm, pose.to_dict())
    return recipe, GroundedShape(geom, pose)


def generate_corpus(depths=range(1, 11), per_depth: int = 100, seed: int = 0,
                    config: CorpusConfig | None = None) -> Corpus:
    """Deterministic corpus; entry (depth, i) draws from its own seed sequence."""
    cfg = CorpusConfig() if config is None else config
    if per_depth < 1:
        raise DomainError("per_depth must be at least 1")
    entries = []
    for d in depths:
        for i in range(per_depth):
            try:
                recipe, shape = generate_shape(d, entry_rng(seed, d, i), cfg, (seed, d, i))
            except GenerationError as exc:
                raise GenerationError(f"entry depth={d} index={i}: {exc}") from exc
            entries.append(CorpusEntry(f"d{d:02d}_{i:04d}", recipe, shape))
    return Corpus(entries, seed, cfg)


# -------------------------------------------------------------- augmentation

def _jitter_leaf(rng, acfg: AugmentConfig):
    def fn(leaf):
        if isinstance(leaf, rg.Polygon):
            v = np.asarray(leaf.vertices) + rng.normal(0.0, acfg.jitter_sigma, size=(len(leaf.vertices), 2))
            return rg.Polygon(tuple(map(tuple, v.tolist())))
        if isinstance(leaf, rg.Ellipse):
            ka, kb = 1 + rng.uniform(-acfg.axis_jitter, acfg.axis_jitter, size=2)
            return rg.Ellipse(leaf.cx, leaf.cy, leaf.a * ka, leaf.b * kb, leaf.angle)
        if isinstance(leaf, rg.Sector):
            k = 1 + rng.uniform(-acfg.axis_jitter, acfg.axis_jitter)
            d = rng.uniform(-acfg.axis_jitter, acfg.axis_jitter)
            return rg.Sector(leaf.cx, leaf.cy, leaf.radius * k, leaf.start + d, leaf.span)
        return leaf
    return fn


def _elastic_field(rng, n: int, amplitude: float):
    knots = np.linspace(-1.0, 1.0, n)
    dx = rng.uniform(-amplitude, amplitude, size=(n, n))
    dy = rng.uniform(-amplitude, amplitude, size=(n, n))
    k = min(3, n - 1)
    sx = RectBivariateSpline(knots, knots, dx, kx=k, ky=k)
    sy = RectBivariateSpline(knots, knots, dy, kx=k, ky=k)

    def disp(x, y):
        xc = np.clip(x, -1, 1)
        yc = np.clip(y, -1, 1)
        ux = np.clip(sx.ev(xc, yc), -amplitude, amplitude)
        uy = np.clip(sy.ev(xc, yc), -amplitude, amplitude)
        return ux, uy

    return disp


def augment(mask: ShapeMask, kinds=AUGMENTATIONS, rng: np.random.Generator | None = None,
            config: AugmentConfig | None = None) -> ShapeMask:
    """Seeded perturbation of a unit-disk shape, re-clipped to the disk.

    Applied in the order vertex jitter, elastic, shearing, rotation.  Jitter
    moves polygon vertices and perturbs ellipse axes and sector radii of the
    shape's region tree; masks without a region get a fine elastic field
    instead.  Rotation is about the origin.
    """
    if mask.frame != UNIT_DISK:
        raise FrameError("augment expects a UNIT_DISK mask")
    kinds = tuple(kinds)
    unknown = set(kinds) - set(AUGMENTATIONS)
    if unknown:
        raise DomainError(f"unknown augmentations {sorted(unknown)}")
    if not kinds:
        return mask
    acfg = AugmentConfig() if config is None else config
    rng = np.random.default_rng() if rng is None else rng
    reg = mask.region
    if reg is None:
        reg = _PixelRegion(mask)
    if "vertex_jitter" in kinds:
        if isinstance(reg, _PixelRegion):
            reg = rg.Warp(reg, _elastic_field(rng, 9, acfg.jitter_sigma))
        else:
            reg = reg.map_leaves(_jitter_leaf(rng, acfg))
    if "elastic" in kinds:
        reg = rg.Warp(reg, _elastic_field(rng, acfg.elastic_grid, acfg.elastic_amplitude))
    if "shearing" in kinds:
        kx, ky = rng.uniform(-acfg.max_shear, acfg.max_shear, size=2)
        reg = rg.Affine(reg, ((1.0, float(kx)), (float(ky), 1.0)), (0.0, 0.0))
    if "rotation" in kinds:
        a = rng.uniform(-acfg.max_rotation, acfg.max_rotation)
        c, s = math.cos(a), math.sin(a)
        reg = rg.Affine(reg, ((c, -s), (s, c)), (0.0, 0.0))
    out = rasterize(reg, mask.resolution)
    if out.degenerate:
        raise DegenerateShapeError("augmentation left no pixel inside the disk")
    return out


class _PixelRegion(rg.Region):
    """Nearest-pixel membership of a mask, so raster-only shapes can be warped."""

    def __init__(self, mask: ShapeMask):
        self.mask = mask

    def contains(self, x, y):
        m = self.mask
        x0, y0, _, _ = m.bounds
        hx, hy = m.pixel_size
        ix = np.rint((x - x0) / hx - 0.5).astype(np.int64)
        iy = np.rint((y - y0) / hy - 0.5).astype(np.int64)
        ok = (ix >= 0) & (ix < m.resolution) & (iy >= 0) & (iy < m.resolution)
        out = np.zeros(np.shape(x), dtype=bool)
        out[ok] = m.pixels[iy[ok], ix[ok]]
        return out

    def map_leaves(self, fn):
        return self


# ----------------------------------------------------------------------- i/o

def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def write_corpus(corpus: Corpus, root) -> Path:
    """Write manifest.json plus recipes/, masks/ (PGM + sidecar) and poses/ per entry."""
    root = Path(root)
    for sub in ("recipes", "masks", "poses"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for e in corpus.entries:
        _atomic_text(root / "recipes" / f"{e.id}.json", json.dumps(e.recipe.to_dict(), indent=1))
        write_pgm(e.shape.geometry, root / "masks" / f"{e.id}.pgm")
        _atomic_text(root / "poses" / f"{e.id}.json", json.dumps(e.shape.pose.to_dict(), indent=1))
    _atomic_text(root / "manifest.json", json.dumps(corpus.manifest, indent=1))
    return root


def load_corpus(root, replay_recipes: bool = False) -> Corpus:
    """Read a corpus directory; masks come from the graymaps unless ``replay_recipes``."""
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{root}: no manifest.json") from exc
    if manifest.get("format_version") != CORPUS_FORMAT_VERSION:
        raise FormatError(f"{root}: unsupported corpus version {manifest.get('format_version')}")
    cfg = CorpusConfig.from_dict(manifest["config"])
    entries = []
    for eid in manifest["entries"]:
        recipe = ShapeRecipe.from_dict(json.loads((root / "recipes" / f"{eid}.json").read_text()))
        pose = Pose.from_dict(json.loads((root / "poses" / f"{eid}.json").read_text()))
        geom = replay(recipe, cfg.resolution) if replay_recipes else read_pgm(root / "masks" / f"{eid}.pgm")
        entries.append(CorpusEntry(eid, recipe, GroundedShape(geom, pose)))
    return Corpus(entries, manifest["seed"], cfg)


def world_mask(shape: GroundedShape, resolution: int = DEFAULT_RESOLUTION) -> ShapeMask:
    return apply_pose(shape, resolution)
