"""Evaluation harness: reconstruction curves, discriminability, retrieval, pose isometry, sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.metrics import pairwise_distances, silhouette_score

from .corpus import AUGMENTATIONS, AugmentConfig, augment
from .errors import DomainError
from .geometry import (COMPLEX2REAL, DEFAULT_LAMBDA, MAGNITUDE, GeometryCodec, GeometryEncoding, encode_mask,
                       flatten_real, freqprop, freqprop_invert, order_for_length, reconstruct, reconstruction_mse,
                       unflatten)
from .joint import JointCodec, encode_joint, flatten_joint
from .posecodec import PoseCodec, field_distance
from .shapes import DEFAULT_WORLD_BOUNDS, GroundedShape, Pose, ShapeMask, to_polar
from .zernike import cached_table, index_set

STANDARD_LENGTHS = (64, 128, 256, 512, 1024, 2048, 4096)
# commonly quoted length -> basis count pairs; they do not match order_for_length and are kept for comparison
REFERENCE_BASIS_COUNTS = {256: 22, 512: 31, 1024: 44, 2048: 63, 4096: 91}
THRESHOLDS = {"knn_accuracy": 0.95, "pose_pearson": 0.999, "augment_mean_iou": 0.6}


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.ndarray, tuple, range)):
        return list(v)
    return str(v)


_BOUNDED = {"silhouette": (-1.0, 1.0), "map": (0.0, 1.0), "pearson_r": (-1.0, 1.0), "knn_accuracy": (0.0, 1.0)}


@dataclass
class MetricReport:
    """Rows of (condition, metric, value) with a provenance hash over the parameters."""

    experiment: str
    parameters: dict
    rows: list = field(default_factory=list)
    corpus_seed: int | None = None
    notes: list = field(default_factory=list)

    @property
    def provenance(self) -> dict:
        return {"corpus_seed": self.corpus_seed, "config_hash": config_hash(self.parameters)}

    def add(self, condition: str, metric: str, value: float) -> None:
        value = float(value)
        lo, hi = _BOUNDED.get(metric.split(":")[0], (-math.inf, math.inf))
        if not (lo - 1e-12 <= value <= hi + 1e-12):
            raise DomainError(f"{metric}={value} outside [{lo}, {hi}]")
        self.rows.append((str(condition), metric, value))

    def value(self, condition: str, metric: str) -> float:
        for c, m, v in self.rows:
            if c == str(condition) and m == metric:
                return v
        raise KeyError((condition, metric))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "parameters": self.parameters, "provenance": self.provenance,
                "notes": self.notes, "rows": [list(r) for r in self.rows]}

    def write(self, directory) -> Path:
        """CSV of rows plus a JSON run-metadata document, both written atomically."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{self.experiment}.csv"
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["experiment", "condition", "metric", "value", "config_hash"])
            h = self.provenance["config_hash"]
            for c, m, v in self.rows:
                w.writerow([self.experiment, c, m, repr(v), h])
        tmp.replace(path)
        meta = d / f"{self.experiment}.meta.json"
        tmp = meta.with_name(meta.name + ".tmp")
        tmp.write_text(json.dumps({k: v for k, v in self.to_dict().items() if k != "rows"},
                                  indent=1, default=_jsonable))
        tmp.replace(meta)
        return path


def export_encodings(X: np.ndarray, labels, path) -> None:
    """One CSV row per encoding: label then values."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"v{i}" for i in range(np.shape(X)[1])])
        for lab, row in zip(labels, np.asarray(X)):
            w.writerow([lab] + [repr(float(v)) for v in row])
    tmp.replace(path)


# ------------------------------------------------------------ reconstruction

def _restrict(enc: GeometryEncoding, N: int) -> GeometryEncoding:
    """Coefficients of the sub-basis index_set(N, N) of a larger encoding."""
    keep = [enc.coefficient(i.n, i.m) for i in index_set(N, N)]
    return GeometryEncoding(np.array(keep, dtype=complex), N, N, enc.grid_key)


def reconstruction_errors(mask: ShapeMask, lengths=STANDARD_LENGTHS, lambda_r: float = DEFAULT_LAMBDA,
                          lambda_a: float = DEFAULT_LAMBDA, grid=None) -> dict:
    """MSE between the source field and the decoded reconstruction for each length.

    Each length runs the full pipeline: propagate, flatten to L, unflatten,
    invert propagation, reconstruct.
    """
    lengths = list(lengths)
    if lengths != sorted(lengths):
        raise DomainError("lengths must be ascending")
    N_max = order_for_length(lengths[-1], COMPLEX2REAL)
    big = cached_table(N_max, N_max, grid)
    source = to_polar(mask, big.grid)
    full = encode_mask(mask, big)
    out = {}
    for L in lengths:
        N = order_for_length(L, COMPLEX2REAL)
        enc = _restrict(full, N)
        if lambda_r or lambda_a:
            enc = freqprop(enc, lambda_r, lambda_a)
        dec = unflatten(flatten_real(enc, L, COMPLEX2REAL))
        if dec.freqprop is not None:
            dec = freqprop_invert(dec)
        out[L] = reconstruction_mse(reconstruct(dec, cached_table(N, N, grid)), source)
    return out


def reconstruction_curve(entries, lengths=STANDARD_LENGTHS, lambda_r: float = DEFAULT_LAMBDA,
                         lambda_a: float = DEFAULT_LAMBDA, corpus_seed: int | None = None) -> MetricReport:
    """Mean MSE per (depth, length) over corpus entries."""
    rep = MetricReport("reconstruction_curve",
                       {"lengths": list(lengths), "lambda_r": lambda_r, "lambda_a": lambda_a,
                        "entries": [e.id for e in entries]}, corpus_seed=corpus_seed)
    per: dict = {}
    for e in entries:
        errs = reconstruction_errors(e.shape.geometry, lengths, lambda_r, lambda_a)
        for L, v in errs.items():
            per.setdefault((e.recipe.depth, L), []).append(v)
    for (d, L), vals in sorted(per.items()):
        rep.add(f"depth={d},L={L}", "mse", np.mean(vals))
    return rep


# ----------------------------------------------------------- discrimination

def knn_accuracy(X, labels, metric: str = "cosine") -> float:
    """Leave-one-out 1-NN accuracy; tied neighbours count fractionally."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels)
    D = pairwise_distances(X, metric=metric)
    np.fill_diagonal(D, np.inf)
    acc = 0.0
    for i in range(len(y)):
        d = D[i]
        nearest = np.flatnonzero(np.isclose(d, d.min(), rtol=0, atol=1e-12))
        acc += np.mean(y[nearest] == y[i])
    return acc / len(y)


def _check_labels(labels, min_per_class: int = 2):
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DomainError("need at least two classes")
    if counts.min() < min_per_class:
        raise DomainError(f"every class needs at least {min_per_class} items")
    return y


def discriminability(X, labels, metric: str = "cosine", experiment: str = "discriminability",
                     parameters: dict | None = None) -> MetricReport:
    """Leave-one-out 1-NN accuracy and silhouette score."""
    y = _check_labels(labels)
    rep = MetricReport(experiment, {"metric": metric, "n": len(y), **(parameters or {})})
    rep.add("all", "knn_accuracy", knn_accuracy(X, y, metric))
    rep.add("all", "silhouette", silhouette(X, y, metric))
    return rep


def silhouette(X, labels, metric: str = "cosine") -> float:
    X = np.asarray(X, dtype=float)
    D = pairwise_distances(X, metric=metric)
    D = np.maximum((D + D.T) / 2, 0.0)
    np.fill_diagonal(D, 0.0)
    return float(silhouette_score(D, labels, metric="precomputed"))


def average_precision(relevant: np.ndarray) -> float:
    """AP of a ranked boolean relevance list."""
    hits = np.flatnonzero(relevant)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def retrieval_map(X, labels, metric: str = "cosine") -> MetricReport:
    """Mean AP over queries, each ranking all other items by similarity."""
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise DomainError("need at least two classes")
    D = pairwise_distances(np.asarray(X, dtype=float), metric=metric)
    rep = MetricReport("retrieval_map", {"metric": metric, "n": len(y)})
    aps = []
    for i in range(len(y)):
        others = np.delete(np.arange(len(y)), i)
        if not np.any(y[others] == y[i]):
            rep.notes.append(f"query {i} skipped: its class has one member")
            continue
        order = others[np.argsort(D[i, others], kind="stable")]
        aps.append(average_precision(y[order] == y[i]))
    rep.add("all", "map", np.mean(aps))
    return rep


# ---------------------------------------------------------------------- pose

def random_pose_vectors(n: int, K: int, rng) -> np.ndarray:
    P = rng.uniform(-1.0, 1.0, size=(n, K))
    return P / np.linalg.norm(P, axis=1, keepdims=True)


def pose_isometry(pairs, codec: PoseCodec | None = None) -> MetricReport:
    """Pearson r between pose-encoding distance and pose-field L2 distance."""
    codec = PoseCodec() if codec is None else codec
    pairs = list(pairs)
    if len(pairs) < 50:
        raise DomainError("pose isometry needs at least 50 pairs")
    enc_d, fld_d = [], []
    for p, q in pairs:
        enc_d.append(np.linalg.norm(codec.encode_vector(p).values - codec.encode_vector(q).values))
        fld_d.append(field_distance(p, q, codec.bank, codec.m_p))
    r = float(np.corrcoef(enc_d, fld_d)[0, 1])
    rep = MetricReport("pose_isometry", {"L": codec.L, "K": codec.K, "m_p": codec.m_p, "seed": codec.seed,
                                         "pairs": len(pairs)})
    rep.add("all", "pearson_r", r)
    rep.add("all", "distance_ratio", np.mean(np.asarray(enc_d) / np.maximum(fld_d, 1e-300)))
    return rep


# -------------------------------------------------------------------- sweeps

def augmented_set(masks, n_aug: int, seed: int = 0, kinds=AUGMENTATIONS,
                  config: AugmentConfig | None = None):
    """(augmented masks, labels): n_aug seeded augmentations per source mask."""
    out, labels = [], []
    for k, m in enumerate(masks):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        for _ in range(n_aug):
            out.append(augment(m, kinds, rng, config))
            labels.append(k)
    return out, np.array(labels)


def encode_all(masks, codec: GeometryCodec) -> np.ndarray:
    return np.array([codec.encode(m).values for m in masks])


def lambda_sweep(masks, labels, lambdas, L: int = 512, mode: str = MAGNITUDE,
                 allow_over_range: bool = True) -> MetricReport:
    """1-NN accuracy and silhouette of FreqProp-enriched encodings per lambda (radial = angular)."""
    rep = MetricReport("lambda_sweep", {"lambdas": list(lambdas), "L": L, "mode": mode, "n": len(masks)})
    base = GeometryCodec(L, mode, 0.0, 0.0)
    raw = [base.encode_complex(m) for m in masks]
    for lam in lambdas:
        encs = [freqprop(z, lam, lam, allow_over_range) if lam else z for z in raw]
        X = np.array([flatten_real(z, L, mode).values for z in encs])
        rep.add(f"lambda={lam:g}", "knn_accuracy", knn_accuracy(X, labels))
        rep.add(f"lambda={lam:g}", "silhouette", silhouette(X, labels))
    return rep


def addition_baseline(zg: np.ndarray, zp: np.ndarray, alpha: float) -> np.ndarray:
    """Z_G + alpha * Z_P with the pose code zero-padded or truncated to len(Z_G)."""
    zp = np.resize(np.concatenate([zp, np.zeros(max(0, len(zg) - len(zp)))]), len(zg))
    return zg + alpha * zp


def concat_baseline(zg: np.ndarray, zp: np.ndarray, L: int | None = None) -> np.ndarray:
    """[Z_G, Z_P]; with L, each half is truncated so the total is L."""
    if L is None:
        return np.concatenate([zg, zp])
    g = (L + 1) // 2
    return np.concatenate([zg[:g], np.resize(np.concatenate([zp, np.zeros(L)]), L - g)])


def quadrant_grid(geometries, centers=((-25, 25), (25, 25), (-25, -25), (25, -25)), scale: float = 10.0,
                  jitter: float = 0.0, seed: int = 0, world_bounds=DEFAULT_WORLD_BOUNDS):
    """Every geometry placed in every region: (shapes, geometry labels, region labels)."""
    rng = np.random.default_rng(seed)
    shapes, gl, pl = [], [], []
    for gi, g in enumerate(geometries):
        for ri, c in enumerate(centers):
            b = np.asarray(c, dtype=float) + rng.uniform(-jitter, jitter, size=2)
            shapes.append(GroundedShape(g, Pose.from_parts(scale * np.eye(2), b, world_bounds)))
            gl.append(gi)
            pl.append(ri)
    return shapes, np.array(gl), np.array(pl)


def emphasis_sweep(shapes, geometry_labels, pose_labels, betas, L: int = 512, alpha: float = 1.0,
                   seed: int = 0) -> MetricReport:
    """Geometry- and pose-label 1-NN accuracy of the joint code per beta, plus the two baselines."""
    rep = MetricReport("emphasis_sweep", {"betas": list(betas), "L": L, "alpha": alpha, "seed": seed,
                                          "n": len(shapes)})
    jc = JointCodec(L=L, seed=seed)
    zs = [jc.geometry.encode_complex(s.geometry) for s in shapes]
    As = [jc.pose_coeffs(s.pose.flattened) for s in shapes]
    for beta in betas:
        X = np.array([flatten_joint(encode_joint(z, a, beta, tuple(jc.couplings), jc.scale), L).values
                      for z, a in zip(zs, As)])
        rep.add(f"beta={beta:g}", "knn_accuracy:geometry", knn_accuracy(X, geometry_labels))
        rep.add(f"beta={beta:g}", "knn_accuracy:pose", knn_accuracy(X, pose_labels))
    pc = PoseCodec(L=L, seed=seed)
    G = np.array([flatten_real(z, L, COMPLEX2REAL).values for z in zs])
    P = np.array([pc.encode(s.pose).values for s in shapes])
    for name, X in (("addition", np.array([addition_baseline(g, p, alpha) for g, p in zip(G, P)])),
                    ("concat", np.array([concat_baseline(g, p, L) for g, p in zip(G, P)]))):
        rep.add(name, "knn_accuracy:geometry", knn_accuracy(X, geometry_labels))
        rep.add(name, "knn_accuracy:pose", knn_accuracy(X, pose_labels))
    return rep
