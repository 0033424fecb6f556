"""Geometry codec: Zernike projection, frequency propagation, real flattening, reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, IrreversibleError, ShapeMismatchError, StateError
from .shapes import DEFAULT_RESOLUTION, UNIT_DISK, PolarField, ShapeMask, pixel_centers, to_polar
from .zernike import BasisTable, PolarGrid, ZernikeIndex, cached_table, check_same_grid, count_nonneg, index_set

COMPLEX2REAL = "complex2real"
MAGNITUDE = "magnitude"
MODES = (COMPLEX2REAL, MAGNITUDE)
LAYOUT_VERSION = 1
DEFAULT_LAMBDA = 0.6
DEFAULT_THRESHOLD = 0.2
DEFAULT_LENGTH = 512
PROPAGATION_ORDER = ("radial", "angular")


@dataclass(frozen=True)
class FreqPropMeta:
    lambda_r: float
    lambda_a: float
    order: tuple = PROPAGATION_ORDER


@dataclass(frozen=True, eq=False)
class GeometryEncoding:
    """Complex coefficients z_n^m over ``index_set(N, M)`` in canonical order.

    ``retained`` marks coefficients that survived a truncating flatten; it is
    None when every coefficient is known.
    """

    coefficients: np.ndarray
    N: int
    M: int
    grid_key: str = ""
    freqprop: FreqPropMeta | None = None
    retained: np.ndarray | None = None

    def __post_init__(self):
        n = count_nonneg(self.N, self.M) * 2 - (self.N // 2 + 1)
        if self.coefficients.shape != (n,):
            raise ShapeMismatchError(f"expected {n} coefficients for N={self.N}, M={self.M}")

    @property
    def indices(self) -> list[ZernikeIndex]:
        return index_set(self.N, self.M)

    @property
    def basis_meta(self) -> tuple:
        return (self.N, self.M, self.grid_key)

    def coefficient(self, n: int, m: int) -> complex:
        return complex(self.coefficients[_positions(self.N, self.M)[(n, m)]])


@lru_cache(maxsize=64)
def _positions(N: int, M: int) -> dict:
    return {(i.n, i.m): k for k, i in enumerate(index_set(N, M))}


@lru_cache(maxsize=64)
def _lattice(N: int, M: int):
    """Canonical positions of the m >= 0 indices and their (n, m) lattice cells."""
    idx = index_set(N, M)
    pos = np.array([k for k, i in enumerate(idx) if i.m >= 0])
    ns = np.array([idx[k].n for k in pos])
    ms = np.array([idx[k].m for k in pos])
    neg = np.array([k for k, i in enumerate(idx) if i.m < 0], dtype=int)
    pmap = _positions(N, M)
    mirror = np.array([pmap[(idx[k].n, -idx[k].m)] for k in neg], dtype=int)
    valid = np.zeros((N + 1, M + 1), dtype=bool)
    valid[ns, ms] = True
    return pos, ns, ms, neg, mirror, valid


def _to_lattice(coeffs: np.ndarray, N: int, M: int) -> np.ndarray:
    pos, ns, ms, *_ = _lattice(N, M)
    Z = np.zeros((N + 1, M + 1), dtype=complex)
    Z[ns, ms] = coeffs[pos]
    return Z


def _from_lattice(Z: np.ndarray, N: int, M: int) -> np.ndarray:
    pos, ns, ms, neg, mirror, _ = _lattice(N, M)
    out = np.empty(len(pos) + len(neg), dtype=complex)
    out[pos] = Z[ns, ms]
    out[neg] = np.conj(out[mirror])
    return out


def mirror_negative(coeffs: np.ndarray, N: int, M: int) -> np.ndarray:
    """Overwrite m < 0 coefficients with the conjugates of their m > 0 partners."""
    out = np.array(coeffs, dtype=complex)
    _, _, _, neg, mirror, _ = _lattice(N, M)
    out[neg] = np.conj(out[mirror])
    return out


# -------------------------------------------------------------------- encoding

def encode_geometry(field: PolarField, table: BasisTable) -> GeometryEncoding:
    """z_n^m = (n+1)/pi * <f, V_n^m> by quadrature over the table's grid."""
    check_same_grid(field.grid, table.grid)
    raw = table.project(field.values)
    z = raw * ((table.n_array + 1) / np.pi)
    return GeometryEncoding(z, table.N, table.M, table.grid.key)


def encode_mask(mask: ShapeMask, table: BasisTable) -> GeometryEncoding:
    if mask.frame != UNIT_DISK:
        raise DomainError("geometry encoding expects a UNIT_DISK mask")
    return encode_geometry(to_polar(mask, table.grid), table)


def _check_lambda(lam: float, name: str, allow_over_range: bool) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0 or (lam >= 1 and not allow_over_range):
        raise DomainError(f"{name}={lam} outside [0, 1); pass allow_over_range=True to force it")
    return lam


def freqprop(enc: GeometryEncoding, lambda_r: float = DEFAULT_LAMBDA, lambda_a: float = DEFAULT_LAMBDA,
             allow_over_range: bool = False) -> GeometryEncoding:
    """Cascade lambda-scaled copies of each coefficient into its higher neighbours.

    Radial pass first (z_n^m += lambda_r z_{n-2}^m, ascending n), then the
    angular pass (z_n^m += lambda_a z_n^{m-2}, ascending m), both over m >= 0;
    negative orders are re-mirrored afterwards.
    """
    if enc.freqprop is not None:
        raise StateError("encoding is already propagated")
    lr = _check_lambda(lambda_r, "lambda_r", allow_over_range)
    la = _check_lambda(lambda_a, "lambda_a", allow_over_range)
    N, M = enc.N, enc.M
    valid = _lattice(N, M)[5]
    Z = _to_lattice(enc.coefficients, N, M)
    if lr:
        for n in range(2, N + 1):
            Z[n] += lr * Z[n - 2]
    if la:
        for m in range(2, M + 1):
            Z[:, m] += la * Z[:, m - 2] * valid[:, m]
    out = _from_lattice(Z, N, M)
    if enc.retained is not None:
        out = np.where(enc.retained, out, 0)
    return replace(enc, coefficients=out, freqprop=FreqPropMeta(lr, la))


def freqprop_invert(enc: GeometryEncoding) -> GeometryEncoding:
    """Undo :func:`freqprop`: angular pass then radial pass, each z -= lambda * z'_lower.

    Lower neighbours precede their targets in canonical order, so a prefix
    truncation keeps every value the inversion of a retained coefficient needs.
    """
    meta = enc.freqprop
    if meta is None:
        raise StateError("encoding carries no propagation record")
    N, M = enc.N, enc.M
    valid = _lattice(N, M)[5]
    Y = _to_lattice(enc.coefficients, N, M)
    if meta.lambda_a:
        X = Y.copy()
        X[:, 2:] -= meta.lambda_a * Y[:, :-2] * valid[:, 2:]
        Y = X
    if meta.lambda_r:
        X = Y.copy()
        X[2:] -= meta.lambda_r * Y[:-2]
        Y = X
    out = _from_lattice(Y, N, M)
    if enc.retained is not None:
        out = np.where(enc.retained, out, 0)
    return replace(enc, coefficients=out, freqprop=None)


# ------------------------------------------------------------------ flattening

def flat_length(N: int, mode: str) -> int:
    """Untruncated real length for a full N = M basis."""
    k = count_nonneg(N, N)
    return 2 * k if mode == COMPLEX2REAL else k


def order_for_length(L: int, mode: str = COMPLEX2REAL) -> int:
    """Smallest N (with M = N) whose m >= 0 flattening fills L values."""
    _check_mode(mode)
    if L < 2:
        raise DomainError("encoding length must be at least 2")
    N = 0
    while flat_length(N, mode) < L:
        N += 1
    return N


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise DomainError(f"unknown flatten mode {mode!r}; expected one of {MODES}")


@dataclass(frozen=True, eq=False)
class RealEncoding:
    values: np.ndarray
    mode: str
    N: int
    M: int
    lambda_r: float = 0.0
    lambda_a: float = 0.0
    propagated: bool = False
    grid_key: str = ""
    layout_version: int = LAYOUT_VERSION

    @property
    def L(self) -> int:
        return len(self.values)

    @property
    def layout(self) -> list[tuple]:
        return layout_for(self.mode, self.N, self.M, self.L)


def layout_for(mode: str, N: int, M: int, L: int) -> list[tuple]:
    """Entry labels of a flattened vector; ``None`` marks zero padding."""
    _check_mode(mode)
    nonneg = [i for i in index_set(N, M) if i.m >= 0]
    if mode == COMPLEX2REAL:
        full = [(i, part) for i in nonneg for part in ("real", "imag")]
    else:
        full = [(i, "magnitude") for i in nonneg]
    return (full + [None] * max(0, L - len(full)))[:L]


def flatten_real(enc: GeometryEncoding, L: int, mode: str = COMPLEX2REAL) -> RealEncoding:
    """Real vector of exactly L entries from the m >= 0 coefficients in canonical order.

    COMPLEX2REAL interleaves real and imaginary parts per coefficient;
    MAGNITUDE emits moduli.  Longer streams are truncated, shorter ones
    zero-padded.
    """
    _check_mode(mode)
    if L < 2:
        raise DomainError("encoding length must be at least 2")
    pos = _lattice(enc.N, enc.M)[0]
    z = enc.coefficients[pos]
    if mode == COMPLEX2REAL:
        full = np.stack([z.real, z.imag], axis=1).ravel()
    else:
        full = np.abs(z)
    vals = np.zeros(L)
    k = min(L, full.size)
    vals[:k] = full[:k]
    meta = enc.freqprop
    return RealEncoding(vals, mode, enc.N, enc.M,
                        meta.lambda_r if meta else 0.0, meta.lambda_a if meta else 0.0,
                        meta is not None, enc.grid_key)


def unflatten(real: RealEncoding) -> GeometryEncoding:
    """Rebuild complex coefficients from a COMPLEX2REAL vector.

    A coefficient counts as retained only when both of its parts survived
    truncation; the rest are zero and flagged in ``retained``.
    """
    if real.mode != COMPLEX2REAL:
        raise IrreversibleError("MAGNITUDE encodings discard phase and cannot be unflattened")
    N, M = real.N, real.M
    pos = _lattice(N, M)[0]
    kept = min(real.L // 2, len(pos))
    z = np.zeros(len(pos), dtype=complex)
    pairs = real.values[: 2 * kept].reshape(kept, 2)
    z[:kept] = pairs[:, 0] + 1j * pairs[:, 1]
    coeffs = np.zeros(count_nonneg(N, M) * 2 - (N // 2 + 1), dtype=complex)
    coeffs[pos] = z
    coeffs = mirror_negative(coeffs, N, M)
    retained = None
    if kept < len(pos):
        flag = np.zeros(len(pos), dtype=bool)
        flag[:kept] = True
        retained = np.zeros(coeffs.shape, dtype=bool)
        retained[pos] = flag
        _, _, _, neg, mirror, _ = _lattice(N, M)
        retained[neg] = retained[mirror]
    meta = FreqPropMeta(real.lambda_r, real.lambda_a) if real.propagated else None
    return GeometryEncoding(coeffs, N, M, real.grid_key, meta, retained)


# -------------------------------------------------------------- reconstruction

def _check_table(enc: GeometryEncoding, table: BasisTable) -> None:
    if (enc.N, enc.M) != (table.N, table.M):
        raise ShapeMismatchError(f"encoding basis ({enc.N}, {enc.M}) differs from table ({table.N}, {table.M})")
    if enc.freqprop is not None:
        raise StateError("encoding is propagated; call freqprop_invert before reconstructing")


def reconstruct(enc: GeometryEncoding, table: BasisTable) -> PolarField:
    """Soft field Re(sum z_n^m V_n^m) on the table's grid."""
    _check_table(enc, table)
    return PolarField(table.synthesize(enc.coefficients).real, table.grid)


def reconstruct_mask(enc: GeometryEncoding, table: BasisTable, resolution: int = DEFAULT_RESOLUTION,
                     threshold: float = DEFAULT_THRESHOLD) -> ShapeMask:
    """Binarised reconstruction evaluated exactly at the pixel centres of a unit-disk mask."""
    _check_table(enc, table)
    x, y = pixel_centers(resolution, (-1.0, -1.0, 1.0, 1.0))
    inside = x * x + y * y <= 1.0
    r = np.sqrt(x[inside] ** 2 + y[inside] ** 2)
    t = np.arctan2(y[inside], x[inside])
    vals = table.evaluate(enc.coefficients, np.minimum(r, 1.0), t).real
    px = np.zeros((resolution, resolution), dtype=bool)
    px[inside] = vals >= threshold
    px.setflags(write=False)
    return ShapeMask(px, UNIT_DISK)


def binarize(field: PolarField, threshold: float = DEFAULT_THRESHOLD,
             resolution: int = DEFAULT_RESOLUTION) -> ShapeMask:
    """Threshold a polar field after resampling it onto a unit-disk pixel grid."""
    g = field.grid
    theta = g.angular_nodes
    # periodic padding in theta, clamped ends in r
    tt = np.concatenate([[theta[-1] - 2 * np.pi], theta, [theta[0] + 2 * np.pi]])
    vv = np.concatenate([field.values[:, -1:], field.values, field.values[:, :1]], axis=1)
    rr = np.concatenate([[0.0], g.radial_nodes, [1.0]])
    vv = np.concatenate([vv[:1], vv, vv[-1:]], axis=0)
    interp = RegularGridInterpolator((rr, tt), vv, bounds_error=False, fill_value=None)
    x, y = pixel_centers(resolution, (-1.0, -1.0, 1.0, 1.0))
    inside = x * x + y * y <= 1.0
    r = np.sqrt(x[inside] ** 2 + y[inside] ** 2)
    t = np.mod(np.arctan2(y[inside], x[inside]), 2 * np.pi)
    px = np.zeros((resolution, resolution), dtype=bool)
    px[inside] = interp(np.stack([r, t], axis=1)) >= threshold
    px.setflags(write=False)
    return ShapeMask(px, UNIT_DISK)


def reconstruction_mse(a: PolarField, b: PolarField) -> float:
    """Area-weighted mean squared difference over the unit disk."""
    check_same_grid(a.grid, b.grid)
    g = a.grid
    sq = ((a.values - b.values) ** 2).sum(axis=1) * g.angular_weight
    return float(np.dot(g.radial_weights, sq) / (g.radial_weights.sum() * 2 * np.pi))


# -------------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class GeometryCodec:
    """Mask -> real vector pipeline with fixed length, mode and propagation."""

    L: int = DEFAULT_LENGTH
    mode: str = COMPLEX2REAL
    lambda_r: float = DEFAULT_LAMBDA
    lambda_a: float = DEFAULT_LAMBDA
    grid: PolarGrid | None = None
    allow_over_range: bool = False

    @property
    def N(self) -> int:
        return order_for_length(self.L, self.mode)

    @property
    def table(self) -> BasisTable:
        return cached_table(self.N, self.N, self.grid)

    def encode_complex(self, mask: ShapeMask) -> GeometryEncoding:
        enc = encode_mask(mask, self.table)
        if self.lambda_r or self.lambda_a:
            enc = freqprop(enc, self.lambda_r, self.lambda_a, self.allow_over_range)
        return enc

    def encode(self, mask: ShapeMask) -> RealEncoding:
        return flatten_real(self.encode_complex(mask), self.L, self.mode)

    def decode(self, real: RealEncoding) -> GeometryEncoding:
        enc = unflatten(real)
        return freqprop_invert(enc) if enc.freqprop is not None else enc

    def reconstruct_mask(self, real: RealEncoding, resolution: int = DEFAULT_RESOLUTION,
                         threshold: float = DEFAULT_THRESHOLD) -> ShapeMask:
        enc = self.decode(real)
        return reconstruct_mask(enc, cached_table(enc.N, enc.M, self.grid), resolution, threshold)
