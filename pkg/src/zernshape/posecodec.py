"""Pose codec: a band-limited harmonic field carries the pose vector into one Zernike band."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConstructionError, DomainError, RecoveryError, ShapeMismatchError
from .shapes import DEFAULT_WORLD_BOUNDS, PolarField, Pose
from .zernike import PolarGrid, check_same_grid, polar_grid, radial_family

DEFAULT_BAND = 2
DEFAULT_K = 6
DEFAULT_SEED = 0
DEFAULT_POSE_LENGTH = 512
BANK_FORMAT_VERSION = 1

# bump parameter ranges for the raw windows
CENTER_RANGE = (0.15, 0.9)
WIDTH_RANGE = (0.05, 0.2)
MAX_REDRAWS = 50
DEPENDENCE_TOL = 1e-6


def pose_grid(n_pose: int, n_angular: int = 64) -> PolarGrid:
    """Gauss grid with enough radial nodes to integrate R_n against smooth windows up to ``n_pose``."""
    return polar_grid(max(256, n_pose + 8), n_angular, "gauss", 0.5)


@dataclass(frozen=True, eq=False)
class RadialWindowBank:
    """K radial windows, orthonormal under the r dr quadrature of ``grid``.

    ``params[k]`` lists the raw window's two bumps as (center, width) pairs.
    """

    K: int
    samples: np.ndarray
    seed: int
    params: tuple
    grid: PolarGrid

    def gram(self) -> np.ndarray:
        w = self.grid.radial_weights
        return (self.samples * w) @ self.samples.T

    def to_dict(self) -> dict:
        return {"format_version": BANK_FORMAT_VERSION, "K": self.K, "seed": self.seed,
                "params": [list(map(list, p)) for p in self.params], "grid": self.grid.to_dict()}


def _bumps(r: np.ndarray, params) -> np.ndarray:
    return sum(np.exp(-0.5 * ((r - c) / w) ** 2) for c, w in params)


def build_radial_windows(K: int = DEFAULT_K, grid: PolarGrid | None = None,
                         seed: int = DEFAULT_SEED) -> RadialWindowBank:
    """Seeded two-bump windows, orthonormalised by Gram-Schmidt under r dr.

    Each projection is applied twice to hold orthogonality at rounding level;
    a raw window that is nearly dependent on the earlier ones is redrawn.
    """
    grid = polar_grid(256, 64) if grid is None else grid
    if K < 1 or K > grid.n_radial:
        raise DomainError(f"K={K} must be in [1, {grid.n_radial}]")
    rng = np.random.default_rng(seed)
    r = grid.radial_nodes
    w = grid.radial_weights
    out, params = [], []
    for k in range(K):
        for _ in range(MAX_REDRAWS):
            cs = rng.uniform(*CENTER_RANGE, size=2)
            ws = rng.uniform(*WIDTH_RANGE, size=2)
            p = tuple((float(c), float(s)) for c, s in zip(cs, ws))
            v = _bumps(r, p)
            base = np.sqrt(np.dot(w, v * v))
            for _pass in range(2):
                for q in out:
                    v = v - np.dot(w, v * q) * q
            nrm = np.sqrt(np.dot(w, v * v))
            if nrm > DEPENDENCE_TOL * base:
                break
        else:
            raise ConstructionError(f"window {k} stayed dependent after {MAX_REDRAWS} redraws")
        out.append(v / nrm)
        params.append(p)
    samples = np.array(out)
    samples.setflags(write=False)
    bank = RadialWindowBank(K, samples, seed, tuple(params), grid)
    dev = np.abs(bank.gram() - np.eye(K)).max()
    if dev > 1e-8:
        raise ConstructionError(f"window Gram deviation {dev:.2e} exceeds 1e-8")
    return bank


def band_orders(m_p: int, L: int) -> np.ndarray:
    return abs(m_p) + 2 * np.arange(L)


def pose_length(m_p: int, N_pose: int) -> int:
    """Number of radial orders n in {|m_p|, |m_p|+2, ..., N_pose}."""
    return 0 if N_pose < abs(m_p) else (N_pose - abs(m_p)) // 2 + 1


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """K x L map C with coeff_row = p @ C."""

    entries: np.ndarray
    m_p: int
    orders: np.ndarray

    @cached_property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)

    @property
    def rank(self) -> int:
        s = self.singular_values
        return int((s > s[0] * max(self.entries.shape) * np.finfo(float).eps).sum()) if s.size and s[0] > 0 else 0

    @property
    def condition_number(self) -> float:
        s = self.singular_values
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def coupling_matrix(bank: RadialWindowBank, m_p: int, L: int) -> CouplingMatrix:
    """C[k, j] = pi * sqrt((n_j + 1)/pi) * int w_k R_{n_j}^{|m_p|} r dr."""
    if m_p == 0:
        raise DomainError("pose band m_p must be non-zero")
    g = bank.grid
    orders = band_orders(m_p, L)
    N_pose = int(orders[-1])
    if g.rule == "gauss" and N_pose > g.max_exact_order():
        raise DomainError(f"order {N_pose} exceeds what the bank grid integrates exactly; "
                          f"build the bank on pose_grid({N_pose})")
    R = radial_family(abs(m_p), N_pose, g.radial_nodes)
    raw = (bank.samples * g.radial_weights) @ R.T
    C = raw * (np.pi * np.sqrt((orders + 1) / np.pi))[None, :]
    C.setflags(write=False)
    return CouplingMatrix(C, m_p, orders)


@dataclass(frozen=True, eq=False)
class PoseEncoding:
    values: np.ndarray
    band: int
    orders: np.ndarray

    @property
    def length(self) -> int:
        return len(self.values)


def _check_p(p, bank: RadialWindowBank) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (bank.K,):
        raise ShapeMismatchError(f"pose vector of length {p.shape} does not match K={bank.K}")
    return p


def pose_field(p, bank: RadialWindowBank, m_p: int = DEFAULT_BAND, grid: PolarGrid | None = None) -> PolarField:
    """f_P(r, theta) = (sum_k p_k w_k(r)) cos(m_p theta)."""
    p = _check_p(p, bank)
    grid = bank.grid if grid is None else grid
    check_same_grid(grid, bank.grid)
    radial = p @ bank.samples
    return PolarField(radial[:, None] * np.cos(m_p * grid.angular_nodes)[None, :], grid)


def encode_pose(p, bank: RadialWindowBank, m_p: int = DEFAULT_BAND,
                L: int | None = None, N_pose: int | None = None) -> tuple[PoseEncoding, CouplingMatrix]:
    """Coefficients a_n^{m_p} = p @ C.  Give either the length L or the maximal order N_pose."""
    p = _check_p(p, bank)
    if L is None:
        L = bank.K if N_pose is None else pose_length(m_p, N_pose)
    if L < bank.K:
        raise RecoveryError(f"pose length L={L} is below K={bank.K}; the pose is under-determined")
    C = coupling_matrix(bank, m_p, L)
    vals = p @ C.entries
    return PoseEncoding(vals, m_p, C.orders), C


def decode_pose(enc: PoseEncoding, C: CouplingMatrix) -> np.ndarray:
    """Least-squares (right pseudo-inverse) recovery of p from a = p @ C."""
    if enc.length != C.entries.shape[1] or enc.band != C.m_p:
        raise ShapeMismatchError("encoding and coupling matrix disagree on band or length")
    if C.rank < C.entries.shape[0]:
        raise RecoveryError(f"coupling matrix has rank {C.rank} < K={C.entries.shape[0]} "
                            f"(condition number {C.condition_number:.3g})")
    p, *_ = np.linalg.lstsq(C.entries.T, enc.values, rcond=None)
    return p


def field_distance(p_i, p_j, bank: RadialWindowBank, m_p: int = DEFAULT_BAND) -> float:
    """Quadrature L2 distance between two pose fields over the disk."""
    d = pose_field(_check_p(p_i, bank) - _check_p(p_j, bank), bank, m_p)
    g = bank.grid
    return float(np.sqrt(np.dot(g.radial_weights, (d.values**2).sum(axis=1)) * g.angular_weight))


@dataclass(frozen=True, eq=False)
class PoseCodec:
    """Pose -> pose-band coefficients of fixed length, with its own radial grid."""

    L: int = DEFAULT_POSE_LENGTH
    K: int = DEFAULT_K
    m_p: int = DEFAULT_BAND
    seed: int = DEFAULT_SEED

    @property
    def N_pose(self) -> int:
        return abs(self.m_p) + 2 * (max(self.L, self.K) - 1)

    @cached_property
    def bank(self) -> RadialWindowBank:
        return build_radial_windows(self.K, pose_grid(self.N_pose), self.seed)

    @cached_property
    def coupling(self) -> CouplingMatrix:
        return coupling_matrix(self.bank, self.m_p, max(self.L, self.K))

    def encode_vector(self, p) -> PoseEncoding:
        vals = _check_p(p, self.bank) @ self.coupling.entries
        return PoseEncoding(vals, self.m_p, self.coupling.orders)

    def decode_vector(self, enc: PoseEncoding) -> np.ndarray:
        return decode_pose(enc, self.coupling)

    def encode(self, pose: Pose) -> PoseEncoding:
        return self.encode_vector(pose.flattened)

    def decode(self, enc: PoseEncoding, norm: float, world_bounds=DEFAULT_WORLD_BOUNDS) -> Pose:
        """Rebuild a Pose; ``norm`` is the side-channel scale dropped by normalisation."""
        flat = self.decode_vector(enc)
        flat.setflags(write=False)
        return Pose(flat, float(norm), tuple(world_bounds))
