"""Joint geometry + pose encoding by phase modulation of the geometry coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, IrreversibleError, RecoveryError, ShapeMismatchError
from .geometry import (COMPLEX2REAL, FreqPropMeta, GeometryCodec, GeometryEncoding, RealEncoding, flatten_real,
                       order_for_length)
from .posecodec import DEFAULT_K, DEFAULT_SEED, RadialWindowBank, build_radial_windows, coupling_matrix, pose_length
from .shapes import GroundedShape
from .zernike import default_grid, index_set

ETA_RATE = 5.0
PHASE_HEADROOM = 0.9


def eta(beta: float) -> float:
    """Pose suppression factor exp(-5 (beta - 1)) of the geometry-emphasis branch."""
    return float(np.exp(-ETA_RATE * (beta - 1.0)))


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 2.0:
        raise DomainError(f"beta={beta} outside [0, 2]")
    return beta


def default_bands(M: int) -> tuple:
    return tuple(range(1, M + 1))


def composite_couplings(bank: RadialWindowBank, N: int, M: int, pose_bands=None) -> dict:
    """Coupling matrix per pose band m, covering every radial order n <= N with that m."""
    bands = default_bands(M) if pose_bands is None else tuple(sorted(set(pose_bands)))
    out = {}
    for m in bands:
        if not 1 <= m <= M:
            raise DomainError(f"pose band {m} outside 1..{M}")
        L = pose_length(m, N)
        if L:
            out[m] = coupling_matrix(bank, m, L)
    return out


def composite_pose_coeffs(p, bank: RadialWindowBank, N: int, M: int, pose_bands=None,
                          couplings: dict | None = None) -> np.ndarray:
    """a_n^m over ``index_set(N, M)`` from the superposed band-m harmonic fields.

    Both +m and -m receive the same real value, since cos(m theta) projects
    equally onto the pair; orders outside the bands get zero.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (bank.K,):
        raise ShapeMismatchError(f"pose vector of length {p.shape} does not match K={bank.K}")
    couplings = composite_couplings(bank, N, M, pose_bands) if couplings is None else couplings
    idx = index_set(N, M)
    pos = {(i.n, i.m): k for k, i in enumerate(idx)}
    a = np.zeros(len(idx))
    for m, C in couplings.items():
        vals = p @ C.entries
        for n, v in zip(C.orders, vals):
            a[pos[(int(n), m)]] = v
            a[pos[(int(n), -m)]] = v
    return a


def phase_scale(couplings: dict) -> float:
    """Factor mapping the largest possible |a| for a unit pose vector onto 0.9 pi.

    Scaling up as well as down spends the whole phase range on pose, which is
    what lets small beta hand discrimination over to pose.
    """
    worst = max((float(np.linalg.norm(C.entries, axis=0).max()) for C in couplings.values()), default=0.0)
    return 1.0 if worst == 0 else PHASE_HEADROOM * np.pi / worst


@dataclass(frozen=True, eq=False)
class JointEncoding:
    """Phase-modulated coefficients over ``index_set(N, M)``.

    ``phase_scale`` multiplies the pose coefficients before modulation;
    ``wrapped`` is set when some modulation angle left (-pi, pi).
    """

    coefficients: np.ndarray
    beta: float
    pose_bands: tuple
    phase_scale: float
    N: int
    M: int
    grid_key: str = ""
    wrapped: bool = False
    freqprop: FreqPropMeta | None = None


def encode_joint(z: GeometryEncoding, a, beta: float, pose_bands=None, scale: float = 1.0) -> JointEncoding:
    """Modulate geometry coefficients by the (scaled) pose coefficients.

    beta in (0, 1]: exp(beta ln z) exp(-i s a).
    beta in (1, 2]: z exp(-i eta(beta) s a).
    beta = 0 keeps only the pose phase.  Zero coefficients stay zero on the
    log branch.
    """
    beta = _check_beta(beta)
    a = np.asarray(a, dtype=float)
    zc = z.coefficients
    if a.shape != zc.shape:
        raise ShapeMismatchError(f"pose coefficients {a.shape} do not match geometry {zc.shape}")
    bands = default_bands(z.M) if pose_bands is None else tuple(sorted(set(pose_bands)))
    phase = scale * a
    if beta > 1.0:
        phase = eta(beta) * phase
        out = zc * np.exp(-1j * phase)
    else:
        nz = zc != 0
        out = np.zeros_like(zc)
        out[nz] = np.exp(beta * np.log(zc[nz])) * np.exp(-1j * phase[nz])
    wrapped = bool(np.any(np.abs(phase) >= np.pi))
    return JointEncoding(out, beta, bands, float(scale), z.N, z.M, z.grid_key, wrapped, z.freqprop)


def recover_geometry(joint: JointEncoding, a) -> GeometryEncoding:
    """Undo the modulation given the stored pose coefficients."""
    if joint.beta == 0.0:
        raise IrreversibleError("beta = 0 erases the geometry; it cannot be recovered")
    a = np.asarray(a, dtype=float)
    if a.shape != joint.coefficients.shape:
        raise ShapeMismatchError("pose coefficients do not match the joint encoding")
    phase = joint.phase_scale * a
    if joint.beta > 1.0:
        return GeometryEncoding(joint.coefficients * np.exp(1j * eta(joint.beta) * phase),
                                joint.N, joint.M, joint.grid_key, joint.freqprop)
    base = joint.coefficients * np.exp(1j * phase)
    nz = joint.coefficients != 0
    z = np.zeros_like(base)
    z[nz] = np.exp(np.log(base[nz]) / joint.beta)
    return GeometryEncoding(z, joint.N, joint.M, joint.grid_key, joint.freqprop)


def recover_pose(joint: JointEncoding, z: GeometryEncoding) -> np.ndarray:
    """Pose coefficients from the phase difference; NaN where z = 0."""
    if joint.wrapped:
        raise RecoveryError("modulation angles reached pi at encode time; phase recovery is ambiguous")
    zc = z.coefficients
    if zc.shape != joint.coefficients.shape:
        raise ShapeMismatchError("geometry does not match the joint encoding")
    nz = zc != 0
    if joint.beta > 1.0:
        zeff = zc
        gain = eta(joint.beta)
    else:
        zeff = np.zeros_like(zc)
        zeff[nz] = np.exp(joint.beta * np.log(zc[nz]))
        gain = 1.0
    a = np.full(zc.shape, np.nan)
    a[nz] = -np.angle(joint.coefficients[nz] * np.conj(zeff[nz])) / (gain * joint.phase_scale)
    return a


def flatten_joint(joint: JointEncoding, L: int) -> RealEncoding:
    """COMPLEX2REAL flattening of the m >= 0 joint coefficients."""
    enc = GeometryEncoding(joint.coefficients, joint.N, joint.M, joint.grid_key)
    return flatten_real(enc, L, COMPLEX2REAL)


@dataclass(frozen=True, eq=False)
class JointCodec:
    """Grounded shape -> joint real vector.  Geometry propagation is off by default."""

    L: int = 512
    beta: float = 1.0
    K: int = DEFAULT_K
    seed: int = DEFAULT_SEED
    pose_bands: tuple | None = None
    lambda_r: float = 0.0
    lambda_a: float = 0.0

    @cached_property
    def geometry(self) -> GeometryCodec:
        return GeometryCodec(self.L, COMPLEX2REAL, self.lambda_r, self.lambda_a)

    @property
    def N(self) -> int:
        return order_for_length(self.L, COMPLEX2REAL)

    @cached_property
    def bank(self) -> RadialWindowBank:
        return build_radial_windows(self.K, default_grid(), self.seed)

    @cached_property
    def couplings(self) -> dict:
        return composite_couplings(self.bank, self.N, self.N, self.pose_bands)

    @cached_property
    def scale(self) -> float:
        return phase_scale(self.couplings)

    def pose_coeffs(self, p) -> np.ndarray:
        return composite_pose_coeffs(p, self.bank, self.N, self.N, couplings=self.couplings)

    def encode_joint(self, shape: GroundedShape) -> JointEncoding:
        z = self.geometry.encode_complex(shape.geometry)
        a = self.pose_coeffs(shape.pose.flattened)
        return encode_joint(z, a, self.beta, tuple(self.couplings), self.scale)

    def encode(self, shape: GroundedShape) -> RealEncoding:
        return flatten_joint(self.encode_joint(shape), self.L)
