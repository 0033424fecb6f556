from math import exp, pi

import numpy as np
import pytest

from zernshape.errors import DomainError, IrreversibleError, RecoveryError, ShapeMismatchError
from zernshape.geometry import GeometryEncoding, mirror_negative
from zernshape.joint import (JointCodec, composite_couplings, composite_pose_coeffs, encode_joint, eta,
                             flatten_joint, phase_scale, recover_geometry, recover_pose)
from zernshape.posecodec import build_radial_windows, coupling_matrix
from zernshape.shapes import GroundedShape, Pose, rasterize_primitive
from zernshape.zernike import index_set, polar_grid

N = 10
GRID = polar_grid(64, 64)


@pytest.fixture(scope="module")
def parts():
    rng = np.random.default_rng(11)
    k = len(index_set(N, N))
    z = GeometryEncoding(mirror_negative(rng.normal(size=k) + 1j * rng.normal(size=k), N, N), N, N)
    bank = build_radial_windows(6, GRID, 0)
    cpl = composite_couplings(bank, N, N)
    p = rng.uniform(-1, 1, 6)
    p /= np.linalg.norm(p)
    a = composite_pose_coeffs(p, bank, N, N, couplings=cpl)
    return z, a, phase_scale(cpl), bank, cpl, p


def test_eta_values():
    assert eta(2.0) == pytest.approx(exp(-5.0), abs=1e-15)
    assert eta(1.0) == 1.0


def test_beta_range():
    z = GeometryEncoding(np.ones(len(index_set(2, 2)), dtype=complex), 2, 2)
    with pytest.raises(DomainError):
        encode_joint(z, np.zeros(6), 2.5)
    with pytest.raises(ShapeMismatchError):
        encode_joint(z, np.zeros(5), 1.0)


@pytest.mark.parametrize("beta", [1.01, 1.3, 1.8, 2.0])
def test_magnitude_preserved_on_geometry_branch(parts, beta):
    z, a, s, *_ = parts
    j = encode_joint(z, a, beta, scale=s)
    assert np.max(np.abs(np.abs(j.coefficients) - np.abs(z.coefficients))) < 1e-14


def test_branches_meet_at_one(parts):
    z, a, s, *_ = parts
    at_one = encode_joint(z, a, 1.0, scale=s).coefficients
    geometry_branch = z.coefficients * np.exp(-1j * s * a)
    assert np.max(np.abs(at_one - geometry_branch)) < 1e-12
    just_above = encode_joint(z, a, 1.0 + 1e-12, scale=s).coefficients
    assert np.max(np.abs(at_one - just_above)) < 1e-10


def test_small_beta_compresses_magnitude(parts):
    z, a, s, *_ = parts
    j = encode_joint(z, a, 0.2, scale=s)
    assert np.allclose(np.abs(j.coefficients), np.abs(z.coefficients) ** 0.2, rtol=1e-13)


@pytest.mark.parametrize("beta", [0.2, 0.5, 1.0, 1.5, 2.0])
def test_one_side_recovery(parts, beta):
    z, a, s, *_ = parts
    j = encode_joint(z, a, beta, scale=s)
    assert not j.wrapped
    g = recover_geometry(j, a)
    assert np.max(np.abs(g.coefficients - z.coefficients)) < 1e-9
    a_back = recover_pose(j, z)
    assert np.max(np.abs(a_back - a)) < 1e-9


def test_zero_beta_erases_geometry(parts):
    z, a, s, *_ = parts
    j = encode_joint(z, a, 0.0, scale=s)
    assert np.allclose(np.abs(j.coefficients), 1.0)
    with pytest.raises(IrreversibleError):
        recover_geometry(j, a)


def test_wrapped_phase_blocks_pose_recovery(parts):
    z, a, s, *_ = parts
    j = encode_joint(z, a, 1.0, scale=10 * s)
    assert j.wrapped
    with pytest.raises(RecoveryError):
        recover_pose(j, z)


def test_zero_coefficients_give_nan_pose(parts):
    z, a, s, *_ = parts
    c = z.coefficients.copy()
    c[0] = 0
    z0 = GeometryEncoding(c, N, N)
    j = encode_joint(z0, a, 0.5, scale=s)
    assert j.coefficients[0] == 0
    assert np.isnan(recover_pose(j, z0)[0])


def test_composite_coeffs_follow_band_couplings(parts):
    z, a, s, bank, cpl, p = parts
    idx = index_set(N, N)
    for m in (1, 2, 5):
        C = coupling_matrix(bank, m, len(cpl[m].orders))
        for n, v in zip(C.orders, p @ C.entries):
            assert a[idx.index((n, m))] == pytest.approx(v, abs=1e-15)
            assert a[idx.index((n, -m))] == a[idx.index((n, m))]
    assert a[idx.index((4, 0))] == 0


def test_phase_scale_fills_range(parts):
    z, a, s, bank, cpl, p = parts
    worst_m, worst_col = max(((m, int(np.argmax(np.linalg.norm(C.entries, axis=0)))) for m, C in cpl.items()),
                             key=lambda mc: np.linalg.norm(cpl[mc[0]].entries[:, mc[1]]))
    col = cpl[worst_m].entries[:, worst_col]
    q = col / np.linalg.norm(col)
    aq = composite_pose_coeffs(q, bank, N, N, couplings=cpl)
    assert np.max(np.abs(s * aq)) == pytest.approx(0.9 * pi, rel=1e-12)
    assert np.max(np.abs(s * a)) <= 0.9 * pi + 1e-12


def test_flatten_joint_layout(parts):
    z, a, s, *_ = parts
    j = encode_joint(z, a, 1.4, scale=s)
    r = flatten_joint(j, 20)
    assert r.L == 20
    assert r.values[2] == j.coefficients[index_set(N, N).index((1, 1))].real


def test_codec_on_grounded_shape():
    codec = JointCodec(L=64, beta=0.6)
    shape = GroundedShape(rasterize_primitive("triangle", None, 128), Pose.from_parts(8 * np.eye(2), (10, -10)))
    j = codec.encode_joint(shape)
    assert not j.wrapped
    assert codec.encode(shape).L == 64
    a = codec.pose_coeffs(shape.pose.flattened)
    z = codec.geometry.encode_complex(shape.geometry)
    nz = np.abs(z.coefficients) > 1e-8
    assert np.max(np.abs(recover_pose(j, z)[nz] - a[nz])) < 1e-9
