from math import pi

import numpy as np
import pytest
from scipy.integrate import quad

from zernshape import regions as rg
from zernshape.errors import DomainError, IrreversibleError, ShapeMismatchError, StateError
from zernshape.geometry import (COMPLEX2REAL, MAGNITUDE, GeometryCodec, GeometryEncoding, encode_geometry,
                                encode_mask, flat_length, flatten_real, freqprop, freqprop_invert, layout_for,
                                mirror_negative, order_for_length, reconstruct, reconstruct_mask,
                                reconstruction_mse, unflatten)
from zernshape.shapes import PolarField, iou, polar_from_function, rasterize, rasterize_primitive, to_polar
from zernshape.zernike import build_basis_table, cached_table, index_set, polar_grid, radial_poly

GRID = polar_grid(64, 128)


def random_encoding(N, rng, M=None):
    M = N if M is None else M
    k = len(index_set(N, M))
    c = rng.normal(size=k) + 1j * rng.normal(size=k)
    return GeometryEncoding(mirror_negative(c, N, M), N, M)


def oracle_freqprop(enc, lr, la):
    """Closed form of the cascade: y[n, m] = sum_ij lr^i la^j x[n - 2i, m - 2j] over m >= 0."""
    x = {(i.n, i.m): c for i, c in zip(enc.indices, enc.coefficients)}
    y = {}
    for (n, m) in x:
        if m < 0:
            continue
        y[(n, m)] = sum(lr**i * la**j * x.get((n - 2 * i, m - 2 * j), 0)
                        for i in range(n // 2 + 1) for j in range(m // 2 + 1))
    return np.array([y[(i.n, i.m)] if i.m >= 0 else np.conj(y[(i.n, -i.m)]) for i in enc.indices])


def test_full_disk_is_pure_piston():
    tab = build_basis_table(12, 12, GRID)
    z = encode_geometry(polar_from_function(lambda r, t: 1.0, GRID), tab)
    assert z.coefficient(0, 0) == pytest.approx(1.0, abs=1e-13)
    others = np.delete(z.coefficients, tab.position(0, 0))
    assert np.max(np.abs(others)) < 1e-12


def test_half_disk_tilt_matches_analytic():
    g = polar_grid(64, 1024)
    tab = build_basis_table(3, 3, g)
    z = encode_geometry(polar_from_function(lambda r, t: (t < pi).astype(float), g), tab)
    # (2/pi) * integral of r * exp(-i t) r dr dt over the upper half disk
    assert z.coefficient(1, 1) == pytest.approx(-4j / (3 * pi), abs=1e-5)
    assert z.coefficient(0, 0) == pytest.approx(0.5, abs=1e-12)


def test_disk_mask_radial_moments_against_quad():
    # a centred disk of radius a has only m = 0 moments
    a = 0.6
    mask = rasterize(rg.Ellipse(0.0, 0.0, a, a), 300)
    z = encode_mask(mask, cached_table(10, 10))
    for n in (0, 2, 4, 6, 8):
        want = (n + 1) / pi * 2 * pi * quad(lambda r: radial_poly(n, 0, r) * r, 0, a)[0]
        assert z.coefficient(n, 0) == pytest.approx(want, abs=5e-4)
    assert abs(z.coefficient(3, 1)) < 1e-3


def test_encoding_is_linear():
    rng = np.random.default_rng(1)
    tab = cached_table(15, 15, GRID)
    f, h = rng.uniform(size=GRID.shape), rng.uniform(size=GRID.shape)
    a, b = 0.7, -2.3
    lhs = encode_geometry(PolarField(a * f + b * h, GRID), tab).coefficients
    rhs = a * encode_geometry(PolarField(f, GRID), tab).coefficients + b * encode_geometry(PolarField(h, GRID),
                                                                                           tab).coefficients
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_negative_orders_are_conjugates():
    mask = rasterize_primitive("triangle", {"center": (0.1, 0.2), "radius": 0.5}, 200)
    z = encode_mask(mask, cached_table(8, 8, GRID))
    for i in z.indices:
        assert z.coefficient(i.n, -i.m) == pytest.approx(np.conj(z.coefficient(i.n, i.m)), abs=1e-15)


def test_encoding_checks_shape():
    with pytest.raises(ShapeMismatchError):
        GeometryEncoding(np.zeros(4, dtype=complex), 3, 3)


@pytest.mark.parametrize("lr,la", [(0.6, 0.6), (0.3, 0.0), (0.0, 0.8), (0.9, 0.25)])
def test_freqprop_matches_closed_form(lr, la):
    enc = random_encoding(9, np.random.default_rng(7))
    out = freqprop(enc, lr, la)
    assert np.max(np.abs(out.coefficients - oracle_freqprop(enc, lr, la))) < 1e-12
    back = freqprop_invert(out)
    assert back.freqprop is None
    assert np.max(np.abs(back.coefficients - enc.coefficients)) < 1e-12


def test_freqprop_isolated_piston_chain():
    N = 8
    c = np.zeros(len(index_set(N, N)), dtype=complex)
    c[0] = 1.0
    out = freqprop(GeometryEncoding(c, N, N), 0.6, 0.5)
    for i in out.indices:
        want = 0.6 ** (i.n // 2) * 0.5 ** (abs(i.m) // 2) if i.n % 2 == 0 and i.m % 2 == 0 else 0.0
        assert out.coefficient(i.n, i.m) == pytest.approx(want, abs=1e-15)


def test_freqprop_state_and_range():
    enc = random_encoding(4, np.random.default_rng(0))
    with pytest.raises(StateError):
        freqprop(freqprop(enc), 0.6, 0.6)
    with pytest.raises(StateError):
        freqprop_invert(enc)
    with pytest.raises(DomainError):
        freqprop(enc, 1.2, 0.6)
    with pytest.raises(DomainError):
        freqprop(enc, -0.1, 0.6)
    big = freqprop(enc, 1.8, 1.8, allow_over_range=True)
    assert np.max(np.abs(freqprop_invert(big).coefficients - enc.coefficients)) < 1e-11


def count_length(N, mode):
    k = sum(1 for n in range(N + 1) for m in range(n % 2, n + 1, 2))
    return 2 * k if mode == COMPLEX2REAL else k


@pytest.mark.parametrize("L,mode", [(64, COMPLEX2REAL), (512, COMPLEX2REAL), (4096, COMPLEX2REAL),
                                    (512, MAGNITUDE), (4096, MAGNITUDE), (3, COMPLEX2REAL)])
def test_order_for_length_is_smallest_sufficient(L, mode):
    N = order_for_length(L, mode)
    assert count_length(N, mode) >= L > count_length(N - 1, mode)
    assert flat_length(N, mode) == count_length(N, mode)


def test_order_for_length_reference_values():
    assert [order_for_length(L) for L in (64, 256, 512, 1024, 2048, 4096)] == [10, 21, 30, 44, 62, 89]
    with pytest.raises(DomainError):
        order_for_length(1)
    with pytest.raises(DomainError):
        order_for_length(64, "polar")


def test_complex2real_layout_interleaves():
    enc = random_encoding(3, np.random.default_rng(2))
    r = flatten_real(enc, 12)
    lay = r.layout
    assert lay[:4] == [((0, 0), "real"), ((0, 0), "imag"), ((1, 1), "real"), ((1, 1), "imag")]
    assert r.values[2] == enc.coefficient(1, 1).real and r.values[3] == enc.coefficient(1, 1).imag
    assert r.values[4] == enc.coefficient(2, 0).real


def test_flatten_pads_and_truncates():
    enc = random_encoding(3, np.random.default_rng(2))
    padded = flatten_real(enc, 20)
    assert padded.L == 20 and np.all(padded.values[12:] == 0)
    assert layout_for(COMPLEX2REAL, 3, 3, 20)[12:] == [None] * 8
    short = flatten_real(enc, 7)
    back = unflatten(short)
    # three full pairs survive; the half pair at index 3 does not
    assert back.retained.sum() == len([i for i in enc.indices if (i.n, abs(i.m)) in {(0, 0), (1, 1), (2, 0)}])
    assert back.coefficient(2, 2) == 0
    assert back.coefficient(1, -1) == pytest.approx(np.conj(enc.coefficient(1, 1)))


def test_unflatten_roundtrip_and_magnitude_irreversible():
    enc = random_encoding(6, np.random.default_rng(4))
    L = flat_length(6, COMPLEX2REAL)
    back = unflatten(flatten_real(enc, L))
    assert back.retained is None
    assert np.max(np.abs(back.coefficients - enc.coefficients)) < 1e-15
    mag = flatten_real(enc, 16, MAGNITUDE)
    assert mag.values[1] == pytest.approx(abs(enc.coefficient(1, 1)))
    with pytest.raises(IrreversibleError):
        unflatten(mag)


def test_rotation_multiplies_by_phase():
    reg = rg.Polygon(((-0.3, -0.4), (0.6, -0.2), (0.1, 0.5), (-0.5, 0.3)))
    phi = np.deg2rad(40.0)
    c, s = np.cos(phi), np.sin(phi)
    rot = rg.Affine(reg, ((c, -s), (s, c)), (0.0, 0.0))
    tab = cached_table(10, 10)
    z0 = encode_mask(rasterize(reg, 300), tab)
    z1 = encode_mask(rasterize(rot, 300), tab)
    want = z0.coefficients * np.exp(-1j * tab.m_array * phi)
    assert np.max(np.abs(z1.coefficients - want)) < 5e-3


def test_codec_decode_inverts_encode():
    mask = rasterize_primitive("pentagon", {"center": (0.2, -0.1), "radius": 0.6}, 300)
    codec = GeometryCodec(L=512)
    raw = codec.encode_complex(mask)
    dec = codec.decode(codec.encode(mask))
    ref = encode_mask(mask, codec.table)
    assert raw.freqprop is not None and dec.freqprop is None
    assert np.max(np.abs(dec.coefficients - ref.coefficients)) < 1e-12


def test_reconstruction_recovers_simple_shape():
    mask = rasterize_primitive("ellipse", {"a": 0.8, "b": 0.5, "angle": 0.3}, 300)
    codec = GeometryCodec(L=1024)
    real = codec.encode(mask)
    assert iou(mask, codec.reconstruct_mask(real, threshold=0.5)) > 0.97
    # the low default threshold errs towards dilation
    loose = codec.reconstruct_mask(real)
    assert (mask.pixels & ~loose.pixels).sum() < 20 and iou(mask, loose) > 0.9


def test_mse_falls_with_order():
    mask = rasterize_primitive("square", {"side": 1.1}, 300)
    src = to_polar(mask, GRID)
    errs = []
    for N in (4, 8, 16, 32):
        tab = cached_table(N, N, GRID)
        errs.append(reconstruction_mse(reconstruct(encode_mask(mask, tab), tab), src))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_reconstruct_refuses_propagated():
    tab = cached_table(4, 4, GRID)
    enc = freqprop(encode_mask(rasterize_primitive("circle", None, 64), tab))
    with pytest.raises(StateError):
        reconstruct(enc, tab)
    with pytest.raises(ShapeMismatchError):
        reconstruct_mask(freqprop_invert(enc), cached_table(5, 5, GRID))
