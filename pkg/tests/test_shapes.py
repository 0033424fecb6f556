import numpy as np
import pytest

from zernshape import regions as rg
from zernshape.errors import DegenerateShapeError, DomainError, FormatError, FrameError, ShapeMismatchError
from zernshape.shapes import (PRIMITIVES, UNIT_DISK, WORLD, Pose, ShapeMask, apply_binary,
                              apply_pose, apply_unary, boundary_complexity, decompose, empty_mask, iou,
                              make_primitive, perimeter, pixel_centers, rasterize, rasterize_primitive, read_pgm,
                              to_polar, write_pgm)
from zernshape.zernike import polar_grid

RES = 200


def brute_mask(fn, res=RES, bounds=(-1.0, -1.0, 1.0, 1.0)):
    """Independent rasteriser: evaluate a predicate at every pixel centre."""
    x0, y0, x1, y1 = bounds
    xs = x0 + (np.arange(res) + 0.5) * (x1 - x0) / res
    ys = y0 + (np.arange(res) + 0.5) * (y1 - y0) / res
    X, Y = np.meshgrid(xs, ys)
    return fn(X, Y)


def test_circle_matches_brute_force_and_area():
    m = rasterize_primitive("circle", {"radius": 0.5, "center": (0.1, -0.2)}, RES)
    want = brute_mask(lambda x, y: (x - 0.1) ** 2 + (y + 0.2) ** 2 <= 0.25)
    assert np.array_equal(m.pixels, want)
    assert m.area() == pytest.approx(np.pi * 0.25, rel=5e-3)


def test_rows_run_upward():
    m = rasterize_primitive("rectangle", {"width": 1.0, "height": 0.4, "center": (0.0, 0.5)}, RES)
    assert m.pixels[-60:].any() and not m.pixels[:100].any()


@pytest.mark.parametrize("kind", PRIMITIVES)
def test_every_primitive_rasterises_inside_disk(kind):
    m = rasterize_primitive(kind, None, RES)
    x, y = m.centers()
    assert m.pixels.any()
    assert not (m.pixels & (x * x + y * y > 1.0)).any()


def test_primitive_outside_disk_rejected():
    with pytest.raises(DomainError):
        make_primitive("circle", {"radius": 0.6, "center": (0.5, 0.0)})
    with pytest.raises(DomainError):
        make_primitive("hexagon")
    with pytest.raises(DomainError):
        make_primitive("square", {"side": -1.0})


def test_square_area_and_perimeter():
    m = rasterize_primitive("square", {"side": 1.0}, RES)
    assert m.area() == pytest.approx(1.0, abs=1e-12)
    assert perimeter(m) == pytest.approx(4.0, abs=1e-12)
    assert boundary_complexity(m) == pytest.approx(4.0, abs=1e-12)


def test_rotate_square_quarter_turn_is_identity():
    m = rasterize_primitive("square", {"side": 0.8}, RES)
    r = apply_unary(m, "rotate", {"angle": np.pi / 2})
    assert iou(m, r) == 1.0


def test_translate_moves_centroid():
    m = rasterize_primitive("circle", {"radius": 0.3}, RES)
    t = apply_unary(m, "translate", {"offset": (0.2, -0.1)})
    c = t.set_centers().mean(axis=0)
    assert np.allclose(c, (0.2, -0.1), atol=1e-3)


def test_scale_changes_area_quadratically():
    m = rasterize_primitive("circle", {"radius": 0.4}, RES)
    s = apply_unary(m, "scale", {"factor": 0.5})
    assert s.area() / m.area() == pytest.approx(0.25, rel=2e-2)


def test_translate_out_of_disk_is_degenerate():
    m = rasterize_primitive("circle", {"radius": 0.2}, RES)
    with pytest.raises(DegenerateShapeError):
        apply_unary(m, "translate", {"offset": (3.0, 0.0)})


def test_pixel_path_resamples_without_region():
    m = rasterize_primitive("square", {"side": 0.8}, RES)
    bare = m.with_pixels(m.pixels)
    assert bare.region is None
    r = apply_unary(bare, "rotate", {"angle": np.pi / 2})
    assert iou(r, m) > 0.98


@pytest.mark.parametrize("op,fn", [("union", np.logical_or), ("intersect", np.logical_and),
                                   ("subtract", lambda a, b: a & ~b), ("xor", np.logical_xor)])
def test_boolean_ops_match_pixel_logic(op, fn):
    a = rasterize_primitive("circle", {"radius": 0.5, "center": (-0.2, 0.0)}, RES)
    b = rasterize_primitive("square", {"side": 0.7, "center": (0.2, 0.1)}, RES)
    out = apply_binary(a, b, op)
    assert np.array_equal(out.pixels, fn(a.pixels, b.pixels))


def test_convex_hull_contains_union_and_is_stable():
    a = rasterize_primitive("circle", {"radius": 0.2, "center": (-0.5, 0.0)}, RES)
    b = rasterize_primitive("circle", {"radius": 0.2, "center": (0.5, 0.0)}, RES)
    h = apply_binary(a, b, "convex_hull")
    assert not (a.pixels & ~h.pixels).any() and not (b.pixels & ~h.pixels).any()
    # stadium: two caps plus a 1.0 x 0.4 rectangle
    assert h.area() == pytest.approx(np.pi * 0.04 + 0.4, rel=2e-2)
    h2 = apply_binary(h, h, "convex_hull")
    assert iou(h, h2) > 0.995


def test_binary_rejects_mixed_frames():
    a = rasterize_primitive("circle", None, 64)
    b = empty_mask(64, WORLD, (-1.0, -1.0, 1.0, 1.0)).with_pixels(a.pixels)
    with pytest.raises(FrameError):
        apply_binary(a, b, "union")
    with pytest.raises(ShapeMismatchError):
        apply_binary(a, rasterize_primitive("circle", None, 96), "union")


def test_empty_intersection_raises_unless_allowed():
    a = rasterize_primitive("circle", {"radius": 0.2, "center": (-0.5, 0.0)}, RES)
    b = rasterize_primitive("circle", {"radius": 0.2, "center": (0.5, 0.0)}, RES)
    with pytest.raises(DegenerateShapeError):
        apply_binary(a, b, "intersect")
    assert apply_binary(a, b, "intersect", allow_empty=True).degenerate


def test_iou_known_values():
    a = rasterize_primitive("square", {"side": 1.0, "center": (-0.25, 0.0)}, RES)
    b = rasterize_primitive("square", {"side": 1.0, "center": (0.25, 0.0)}, RES)
    # overlap 0.5, union 1.5
    assert iou(a, b) == pytest.approx(1 / 3, abs=1e-12)
    assert iou(a, a) == 1.0


def test_pose_from_parts_roundtrip():
    bounds = (-50, -50, 50, 50)
    p = Pose.from_parts(7.5 * np.eye(2), (12.0, -30.0), bounds)
    assert np.linalg.norm(p.flattened) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(p.transform, 7.5 * np.eye(2), atol=1e-13)
    assert np.allclose(p.translation, (12.0, -30.0), atol=1e-13)
    q = Pose.from_dict(p.to_dict())
    assert np.array_equal(q.flattened, p.flattened) and q.norm == p.norm


def test_decompose_apply_pose_roundtrip():
    bounds = (-50, -50, 50, 50)
    reg = rg.Ellipse(10.0, -5.0, 12.0, 6.0, 0.4)
    world = rasterize(reg, 300, WORLD, bounds)
    g = decompose(world, bounds)
    back = apply_pose(g, 300)
    assert iou(world, back) > 0.99
    assert np.allclose(g.pose.translation, (10.0, -5.0), atol=0.2)
    # geometry touches the unit circle
    pts = g.geometry.set_centers()
    assert np.sqrt((pts**2).sum(axis=1)).max() > 0.97


def test_decompose_pixel_path():
    bounds = (-50, -50, 50, 50)
    world = rasterize(rg.Ellipse(0.0, 0.0, 20.0, 10.0), 300, WORLD, bounds)
    bare = world.with_pixels(world.pixels)
    g = decompose(bare, bounds)
    assert iou(apply_pose(g, 300), world) > 0.97


def test_decompose_requires_world_frame():
    with pytest.raises(FrameError):
        decompose(rasterize_primitive("circle", None, 64))
    with pytest.raises(DegenerateShapeError):
        decompose(empty_mask(64, WORLD, (-50, -50, 50, 50)))


def test_to_polar_full_disk_and_half_plane():
    g = polar_grid(32, 64)
    disk = ShapeMask(np.ones((RES, RES), dtype=bool) & brute_mask(lambda x, y: x * x + y * y <= 1.0))
    f = to_polar(disk, g)
    assert np.all(f.values == 1.0)
    half = rasterize(rg.DiskClip(rg.Polygon(((-2.0, 0.0), (2.0, 0.0), (2.0, 2.0), (-2.0, 2.0)))), RES)
    v = to_polar(half, g).values
    upper = (g.angular_nodes > 0.05) & (g.angular_nodes < np.pi - 0.05)
    lower = (g.angular_nodes > np.pi + 0.05) & (g.angular_nodes < 2 * np.pi - 0.05)
    assert np.all(v[:, upper][4:] == 1.0) and np.all(v[:, lower][4:] == 0.0)


def test_to_polar_needs_unit_disk():
    world = rasterize(rg.Ellipse(0, 0, 10, 10), 64, WORLD, (-50, -50, 50, 50))
    with pytest.raises(FrameError):
        to_polar(world, polar_grid(8, 16))


def test_pgm_roundtrip(tmp_path):
    m = rasterize_primitive("pentagon", None, 128)
    write_pgm(m, tmp_path / "m.pgm")
    back = read_pgm(tmp_path / "m.pgm")
    assert back.frame == UNIT_DISK and np.array_equal(back.pixels, m.pixels)
    world = rasterize(rg.Ellipse(3, 4, 10, 5), 96, WORLD, (-50, -40, 50, 60))
    write_pgm(world, tmp_path / "w.pgm")
    back = read_pgm(tmp_path / "w.pgm")
    assert back.frame == WORLD and back.bounds == (-50.0, -40.0, 50.0, 60.0)
    assert np.array_equal(back.pixels, world.pixels)


def test_pgm_threshold_and_bad_header(tmp_path):
    img = np.array([[0, 127], [128, 255]], dtype=np.uint8)
    path = tmp_path / "g.pgm"
    path.write_bytes(b"P5\n# comment\n2 2\n255\n" + img.tobytes())
    (tmp_path / "g.pgm.meta").write_text("frame=world\nbounds=0,0,2,2\n")
    m = read_pgm(path)
    # file rows run top-down, mask rows bottom-up
    assert m.pixels.tolist() == [[True, True], [False, False]]
    path.write_bytes(b"P2\n2 2\n255\n0 0 0 0")
    with pytest.raises(FormatError):
        read_pgm(path)


def test_pixel_centers_cover_bounds():
    x, y = pixel_centers(4, (0.0, 0.0, 4.0, 8.0))
    assert x[0].tolist() == [0.5, 1.5, 2.5, 3.5]
    assert y[:, 0].tolist() == [1.0, 3.0, 5.0, 7.0]
