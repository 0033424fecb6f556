import json

import numpy as np
import pytest

from zernshape.cli import DEFAULTS, FORMAT_VERSION, build_parser, main, resolve_params
from zernshape.corpus import load_corpus, world_mask
from zernshape.serialize import read_json
from zernshape.shapes import iou, read_pgm, write_pgm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else json.loads(err))


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["corpus", "--out", str(out), "--depths", "1", "2", "--per-depth", "2",
                 "--resolution", "128", "--seed", "3"]) == 0
    return out


def test_corpus_command_writes_snapshot(corpus_dir):
    c = load_corpus(corpus_dir)
    assert c.counts == {1: 2, 2: 2}
    cfg = read_json(corpus_dir / "run_config.json")
    assert cfg["command"] == "corpus" and cfg["params"]["seed"] == 3 and cfg["params"]["resolution"] == 128
    assert (corpus_dir / "FORMAT_VERSION").read_text().strip() == str(FORMAT_VERSION)


def test_geometry_encode_decode(corpus_dir, tmp_path, capsys):
    enc = tmp_path / "enc"
    code, res = run(capsys, "encode", corpus_dir, "--out", enc, "--length", 1024)
    assert code == 0 and res["encoded"] == 4
    doc = read_json(enc / "encodings" / "d01_0000.json")
    assert doc["kind"] == "geometry" and len(doc["values"]) == 1024
    code, res = run(capsys, "decode", enc, "--out", tmp_path / "dec", "--resolution", 128, "--threshold", 0.5)
    assert code == 0 and res["decoded"] == 4
    src = load_corpus(corpus_dir).entries[0].shape.geometry
    assert iou(src, read_pgm(tmp_path / "dec" / "masks" / "d01_0000.pgm")) > 0.9


def test_pose_roundtrip_through_files(corpus_dir, tmp_path, capsys):
    enc = tmp_path / "enc"
    assert run(capsys, "encode", corpus_dir, "--out", enc, "--mode", "pose", "--length", 16)[0] == 0
    assert run(capsys, "decode", enc, "--out", tmp_path / "dec")[0] == 0
    for e in load_corpus(corpus_dir).entries:
        back = read_json(tmp_path / "dec" / "poses" / f"{e.id}.json")
        assert np.max(np.abs(np.array(back["vector"]) - e.shape.pose.flattened)) < 1e-9


def test_world_pgm_input(corpus_dir, tmp_path, capsys):
    e = load_corpus(corpus_dir).entries[1]
    src = tmp_path / "pgm"
    src.mkdir()
    write_pgm(world_mask(e.shape, 256), src / "one.pgm")
    code, res = run(capsys, "encode", src, "--out", tmp_path / "enc", "--mode", "joint", "--length", 64,
                    "--beta", 0.5)
    assert code == 0 and res["encoded"] == 1
    assert read_json(tmp_path / "enc" / "encodings" / "one.json")["kind"] == "joint"
    code, res = run(capsys, "decode", tmp_path / "enc", "--out", tmp_path / "dec")
    assert code == 7 and res["error"] == "IrreversibleError"


def test_csv_emit_is_export_only(corpus_dir, tmp_path, capsys):
    out = tmp_path / "enc"
    assert run(capsys, "encode", corpus_dir, "--out", out, "--emit", "csv", "--length", 64)[0] == 0
    lines = (out / "encodings.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[1].startswith("d01_0000,")
    code, res = run(capsys, "decode", out, "--out", tmp_path / "dec")
    assert code == 11 and res["error"] == "FormatError"


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"length": 256, "beta": 1.5}))
    args = build_parser().parse_args(["encode", "x", "--out", "y", "--config", str(cfg), "--beta", "0.3"])
    p = resolve_params(args)
    assert (p["length"], p["beta"], p["seed"]) == (256, 0.3, DEFAULTS["seed"])


def test_error_codes(tmp_path, capsys):
    assert run(capsys, "encode", tmp_path / "missing", "--out", tmp_path / "o")[0] == 12
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"lenght": 3}))
    code, res = run(capsys, "encode", tmp_path, "--out", tmp_path / "o", "--config", bad)
    assert code == 11 and "lenght" in res["message"]
    assert run(capsys, "encode", "--bogus")[0] == 2
    assert run(capsys, "eval", "pose-isometry", "--out", tmp_path / "o", "--pairs", 10)[0] == 2


def test_eval_pose_isometry_and_basis(tmp_path, capsys, monkeypatch):
    code, res = run(capsys, "eval", "pose-isometry", "--out", tmp_path / "ev", "--length", 64, "--pairs", 60)
    assert code == 0
    r = dict(((c, m), v) for c, m, v in res["rows"])[("all", "pearson_r")]
    assert r > 0.99
    assert (tmp_path / "ev" / "pose_isometry.csv").exists()
    monkeypatch.setenv("ZERNSHAPE_CACHE_DIR", str(tmp_path / "cache"))
    code, res = run(capsys, "basis", "--length", 64)
    assert code == 0 and res["N"] == 10
    assert (tmp_path / "cache" / "run_config.json").exists()
