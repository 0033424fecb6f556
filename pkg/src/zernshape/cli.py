"""Batch command line: ``zernshape {basis,corpus,encode,decode,eval}``.

Parameters come from built-in defaults, then an optional JSON config file
(``--config``), then explicit flags.  Every output directory receives a
``run_config.json`` snapshot and a ``FORMAT_VERSION`` marker.  Failures print
one JSON record on stderr and exit with the error's code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as cp
from . import harness as hz
from . import serialize as ser
from .errors import DomainError, FormatError, FrameError, IrreversibleError, PathError, ZernshapeError
from .geometry import COMPLEX2REAL, MAGNITUDE, GeometryCodec, order_for_length
from .joint import JointCodec, flatten_joint
from .posecodec import PoseCodec
from .shapes import WORLD, GroundedShape, decompose, read_pgm, write_pgm
from .zernike import default_grid, disk_cached_table, table_path

FORMAT_VERSION = 1
CACHE_ENV = "ZERNSHAPE_CACHE_DIR"
EVAL_KINDS = ("reconstruction", "discriminability", "retrieval", "pose-isometry", "sweeps")

DEFAULTS = {
    "resolution": 300, "length": 512, "lambda_r": 0.6, "lambda_a": 0.6, "beta": 1.0, "band": 2,
    "windows": 6, "seed": 0, "mode": "geometry", "emit": "native", "threshold": 0.2,
    "flatten": COMPLEX2REAL, "per_depth": 100, "depths": [1, 10], "limit": None, "n_aug": 50,
    "classes": 4, "pairs": 200,
}


@dataclass
class RunConfig:
    """Everything a run depends on; written beside its outputs."""

    command: str
    input: str | None = None
    output: str | None = None
    kind: str | None = None
    params: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DomainError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zernshape", description="Zernike shape codec: basis, corpus, encode, decode, eval.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        # None marks "not given" so config-file values can fill in.
        sp.add_argument("--config", help="JSON file of parameter defaults; flags take precedence")
        sp.add_argument("--resolution", type=int)
        sp.add_argument("--length", type=int)
        sp.add_argument("--lambda-r", type=float)
        sp.add_argument("--lambda-a", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--band", type=int)
        sp.add_argument("--windows", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=("geometry", "pose", "joint"))
        sp.add_argument("--emit", choices=("csv", "native"))
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--flatten", choices=(COMPLEX2REAL, MAGNITUDE))

    sp = sub.add_parser("basis", help="build and cache the basis table for a length")
    common(sp)
    sp.add_argument("--out", help="table directory (default: $%s)" % CACHE_ENV)

    sp = sub.add_parser("corpus", help="generate a seeded shape corpus")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--per-depth", type=int)
    sp.add_argument("--depths", type=int, nargs=2, metavar=("LO", "HI"))

    sp = sub.add_parser("encode", help="encode a corpus or a directory of PGM masks")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("decode", help="reconstruct masks or poses from native encodings")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("eval", help="run a harness experiment")
    common(sp)
    sp.add_argument("kind", choices=EVAL_KINDS)
    sp.add_argument("input", nargs="?")
    sp.add_argument("--out", required=True)
    sp.add_argument("--limit", type=int, help="entries per depth (reconstruction)")
    sp.add_argument("--n-aug", type=int)
    sp.add_argument("--classes", type=int)
    sp.add_argument("--pairs", type=int)
    return p


def resolve_params(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    params = dict(DEFAULTS)
    if args.config:
        doc = ser.read_json(_existing(args.config))
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")
        params.update(doc)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    return params


def _existing(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise PathError(f"{path}: no such file or directory")
    return path


def _outdir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PathError(f"{path}: cannot create output directory ({exc.strerror})") from exc
    return path


def _snapshot(out: Path, cfg: RunConfig) -> None:
    ser.write_json(out / "run_config.json", cfg.to_dict())
    tmp = out / "FORMAT_VERSION.tmp"
    tmp.write_text(f"{FORMAT_VERSION}\n")
    tmp.replace(out / "FORMAT_VERSION")


def _cache_dir():
    return os.environ.get(CACHE_ENV) or None


def _geometry_codec(params: dict) -> GeometryCodec:
    codec = GeometryCodec(params["length"], params["flatten"], params["lambda_r"], params["lambda_a"])
    disk_cached_table(codec.N, codec.N, None, _cache_dir())
    return codec


# --------------------------------------------------------------------- inputs

def load_items(path, resolution: int = 300) -> list:
    """(id, GroundedShape or unit-disk ShapeMask) pairs from a corpus or PGM directory.

    World-frame graymaps are split into geometry and pose; unit-disk ones
    carry geometry only.
    """
    path = _existing(path)
    if (path / "manifest.json").exists():
        return [(e.id, e.shape) for e in cp.load_corpus(path).entries]
    files = sorted(path.glob("*.pgm")) if path.is_dir() else [path]
    if not files:
        raise PathError(f"{path}: no .pgm masks found")
    items = []
    for f in files:
        mask = read_pgm(f)
        item = decompose(mask, mask.bounds, resolution) if mask.frame == WORLD else mask
        items.append((f.stem, item))
    return items


def _geometry_of(item):
    return item.geometry if isinstance(item, GroundedShape) else item


def _grounded(name, item) -> GroundedShape:
    if not isinstance(item, GroundedShape):
        raise FrameError(f"{name}: pose needs a world-frame mask or a corpus entry")
    return item


# ------------------------------------------------------------------ commands

def cmd_basis(args, params) -> dict:
    directory = args.out or _cache_dir()
    if directory is None:
        raise PathError(f"give --out or set {CACHE_ENV}")
    N = order_for_length(params["length"], params["flatten"])
    out = _outdir(directory)
    tab = disk_cached_table(N, N, default_grid(), out)
    _snapshot(out, RunConfig("basis", None, str(out), None, params))
    return {"table": str(table_path(out, N, N, tab.grid)), "N": N, "modes": len(tab)}


def cmd_corpus(args, params) -> dict:
    lo, hi = params["depths"]
    corpus = cp.generate_corpus(range(lo, hi + 1), params["per_depth"], params["seed"],
                                cp.CorpusConfig(resolution=params["resolution"]))
    out = _outdir(args.out)
    cp.write_corpus(corpus, out)
    _snapshot(out, RunConfig("corpus", None, str(out), None, params))
    return {"entries": len(corpus.entries), "out": str(out)}


def cmd_encode(args, params) -> dict:
    items = load_items(args.input, params["resolution"])
    mode, L = params["mode"], params["length"]
    out = _outdir(args.out)
    names, rows, docs = [], [], []
    if mode == "geometry":
        codec = _geometry_codec(params)
        for name, item in items:
            enc = codec.encode(_geometry_of(item))
            names.append(name)
            rows.append(enc.values)
            docs.append(ser.real_to_doc(enc))
    elif mode == "pose":
        codec = PoseCodec(L, params["windows"], params["band"], params["seed"])
        for name, item in items:
            pose = _grounded(name, item).pose
            enc = codec.encode(pose)
            names.append(name)
            rows.append(enc.values)
            docs.append(ser.pose_to_doc(enc, codec.bank, {"norm": pose.norm,
                                                         "world_bounds": list(pose.world_bounds)}))
    else:
        codec = JointCodec(L, params["beta"], params["windows"], params["seed"], None,
                           params["lambda_r"], params["lambda_a"])
        disk_cached_table(codec.N, codec.N, None, _cache_dir())
        for name, item in items:
            shape = _grounded(name, item)
            joint = codec.encode_joint(shape)
            names.append(name)
            rows.append(flatten_joint(joint, L).values)
            docs.append(ser.joint_to_doc(joint, {"L": L}))
    if params["emit"] == "csv":
        hz.export_encodings(np.array(rows), names, out / "encodings.csv")
    else:
        enc_dir = _outdir(out / "encodings")
        for name, doc in zip(names, docs):
            ser.write_json(enc_dir / f"{name}.json", doc)
    _snapshot(out, RunConfig("encode", str(args.input), str(out), mode, params))
    return {"encoded": len(names), "mode": mode, "emit": params["emit"], "out": str(out)}


def cmd_decode(args, params) -> dict:
    src = _existing(args.input)
    enc_dir = src / "encodings"
    if not enc_dir.is_dir():
        if (src / "encodings.csv").exists():
            raise FormatError(f"{src}: CSV is an export format; decode needs native encodings")
        raise PathError(f"{src}: no encodings/ directory")
    out = _outdir(args.out)
    n, kind = 0, None
    for f in sorted(enc_dir.glob("*.json")):
        doc = ser.read_json(f)
        kind = doc.get("kind")
        if kind == "geometry":
            real = ser.real_from_doc(doc)
            codec = GeometryCodec(real.L, real.mode, real.lambda_r, real.lambda_a)
            mask = codec.reconstruct_mask(real, params["resolution"], params["threshold"])
            write_pgm(mask, _outdir(out / "masks") / f"{f.stem}.pgm")
        elif kind == "pose":
            enc, h = ser.pose_from_doc(doc)
            bank = ser.bank_from_dict(h["bank"])
            codec = PoseCodec(h["L"], bank.K, enc.band, bank.seed)
            pose = codec.decode(enc, h["norm"], h["world_bounds"])
            ser.write_json(_outdir(out / "poses") / f"{f.stem}.json",
                           {**pose.to_dict(), "vector": [float(v) for v in pose.flattened]})
        elif kind == "joint":
            raise IrreversibleError(f"{f.name}: a joint code mixes geometry and pose; decode needs one of them")
        else:
            raise FormatError(f"{f.name}: unknown encoding kind {kind!r}")
        n += 1
    _snapshot(out, RunConfig("decode", str(src), str(out), kind, params))
    return {"decoded": n, "kind": kind, "out": str(out)}


def _corpus_arg(args) -> cp.Corpus:
    if not args.input:
        raise PathError(f"eval {args.kind} needs a corpus directory")
    return cp.load_corpus(_existing(args.input))


def _class_sources(corpus: cp.Corpus, k: int, depth: int | None = None) -> list:
    """First ``k`` shapes at ``depth`` (default: the deepest level present)."""
    depth = max(e.recipe.depth for e in corpus.entries) if depth is None else depth
    entries = corpus.by_depth(depth)
    if len(entries) < k:
        raise DomainError(f"need {k} shapes at depth {depth}, corpus has {len(entries)}")
    return [e.shape.geometry for e in entries[:k]]


def cmd_eval(args, params) -> dict:
    out = _outdir(args.out)
    kind = args.kind
    if kind == "reconstruction":
        corpus = _corpus_arg(args)
        entries = corpus.entries
        if params["limit"]:
            entries = [e for d in sorted(corpus.counts) for e in corpus.by_depth(d)[: params["limit"]]]
        reps = [hz.reconstruction_curve(entries, hz.STANDARD_LENGTHS, params["lambda_r"], params["lambda_a"],
                                        corpus.seed)]
    elif kind in ("discriminability", "retrieval"):
        masks, labels = hz.augmented_set(_class_sources(_corpus_arg(args), params["classes"]),
                                         params["n_aug"], params["seed"])
        codec = _geometry_codec(params)
        X = hz.encode_all(masks, codec)
        reps = [hz.discriminability(X, labels, parameters={"L": codec.L, "mode": codec.mode})
                if kind == "discriminability" else hz.retrieval_map(X, labels)]
    elif kind == "pose-isometry":
        rng = np.random.default_rng(params["seed"])
        P = hz.random_pose_vectors(2 * params["pairs"], params["windows"], rng)
        codec = PoseCodec(params["length"], params["windows"], params["band"], params["seed"])
        reps = [hz.pose_isometry(zip(P[0::2], P[1::2]), codec)]
    else:
        corpus = _corpus_arg(args)
        geoms = _class_sources(corpus, params["classes"])
        masks, labels = hz.augmented_set(geoms, params["n_aug"], params["seed"])
        # the emphasis grid uses shallow geometries, depth 2 when the corpus has it
        shallow = _class_sources(corpus, params["classes"], 2 if corpus.counts.get(2) else None)
        shapes, gl, pl = hz.quadrant_grid(shallow)
        reps = [hz.lambda_sweep(masks, labels, [0.0, 0.3, 0.6, 1.0, 1.4, 1.8], params["length"]),
                hz.emphasis_sweep(shapes, gl, pl, [0.2, 0.6, 1.0, 1.4, 1.8], params["length"],
                                  seed=params["seed"])]
    paths = [str(r.write(out)) for r in reps]
    _snapshot(out, RunConfig("eval", args.input, str(out), kind, params))
    return {"reports": paths, "rows": [list(r) for rep in reps for r in rep.rows]}


COMMANDS = {"basis": cmd_basis, "corpus": cmd_corpus, "encode": cmd_encode, "decode": cmd_decode,
            "eval": cmd_eval}


def _fail(exc: ZernshapeError) -> int:
    rec = {"error": type(exc).__name__, "code": exc.code, "message": str(exc)}
    print(json.dumps(rec), file=sys.stderr)
    return exc.code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params = resolve_params(args)
        result = COMMANDS[args.command](args, params)
    except OSError as exc:
        if not isinstance(exc, ZernshapeError):
            exc = PathError(str(exc))
        return _fail(exc)
    except ZernshapeError as exc:
        return _fail(exc)
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
