"""Text envelopes for encodings: a metadata header plus a flat list of decimal floats.

Floats are written with ``repr`` precision through JSON, so every document
round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import FreqPropMeta, GeometryEncoding, RealEncoding
from .joint import JointEncoding
from .posecodec import PoseEncoding, RadialWindowBank, build_radial_windows
from .zernike import grid_from_dict

ENVELOPE_VERSION = 1


def write_json(path, doc: dict) -> None:
    """Write-temp-then-rename JSON dump."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    tmp.replace(path)


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed document ({exc})") from exc


def _envelope(kind: str, header: dict, values) -> dict:
    return {"kind": kind, "version": ENVELOPE_VERSION, "header": header,
            "values": [float(v) for v in values]}


def _open(doc: dict, kind: str) -> tuple[dict, np.ndarray]:
    if doc.get("kind") != kind:
        raise FormatError(f"expected a {kind} document, got {doc.get('kind')!r}")
    if doc.get("version") != ENVELOPE_VERSION:
        raise FormatError(f"unsupported {kind} version {doc.get('version')}")
    try:
        return doc["header"], np.asarray(doc["values"], dtype=float)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed {kind} document") from exc


def real_to_doc(enc: RealEncoding, extra: dict | None = None) -> dict:
    h = {"mode": enc.mode, "N": enc.N, "M": enc.M, "L": enc.L, "lambda_r": enc.lambda_r,
         "lambda_a": enc.lambda_a, "propagated": enc.propagated, "grid": enc.grid_key,
         "layout_version": enc.layout_version, **(extra or {})}
    return _envelope("geometry", h, enc.values)


def real_from_doc(doc: dict) -> RealEncoding:
    h, v = _open(doc, "geometry")
    if len(v) != h["L"]:
        raise FormatError(f"declared length {h['L']} but {len(v)} values")
    return RealEncoding(v, h["mode"], h["N"], h["M"], h["lambda_r"], h["lambda_a"], h["propagated"],
                        h["grid"], h["layout_version"])


def pose_to_doc(enc: PoseEncoding, bank: RadialWindowBank, extra: dict | None = None) -> dict:
    h = {"band": enc.band, "orders": [int(n) for n in enc.orders], "L": enc.length,
         "bank": bank.to_dict(), **(extra or {})}
    return _envelope("pose", h, enc.values)


def pose_from_doc(doc: dict) -> tuple[PoseEncoding, dict]:
    h, v = _open(doc, "pose")
    return PoseEncoding(v, h["band"], np.asarray(h["orders"])), h


def bank_from_dict(d: dict) -> RadialWindowBank:
    """Regenerate a bank and check it matches the recorded bump parameters."""
    bank = build_radial_windows(d["K"], grid_from_dict(d["grid"]), d["seed"])
    if [list(map(list, p)) for p in bank.params] != d["params"]:
        raise FormatError("regenerated window bank disagrees with the recorded parameters")
    return bank


def joint_to_doc(enc: JointEncoding, extra: dict | None = None) -> dict:
    fp = enc.freqprop
    h = {"beta": enc.beta, "pose_bands": list(enc.pose_bands), "phase_scale": enc.phase_scale,
         "N": enc.N, "M": enc.M, "grid": enc.grid_key, "wrapped": enc.wrapped,
         "freqprop": None if fp is None else [fp.lambda_r, fp.lambda_a], **(extra or {})}
    inter = np.stack([enc.coefficients.real, enc.coefficients.imag], axis=1).ravel()
    return _envelope("joint", h, inter)


def joint_from_doc(doc: dict) -> JointEncoding:
    h, v = _open(doc, "joint")
    c = v[0::2] + 1j * v[1::2]
    fp = None if h["freqprop"] is None else FreqPropMeta(*h["freqprop"])
    return JointEncoding(c, h["beta"], tuple(h["pose_bands"]), h["phase_scale"], h["N"], h["M"], h["grid"],
                         h["wrapped"], fp)


def complex_to_doc(enc: GeometryEncoding) -> dict:
    fp = enc.freqprop
    h = {"N": enc.N, "M": enc.M, "grid": enc.grid_key,
         "freqprop": None if fp is None else [fp.lambda_r, fp.lambda_a]}
    inter = np.stack([enc.coefficients.real, enc.coefficients.imag], axis=1).ravel()
    return _envelope("geometry_complex", h, inter)


def complex_from_doc(doc: dict) -> GeometryEncoding:
    h, v = _open(doc, "geometry_complex")
    fp = None if h["freqprop"] is None else FreqPropMeta(*h["freqprop"])
    return GeometryEncoding(v[0::2] + 1j * v[1::2], h["N"], h["M"], h["grid"], fp)


def csv_row(name: str, values) -> str:
    """Single CSV line: name followed by the values."""
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([name] + [repr(float(v)) for v in values])
    return buf.getvalue()
