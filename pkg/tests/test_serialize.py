import numpy as np
import pytest

from zernshape.errors import FormatError
from zernshape.geometry import GeometryCodec
from zernshape.joint import JointCodec
from zernshape.posecodec import PoseCodec
from zernshape.serialize import (bank_from_dict, complex_from_doc, complex_to_doc, csv_row, joint_from_doc,
                                 joint_to_doc, pose_from_doc, pose_to_doc, read_json, real_from_doc, real_to_doc,
                                 write_json)
from zernshape.shapes import GroundedShape, Pose, rasterize_primitive

MASK = rasterize_primitive("pentagon", None, 128)


def through_text(doc, tmp_path):
    write_json(tmp_path / "d.json", doc)
    return read_json(tmp_path / "d.json")


def test_real_roundtrip_is_bit_exact(tmp_path):
    enc = GeometryCodec(L=100).encode(MASK)
    back = real_from_doc(through_text(real_to_doc(enc, {"id": "x"}), tmp_path))
    assert np.array_equal(back.values, enc.values)
    assert (back.mode, back.N, back.lambda_r, back.propagated) == (enc.mode, enc.N, enc.lambda_r, enc.propagated)


def test_complex_roundtrip(tmp_path):
    z = GeometryCodec(L=64).encode_complex(MASK)
    back = complex_from_doc(through_text(complex_to_doc(z), tmp_path))
    assert np.array_equal(back.coefficients, z.coefficients)
    assert back.freqprop == z.freqprop


def test_pose_roundtrip_and_bank_regeneration(tmp_path):
    codec = PoseCodec(L=16)
    enc = codec.encode(Pose.from_parts(5 * np.eye(2), (3.0, -4.0)))
    back, header = pose_from_doc(through_text(pose_to_doc(enc, codec.bank), tmp_path))
    assert np.array_equal(back.values, enc.values) and back.band == enc.band
    bank = bank_from_dict(header["bank"])
    assert np.array_equal(bank.samples, codec.bank.samples)
    header["bank"]["params"][0][0] = 0.123
    with pytest.raises(FormatError):
        bank_from_dict(header["bank"])


def test_joint_roundtrip(tmp_path):
    jc = JointCodec(L=64, beta=0.7)
    j = jc.encode_joint(GroundedShape(MASK, Pose.from_parts(4 * np.eye(2), (0.0, 0.0))))
    back = joint_from_doc(through_text(joint_to_doc(j), tmp_path))
    assert np.array_equal(back.coefficients, j.coefficients)
    assert (back.beta, back.pose_bands, back.phase_scale, back.wrapped) == (j.beta, j.pose_bands,
                                                                             j.phase_scale, j.wrapped)


def test_kind_version_and_length_checked(tmp_path):
    doc = real_to_doc(GeometryCodec(L=16).encode(MASK))
    with pytest.raises(FormatError):
        pose_from_doc(doc)
    with pytest.raises(FormatError):
        real_from_doc({**doc, "version": 99})
    with pytest.raises(FormatError):
        real_from_doc({**doc, "values": doc["values"][:-1]})
    with pytest.raises(FormatError):
        real_from_doc({k: v for k, v in doc.items() if k != "values"})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        read_json(tmp_path / "bad.json")


def test_csv_row_exact():
    line = csv_row("a,b", [0.1, 1 / 3])
    assert line == '"a,b",0.1,0.3333333333333333\n'
    assert float(line.rstrip().rsplit(",", 1)[1]) == 1 / 3
