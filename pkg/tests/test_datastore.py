import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vsgraph.datastore import (
    DatasetManifest,
    load_labels,
    load_manifest,
    load_matrix,
    parse_labels,
    save_labels,
    save_manifest,
    save_matrix,
)
from vsgraph.errors import ContiguityError, FormatError, LengthError, MatrixWriteError, ValidationError


def test_one_by_one_layout(tmp_path):
    path = tmp_path / "m.vsgm"
    save_matrix(np.zeros((1, 1), dtype=np.float32), path)
    raw = path.read_bytes()
    # magic + u32 version + two u64 dims + one f32
    assert len(raw) == 4 + 4 + 16 + 4
    assert raw[:4] == b"VSGM"
    assert struct.unpack("<IQQ", raw[4:24]) == (1, 1, 1)
    assert np.array_equal(load_matrix(path), np.zeros((1, 1)))


def test_zeros_round_trip(tmp_path):
    x = np.zeros((2, 3), dtype=np.float32)
    save_matrix(x, tmp_path / "z.vsgm")
    assert np.array_equal(load_matrix(tmp_path / "z.vsgm"), x)


def test_identity_loads(tmp_path):
    save_matrix(np.eye(2), tmp_path / "i.vsgm")
    assert load_matrix(tmp_path / "i.vsgm").tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_save_is_deterministic(tmp_path):
    x = np.random.default_rng(7).normal(size=(1000, 128)).astype(np.float32)
    save_matrix(x, tmp_path / "a.vsgm")
    save_matrix(x, tmp_path / "b.vsgm")
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()  # noqa: E731
    assert digest(tmp_path / "a.vsgm") == digest(tmp_path / "b.vsgm")


def test_little_endian_payload(tmp_path):
    save_matrix(np.array([[1.5, -2.0]]), tmp_path / "m.vsgm")
    raw = (tmp_path / "m.vsgm").read_bytes()
    assert struct.unpack("<2f", raw[24:]) == (1.5, -2.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(0, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=32)))
def test_round_trip_bit_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("rt") / "x.vsgm"
    save_matrix(x, path)
    y = load_matrix(path)
    assert y.shape == x.shape
    assert y.tobytes() == x.tobytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.vsgm"
    save_matrix(np.eye(2), path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FormatError, match="magic"):
        load_matrix(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.vsgm"
    header = struct.pack("<4sIQQ", b"VSGM", 1, 4, 4)
    path.write_bytes(header + np.zeros(8, dtype="<f4").tobytes())
    with pytest.raises(LengthError):
        load_matrix(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "h.vsgm"
    path.write_bytes(b"VSGM\x01\x00")
    with pytest.raises(LengthError):
        load_matrix(path)


def test_nan_payload_rejected(tmp_path):
    path = tmp_path / "nan.vsgm"
    header = struct.pack("<4sIQQ", b"VSGM", 1, 1, 2)
    path.write_bytes(header + np.array([1.0, np.nan], dtype="<f4").tobytes())
    with pytest.raises(ValidationError):
        load_matrix(path)


def test_nan_not_saved(tmp_path):
    with pytest.raises(ValidationError):
        save_matrix(np.array([[np.inf]]), tmp_path / "x.vsgm")


def test_write_error_names_path(tmp_path):
    target = tmp_path / "missing_dir" / "x.vsgm"
    with pytest.raises(MatrixWriteError, match="missing_dir"):
        save_matrix(np.eye(2), target)


def test_loaded_matrix_is_read_only(tmp_path):
    save_matrix(np.eye(2), tmp_path / "i.vsgm")
    with pytest.raises(ValueError):
        load_matrix(tmp_path / "i.vsgm")[0, 0] = 3


# ---------------------------------------------------------------- labels


def test_single_labels():
    assert parse_labels("sample_id,label\n0,3\n1,0\n", 4).tolist() == [3, 0]


def test_label_out_of_range_names_row():
    with pytest.raises(ValidationError, match="line 2"):
        parse_labels("sample_id,label\n0,5\n", 4)


def test_multi_labels():
    out = parse_labels("sample_id,labels\n0,1;3\n", 4)
    assert out.tolist() == [[0, 1, 0, 1]]


def test_multi_label_empty_row():
    out = parse_labels("sample_id,labels\n0,\n1,2\n", 3)
    assert out.tolist() == [[0, 0, 0], [0, 0, 1]]


def test_gap_in_ids():
    with pytest.raises(ContiguityError):
        parse_labels("sample_id,label\n0,1\n2,1\n", 4)


def test_duplicate_ids():
    with pytest.raises(ContiguityError):
        parse_labels("sample_id,label\n0,1\n0,2\n", 4)


def test_unordered_ids_are_sorted():
    assert parse_labels("sample_id,label\n1,2\n0,3\n", 4).tolist() == [3, 2]


@pytest.mark.parametrize("text", ["", "id,label\n0,1\n", "sample_id,label\n0,x\n", "sample_id,label\n0\n"])
def test_malformed_label_files(text):
    with pytest.raises(FormatError):
        parse_labels(text, 4)


def test_label_file_round_trip(tmp_path):
    y = np.array([2, 0, 1, 1])
    save_labels(y, tmp_path / "y.csv")
    assert (tmp_path / "y.csv").read_text().startswith("sample_id,label\n0,2\n")
    assert load_labels(tmp_path / "y.csv", 3).tolist() == y.tolist()
    Y = np.array([[1, 0, 1], [0, 0, 0]], dtype=np.uint8)
    save_labels(Y, tmp_path / "Y.csv")
    assert load_labels(tmp_path / "Y.csv", 3).tolist() == Y.tolist()


# -------------------------------------------------------------- manifest


def _write_dataset(d, n=4, c=2, p_c=True):
    save_matrix(np.ones((n, 3)), d / "f.vsgm")
    save_matrix(np.ones((n, 2)), d / "t.vsgm")
    save_matrix(np.ones((c, 2)), d / "l.vsgm")
    save_labels(np.arange(n) % c, d / "y.csv")
    if p_c:
        save_matrix(np.full((n, c), 1.0 / c), d / "pc.vsgm")
    return DatasetManifest(d / "f.vsgm", d / "t.vsgm", d / "l.vsgm", d / "y.csv", n, c,
                           cnn_labels=d / "pc.vsgm" if p_c else None)


def test_manifest_round_trip(tmp_path):
    m = _write_dataset(tmp_path)
    save_manifest(m, tmp_path / "manifest.json")
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["features"] == "f.vsgm"
    assert {"features", "metadata_embeddings", "label_descriptions", "labels",
            "sample_count", "class_count"} <= set(doc)
    back = load_manifest(tmp_path / "manifest.json")
    back.validate()
    assert back.features == tmp_path / "f.vsgm"
    assert back.embedding_dims == {"features": 3, "metadata": 2}


def test_manifest_count_mismatch(tmp_path):
    m = _write_dataset(tmp_path)
    m.sample_count = 5
    with pytest.raises(ValidationError, match="sample_count"):
        m.validate()
    m.sample_count = 4
    m.class_count = 3
    with pytest.raises(ValidationError):
        m.validate()


def test_manifest_missing_key(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"features": "f.vsgm"}))
    with pytest.raises(ValidationError, match="missing"):
        load_manifest(tmp_path / "m.json")
