import json

import numpy as np
import pytest
from PIL import Image

from ssmc.datasets import (DatasetError, Preprocessing, export_image_manifest,
                           ingest_image_dataset, preprocess_image, read_image,
                           subsample_per_label, vectorize)


def test_decimation_keeps_first_of_each_stride():
    img = np.arange(16.0).reshape(4, 4)
    out = preprocess_image(img, Preprocessing(2))
    np.testing.assert_array_equal(out, [[img[0, 0], img[0, 2]], [img[2, 0], img[2, 2]]])


def test_crop():
    out = preprocess_image(np.arange(9.0).reshape(3, 3), Preprocessing(1, crop_rows=(0, 2)))
    assert out.shape == (2, 3)
    with pytest.raises(DatasetError):
        preprocess_image(np.zeros((3, 3)), Preprocessing(1, crop_cols=(0, 4)))
    with pytest.raises(ValueError):
        Preprocessing(0)
    with pytest.raises(ValueError):
        Preprocessing(1, crop_rows=(2, 1))


def test_vectorize_column_major():
    np.testing.assert_array_equal(vectorize(np.array([[1, 2], [3, 4]])), [1, 3, 2, 4])


def _write_p2(path, img):
    h, w = img.shape
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in img)
    path.write_text(f"P2\n{w} {h}\n255\n{body}\n")


def test_read_pgm_plain_and_binary(tmp_path):
    img = np.arange(12).reshape(3, 4) * 10
    _write_p2(tmp_path / "a.pgm", img)
    Image.fromarray(img.astype(np.uint8)).save(tmp_path / "b.pgm")
    np.testing.assert_array_equal(read_image(tmp_path / "a.pgm"), img)
    np.testing.assert_array_equal(read_image(tmp_path / "b.pgm"), img)


def test_read_errors(tmp_path):
    with pytest.raises(DatasetError):
        read_image(tmp_path / "missing.pgm")
    (tmp_path / "x.bmp").write_bytes(b"")
    with pytest.raises(DatasetError):
        read_image(tmp_path / "x.bmp")


def test_ingest_manifest(tmp_path):
    rng = np.random.default_rng(0)
    entries = []
    for j in range(4):
        img = rng.integers(1, 255, size=(8, 6))
        _write_p2(tmp_path / f"{j}.pgm", img)
        entries.append({"file": f"{j}.pgm", "label": "ab"[j % 2]})
    np.savetxt(tmp_path / "c.csv", rng.random((8, 6)), delimiter=",")
    entries.append({"file": "c.csv", "label": "b"})
    (tmp_path / "m.json").write_text(json.dumps({"entries": entries}))
    X, labels, shape = ingest_image_dataset(tmp_path / "m.json", Preprocessing(2, crop_cols=(0, 2)))
    assert shape == (4, 2) and X.shape == (8, 5)
    np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1, atol=1e-12)
    np.testing.assert_array_equal(labels, [0, 1, 0, 1, 1])


def test_ingest_shape_mismatch(tmp_path):
    np.savetxt(tmp_path / "a.csv", np.ones((2, 2)), delimiter=",")
    np.savetxt(tmp_path / "b.csv", np.ones((3, 2)), delimiter=",")
    (tmp_path / "m.json").write_text(json.dumps([{"file": "a.csv", "label": 0},
                                                 {"file": "b.csv", "label": 1}]))
    with pytest.raises(DatasetError):
        ingest_image_dataset(tmp_path / "m.json")
    with pytest.raises(DatasetError):
        ingest_image_dataset(tmp_path / "none.json")


def test_export_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 5))
    X /= np.linalg.norm(X, axis=0)
    m = export_image_manifest(X, [0, 0, 1, 1, 1], (3, 4), tmp_path)
    X2, labels, shape = ingest_image_dataset(m)
    assert shape == (3, 4)
    np.testing.assert_allclose(X2, X, atol=1e-15)
    np.testing.assert_array_equal(labels, [0, 0, 1, 1, 1])
    m = export_image_manifest(X, [0, 0, 1, 1, 1], (3, 4), tmp_path / "pgm", fmt="pgm")
    assert ingest_image_dataset(m)[0].shape == (12, 5)


def test_subsample_without_replacement():
    labels = np.repeat([0, 1, 2], 5)
    idx = subsample_per_label(labels, 3, np.random.default_rng(0))
    assert idx.size == 9 and np.unique(idx).size == 9
    np.testing.assert_array_equal(labels[idx], np.repeat([0, 1, 2], 3))
    with pytest.raises(DatasetError):
        subsample_per_label(labels, 6, np.random.default_rng(0))
