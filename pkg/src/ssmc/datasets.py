"""Image dataset ingestion.

A manifest is a JSON document ``{"entries": [{"file": ..., "label": ...}, ...]}``
(a bare list of entries is also accepted). Files are portable graymaps
(``.pgm``, P2 or P5) or CSV matrices; relative paths resolve against the
manifest's directory. Labels may be any JSON scalars and are mapped to
0-based integers in order of first appearance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class DatasetError(ValueError):
    """Missing file, unsupported format or inconsistent image shapes."""


@dataclass(frozen=True)
class Preprocessing:
    """Decimation then crop; crop ranges are 0-based, half-open ``[start, stop)``."""

    downsample_factor: int = 1
    crop_rows: tuple | None = None
    crop_cols: tuple | None = None

    def __post_init__(self):
        if int(self.downsample_factor) < 1:
            raise ValueError("downsample_factor must be >= 1")
        for rng in (self.crop_rows, self.crop_cols):
            if rng is not None and (len(rng) != 2 or not 0 <= rng[0] < rng[1]):
                raise ValueError(f"bad crop range {rng}")

    @classmethod
    def from_dict(cls, d: dict | None):
        d = dict(d or {})
        for key in ("crop_rows", "crop_cols"):
            if d.get(key) is not None:
                d[key] = tuple(int(v) for v in d[key])
        return cls(**d)


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        with Image.open(path) as im:
            if im.format not in ("PPM",) or im.mode not in ("L", "I", "I;16", "I;16B"):
                raise DatasetError(f"{path}: not a graymap")
            return np.asarray(im, dtype=float)
    if suffix in (".csv", ".txt"):
        return np.loadtxt(path, delimiter=",", ndmin=2)
    raise DatasetError(f"{path}: unsupported format {suffix!r}")


def preprocess_image(img, prep: Preprocessing) -> np.ndarray:
    """Keep every ``f``-th row and column starting at the first, then crop."""
    f = int(prep.downsample_factor)
    out = np.asarray(img, dtype=float)[::f, ::f]
    if prep.crop_rows is not None:
        r0, r1 = prep.crop_rows
        if r1 > out.shape[0]:
            raise DatasetError(f"crop rows {prep.crop_rows} exceed {out.shape[0]} rows")
        out = out[r0:r1]
    if prep.crop_cols is not None:
        c0, c1 = prep.crop_cols
        if c1 > out.shape[1]:
            raise DatasetError(f"crop cols {prep.crop_cols} exceed {out.shape[1]} cols")
        out = out[:, c0:c1]
    return out


def vectorize(img) -> np.ndarray:
    """Column-major vectorization: pixel (r, c) lands at ``r + n1 * c``."""
    return np.asarray(img).ravel(order="F")


def read_manifest(manifest_path):
    path = Path(manifest_path)
    if not path.exists():
        raise DatasetError(f"missing manifest: {path}")
    doc = json.loads(path.read_text())
    entries = doc["entries"] if isinstance(doc, dict) else doc
    if not entries:
        raise DatasetError("manifest lists no images")
    return path.parent, entries


def ingest_image_dataset(manifest_path, prep: Preprocessing | None = None):
    """Load, preprocess and unit-normalize every image of a manifest.

    Returns ``(X, labels, shape)`` with one column per image, integer
    labels and the common image shape after preprocessing.
    """
    prep = prep or Preprocessing()
    root, entries = read_manifest(manifest_path)
    cols, raw_labels, shape = [], [], None
    for e in entries:
        img = preprocess_image(read_image(root / e["file"]), prep)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise DatasetError(f"{e['file']}: shape {img.shape} after preprocessing, "
                               f"expected {shape}")
        v = vectorize(img)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise DatasetError(f"{e['file']}: image is identically zero")
        cols.append(v / nrm)
        raw_labels.append(e["label"])
    index = {}
    labels = np.array([index.setdefault(lab, len(index)) for lab in raw_labels])
    return np.column_stack(cols), labels, shape


def export_image_manifest(X, labels, shape, directory, fmt: str = "csv") -> Path:
    """Write each column of ``X`` as an image of ``shape`` plus a manifest.

    ``fmt="csv"`` stores exact values; ``fmt="pgm"`` rescales each image
    to 16-bit gray levels and is therefore lossy.
    """
    out = Path(directory)
    (out / "images").mkdir(parents=True, exist_ok=True)
    X = np.asarray(X, dtype=float)
    n1, n2 = shape
    if X.shape[0] != n1 * n2:
        raise DatasetError("shape does not match the column length")
    entries = []
    for j, lab in enumerate(np.asarray(labels).tolist()):
        img = X[:, j].reshape((n1, n2), order="F")
        name = f"images/img_{j:05d}.{fmt}"
        if fmt == "csv":
            np.savetxt(out / name, img, delimiter=",", fmt="%.17e")
        elif fmt == "pgm":
            lo, hi = img.min(), img.max()
            scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
            Image.fromarray(np.round(scaled * 65535).astype(np.uint16)).save(out / name)
        else:
            raise DatasetError(f"unsupported format {fmt!r}")
        entries.append({"file": name, "label": lab})
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"entries": entries}, indent=1))
    return manifest


def subsample_per_label(labels, per_label: int, rng, subjects=None) -> np.ndarray:
    """Indices of ``per_label`` items per label, drawn without replacement.

    Returned sorted by label, then by original index.
    """
    labels = np.asarray(labels)
    subjects = np.unique(labels) if subjects is None else subjects
    picked = []
    for s in subjects:
        idx = np.flatnonzero(labels == s)
        if per_label > idx.size:
            raise DatasetError(f"label {s}: {per_label} items requested, {idx.size} available")
        picked.append(np.sort(rng.choice(idx, size=per_label, replace=False)))
    return np.concatenate(picked)
