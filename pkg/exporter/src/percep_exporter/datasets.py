"""Convert locally-present benchmark datasets into percep eval manifests.

Licenses prevent bundling the QA/JND/2AFC corpora, so conversion starts
from an `index.csv` at the source root using the same column schema the
percep manifests use (qa: ref,dist,dmos; jnd: img1,img2,score;
2afc: ref,cand1,cand2,p), with image paths relative to the source root in
any PIL-readable 8-bit format. Images are transcoded losslessly to binary
PGM (grayscale) or PPM (RGB).
"""
import csv
from pathlib import Path

import numpy as np
from PIL import Image

KINDS = {
    "qa": ("ref", "dist", "dmos"),
    "jnd": ("img1", "img2", "score"),
    "2afc": ("ref", "cand1", "cand2", "p"),
}
_IMAGE_COLUMNS = {
    "qa": ("ref", "dist"),
    "jnd": ("img1", "img2"),
    "2afc": ("ref", "cand1", "cand2"),
}


class DatasetConversionError(Exception):
    pass


def transcode_image(src, dst_dir, stem):
    """Losslessly rewrite an 8-bit image as PGM (L) or PPM (RGB).

    Returns the written filename. Bit depths above 8 and alpha channels
    are refused rather than silently degraded.
    """
    with Image.open(src) as img:
        if img.mode == "P":
            img = img.convert("RGB")
        if img.mode == "L":
            suffix, data = ".pgm", np.asarray(img, dtype=np.uint8)
        elif img.mode == "RGB":
            suffix, data = ".ppm", np.asarray(img, dtype=np.uint8)
        else:
            raise DatasetConversionError(
                f"{src}: mode {img.mode!r} is not an 8-bit L/RGB image"
            )
    name = stem + suffix
    path = Path(dst_dir) / name
    if suffix == ".pgm":
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode()
    else:
        header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode()
    path.write_bytes(header + data.tobytes())
    return name


def convert_dataset(src_root, kind, out_dir, limit=None):
    """Transcode the indexed dataset and write a percep manifest.

    Missing source files are enumerated together in one error. Returns the
    manifest path.
    """
    if kind not in KINDS:
        raise DatasetConversionError(
            f"unknown dataset kind {kind!r} (supported: {sorted(KINDS)})"
        )
    src_root = Path(src_root)
    index = src_root / "index.csv"
    if not index.exists():
        raise DatasetConversionError(f"missing index file {index}")
    columns = KINDS[kind]
    with open(index, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        miss_cols = [c for c in columns if c not in header]
        if miss_cols:
            raise DatasetConversionError(
                f"{index}: missing column(s) {', '.join(miss_cols)}"
            )
        rows = list(reader)
    if limit is not None:
        rows = rows[:limit]
    if not rows:
        raise DatasetConversionError(f"{index}: no records")

    missing = sorted({
        str(src_root / row[col])
        for row in rows for col in _IMAGE_COLUMNS[kind]
        if not (src_root / row[col]).exists()
    })
    if missing:
        raise DatasetConversionError(
            "missing source image(s):\n  " + "\n  ".join(missing)
        )

    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    converted = {}

    def convert(rel):
        if rel not in converted:
            stem = Path(rel).with_suffix("").as_posix().replace("/", "_")
            converted[rel] = "images/" + transcode_image(
                src_root / rel, images_dir, stem)
        return converted[rel]

    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            record = [convert(row[c]) if c in _IMAGE_COLUMNS[kind] else row[c]
                      for c in columns]
            writer.writerow(record)
    return manifest
