import subprocess

import numpy as np
import pytest
from PIL import Image

from conftest import PRIMARY_CMD
from percep_exporter.datasets import (DatasetConversionError, convert_dataset,
                                      transcode_image)


def make_source(tmp_path, n_records=3, mode="L", size=48):
    """Tiny PNG source tree with a qa index."""
    src = tmp_path / "src"
    (src / "imgs").mkdir(parents=True)
    rng = np.random.default_rng(1)
    rows = ["ref,dist,dmos"]
    for i in range(n_records):
        shape = (size, size) if mode == "L" else (size, size, 3)
        ref = rng.integers(0, 256, shape).astype(np.uint8)
        dist = np.clip(ref.astype(int) + rng.integers(-30, 30, shape),
                       0, 255).astype(np.uint8)
        Image.fromarray(ref, mode).save(src / "imgs" / f"r{i}.png")
        Image.fromarray(dist, mode).save(src / "imgs" / f"d{i}.png")
        rows.append(f"imgs/r{i}.png,imgs/d{i}.png,{i + 1}.0")
    (src / "index.csv").write_text("\n".join(rows) + "\n")
    return src


def test_convert_qa_dataset(tmp_path):
    src = make_source(tmp_path)
    manifest = convert_dataset(src, "qa", tmp_path / "out")
    lines = manifest.read_text().strip().splitlines()
    assert lines[0] == "ref,dist,dmos"
    assert len(lines) == 4
    assert all(".pgm" in line for line in lines[1:])


def test_converted_images_pixel_identical(tmp_path):
    src = make_source(tmp_path, mode="RGB")
    manifest = convert_dataset(src, "qa", tmp_path / "out")
    first = manifest.read_text().splitlines()[1].split(",")
    converted = np.asarray(Image.open(manifest.parent / first[0]))
    original = np.asarray(Image.open(src / "imgs" / "r0.png"))
    assert np.array_equal(converted, original)


def test_subsample_limit(tmp_path):
    src = make_source(tmp_path, n_records=12)
    manifest = convert_dataset(src, "qa", tmp_path / "out", limit=10)
    assert len(manifest.read_text().strip().splitlines()) == 11


def test_unknown_kind_is_usage_error(tmp_path):
    with pytest.raises(DatasetConversionError, match="kind"):
        convert_dataset(tmp_path, "mos", tmp_path / "out")


def test_missing_files_enumerated(tmp_path):
    src = make_source(tmp_path)
    (src / "imgs" / "r0.png").unlink()
    (src / "imgs" / "d2.png").unlink()
    with pytest.raises(DatasetConversionError) as err:
        convert_dataset(src, "qa", tmp_path / "out")
    message = str(err.value)
    assert "r0.png" in message and "d2.png" in message


def test_non_8bit_source_refused(tmp_path):
    deep = Image.fromarray(np.zeros((8, 8), np.uint16))
    path = tmp_path / "deep.png"
    deep.save(path)
    with pytest.raises(DatasetConversionError, match="8-bit"):
        transcode_image(path, tmp_path, "deep")


def test_primary_evaluates_converted_manifest(tmp_path):
    """Cross-component: the percep CLI consumes the converted dataset."""
    src = make_source(tmp_path, n_records=3, mode="L", size=64)
    manifest = convert_dataset(src, "qa", tmp_path / "out")
    fx = tmp_path / "fx"
    subprocess.run([*PRIMARY_CMD, "gen-fixture", "--seed", "1",
                    "--out", str(fx)], check=True, capture_output=True)
    proc = subprocess.run(
        [*PRIMARY_CMD, "evaluate", "--protocol", "qa",
         "--model", str(fx / "fixture.json"),
         "--weights", str(fx / "fixture.tensors"), "--tap", "probe",
         "--records", str(manifest), "--threads", "1",
         "--out", str(tmp_path / "result.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "result.json").exists()
