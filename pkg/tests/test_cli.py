import json
import re

import numpy as np
import pytest

from trafficgrid.cli import RunConfig, main
from trafficgrid.imaging import GridSpec, Image, Roi, decode_netpbm, read_netpbm, write_netpbm
from trafficgrid.pipeline import (
    CellLabel, SyntheticSceneSpec, generate_synthetic_frame, load_dataset, read_manifest,
    write_manifest,
)
from trafficgrid.svm import LinearSvmModel, save_model


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth", "--out", str(out), "--count", "6", "--vehicles", "20", "--seed", "11"]) == 0
    return out


def manifest_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return read_manifest(fh)


def test_synth_counts(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--out", str(out), "--count", "5", "--vehicles", "7", "--seed", "3"]) == 0
    frames = sorted(out.glob("*.pgm"))
    assert len(frames) == 5
    assert all(read_netpbm(f).channels == 1 for f in frames)
    assert all(f.read_bytes().startswith(b"P5") for f in frames)
    labels = manifest_rows(out / "manifest.csv")
    assert len(labels) == 5 * 72
    assert sum(l.label == "traffic" for l in labels) == 5 * 7


def test_synth_fixed_cells(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--out", str(out), "--count", "2", "--vehicle-cells", "0:0,3:4"]) == 0
    labels = manifest_rows(out / "manifest.csv")
    assert {(l.frame_id, l.row, l.col) for l in labels if l.label == "traffic"} == \
        {(f, r, c) for f in ("frame_0000", "frame_0001") for r, c in ((0, 0), (3, 4))}


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--out", str(tmp_path / name), "--count", "3", "--seed", "9"])
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_extract_small(tmp_path, synth_dir, capsys):
    man = tmp_path / "m.csv"
    labels = [CellLabel("frame_0000", 0, 0, "road"), CellLabel("frame_0000", 1, 1, "traffic"),
              CellLabel("frame_0001", 2, 2, "road"), CellLabel("frame_0001", 3, 3, "road")]
    with open(man, "w", newline="") as fh:
        write_manifest(labels, fh)
    out = tmp_path / "ds.bin"
    rc = main(["extract", "--frames", str(synth_dir), "--manifest", str(man), "--out", str(out)])
    assert rc == 0
    ds = load_dataset(out.read_bytes())
    assert len(ds) == 4 and ds.dim == 1594
    assert "rows: 4 traffic: 1 road: 3" in capsys.readouterr().out


def test_extract_missing_frame(tmp_path, synth_dir, capsys):
    man = tmp_path / "m.csv"
    man.write_text("frame_id,row,col,label\nghost_frame,0,0,road\n")
    rc = main(["extract", "--frames", str(synth_dir), "--manifest", str(man), "--out", str(tmp_path / "x")])
    assert rc == 3
    assert "ghost_frame" in capsys.readouterr().err


def test_extract_empty_manifest(tmp_path, synth_dir):
    man = tmp_path / "m.csv"
    man.write_text("frame_id,row,col,label\n")
    assert main(["extract", "--frames", str(synth_dir), "--manifest", str(man), "--out", str(tmp_path / "x")]) == 3


def test_extract_io_errors(tmp_path, synth_dir):
    assert main(["extract", "--frames", str(synth_dir), "--manifest", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["extract", "--frames", str(tmp_path / "nodir"), "--manifest", str(synth_dir / "manifest.csv"),
                 "--out", str(tmp_path / "x")]) == 2


def test_extract_malformed_frame(tmp_path, synth_dir):
    (synth_dir / "frame_0000.pgm").write_bytes(b"P5 352 396 255\n" + bytes(10))
    assert main(["extract", "--frames", str(synth_dir), "--manifest", str(synth_dir / "manifest.csv"),
                 "--out", str(tmp_path / "x")]) == 3


@pytest.fixture
def dataset_400(tmp_path, synth_dir):
    labels = manifest_rows(synth_dir / "manifest.csv")[:400]
    man = tmp_path / "m400.csv"
    with open(man, "w", newline="") as fh:
        write_manifest(labels, fh)
    out = tmp_path / "ds400.bin"
    assert main(["extract", "--frames", str(synth_dir), "--manifest", str(man), "--out", str(out)]) == 0
    return out


def test_train_synthetic(tmp_path, dataset_400, capsys):
    m1, m2 = tmp_path / "a.gsvm", tmp_path / "b.gsvm"
    assert main(["train", "--dataset", str(dataset_400), "--out", str(m1), "--seed", "5"]) == 0
    out = capsys.readouterr().out
    acc = float(re.search(r"accuracy: ([0-9.]+)", out).group(1))
    assert acc >= 0.95
    assert "test rows: 80" in out
    assert main(["train", "--dataset", str(dataset_400), "--out", str(m2), "--seed", "5"]) == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_train_single_class(tmp_path, synth_dir):
    man = tmp_path / "m.csv"
    labels = [l for l in manifest_rows(synth_dir / "manifest.csv") if l.label == "traffic"]
    with open(man, "w", newline="") as fh:
        write_manifest(labels, fh)
    ds = tmp_path / "ds.bin"
    assert main(["extract", "--frames", str(synth_dir), "--manifest", str(man), "--out", str(ds)]) == 0
    assert main(["train", "--dataset", str(ds), "--out", str(tmp_path / "m")]) == 3


def test_train_bad_dataset(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert main(["train", "--dataset", str(bad), "--out", str(tmp_path / "m")]) == 3
    assert main(["train", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path / "m")]) == 2


@pytest.fixture
def frame_file(tmp_path):
    cells = {(0, 0), (1, 3), (2, 5), (3, 1), (4, 7), (5, 2), (6, 6), (7, 0), (8, 4), (8, 7)}
    img, _ = generate_synthetic_frame(SyntheticSceneSpec(vehicle_cells=cells, noise_seed=77))
    path = tmp_path / "cam.pgm"
    write_netpbm(path, img)
    return path


def _model_file(tmp_path, model, name="m.gsvm"):
    p = tmp_path / name
    p.write_bytes(save_model(model))
    return p


def test_estimate_constant(tmp_path, frame_file, capsys):
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, 1.0))
    rep = tmp_path / "r.json"
    assert main(["estimate", "--model", str(model), "--frame", str(frame_file), "--out", str(rep)]) == 0
    obj = json.loads(rep.read_text())
    assert obj["density"] == 1.0 and obj["traffic_cells"] == 72 and obj["frame_id"] == "cam"
    assert "72/72 1.000000" in capsys.readouterr().out


def test_estimate_dimension_mismatch(tmp_path, frame_file):
    model = _model_file(tmp_path, LinearSvmModel.constant(1000, 1.0))
    assert main(["estimate", "--model", str(model), "--frame", str(frame_file), "--out", str(tmp_path / "r")]) == 4


def test_estimate_trained(tmp_path, frame_file, synthetic_model):
    model = _model_file(tmp_path, synthetic_model)
    rep = tmp_path / "r.json"
    assert main(["estimate", "--model", str(model), "--frame", str(frame_file), "--out", str(rep),
                 "--threads", "2"]) == 0
    assert 9 <= json.loads(rep.read_text())["traffic_cells"] <= 11


def test_estimate_bad_model(tmp_path, frame_file):
    bad = tmp_path / "bad.gsvm"
    bad.write_bytes(b"XXXX" + bytes(30))
    assert main(["estimate", "--model", str(bad), "--frame", str(frame_file), "--out", str(tmp_path / "r")]) == 3


def test_annotate_all_road(tmp_path, frame_file):
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, -1.0))
    out = tmp_path / "o.ppm"
    assert main(["annotate", "--model", str(model), "--frame", str(frame_file), "--out", str(out)]) == 0
    blob = out.read_bytes()
    assert blob.startswith(b"P6")
    img = decode_netpbm(blob)
    src = read_netpbm(frame_file)
    assert (img.width, img.height) == (src.width, src.height)
    px = img.array.reshape(-1, 3)
    assert np.any(np.all(px == (0, 255, 0), axis=1))
    assert not np.any(np.all(px == (255, 0, 0), axis=1))
    assert np.array_equal(img.array[46:86, 46:86, 0], src.array[46:86, 46:86])


def test_bench_output(tmp_path, frame_file, capsys):
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, 1.0))
    assert main(["bench", "--model", str(model), "--frame", str(frame_file), "--iterations", "1",
                 "--threads", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert "single-thread" in lines[0] and "parallel (2 threads)" in lines[1]


def test_bench_both_backends(tmp_path, frame_file, capsys):
    from trafficgrid.features import available_backends, get_backend
    before = get_backend()
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, 1.0))
    assert main(["bench", "--model", str(model), "--frame", str(frame_file), "--iterations", "1",
                 "--backend", "both"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2 * len(available_backends())
    assert get_backend() == before


def test_bench_dimension_mismatch(tmp_path, frame_file):
    model = _model_file(tmp_path, LinearSvmModel.constant(10, 1.0))
    assert main(["bench", "--model", str(model), "--frame", str(frame_file), "--iterations", "1"]) == 4


# --- configuration ---

def test_config_roundtrip():
    cfg = RunConfig(roi=Roi(1, 2, 352, 396), grid=GridSpec(9, 8, 44, 44), threads=3,
                    paths={"model": "m.gsvm"})
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert RunConfig.from_dict({}) == RunConfig()


def test_config_file_and_overrides(tmp_path, frame_file):
    cfg = tmp_path / "c.json"
    rep = tmp_path / "r.json"
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, 1.0))
    # 12px cells cannot hold the default radius-8 LBP
    cfg.write_text(json.dumps({"grid": [3, 3, 12, 12]}))
    assert main(["estimate", "--config", str(cfg), "--model", str(model), "--frame", str(frame_file),
                 "--out", str(rep)]) == 3
    # 2x2 sub-cells * 8 bins + (8 + 2) LBP bins = 42 features
    cfg.write_text(json.dumps({"grid": [3, 3, 12, 12], "lbp_radius": 4, "lbp_points": 8,
                               "hog_sub_cell": 6, "model": str(model), "frame": str(frame_file)}))
    assert main(["estimate", "--config", str(cfg), "--out", str(rep)]) == 4
    model.write_bytes(save_model(LinearSvmModel.constant(42, 1.0)))
    assert main(["estimate", "--config", str(cfg), "--out", str(rep), "--roi", "10,10,100,100"]) == 0
    obj = json.loads(rep.read_text())
    assert (obj["rows"], obj["cols"], obj["traffic_cells"]) == (3, 3, 9)
    # --grid overrides the file
    model.write_bytes(save_model(LinearSvmModel.constant(3 * 3 * 8 + 10, 1.0)))
    assert main(["estimate", "--config", str(cfg), "--out", str(rep), "--grid", "2,2,18,18"]) == 0
    assert json.loads(rep.read_text())["total_cells"] == 4


@pytest.mark.parametrize("content", ['{"roi": [0, 0, 10, 10], "colour": 1}', "[1, 2]", "{not json",
                                     '{"grid": [1, 2]}', '{"mode": "sgd"}', '{"roi": [0, 0, 10, 10]}'])
def test_config_rejected(tmp_path, frame_file, content):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    model = _model_file(tmp_path, LinearSvmModel.constant(1594, 1.0))
    assert main(["estimate", "--config", str(cfg), "--model", str(model), "--frame", str(frame_file),
                 "--out", str(tmp_path / "r")]) == 3
