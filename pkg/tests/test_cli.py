import json
import logging

import numpy as np
import pytest
from scenes import known_fragment_scene, separated_blobs

from elcois.cli import main
from elcois.clustering import brute_force_cluster, canonical_labels, euclidean_cluster
from elcois.core import EllipsoidParams, PointCloud
from elcois.io_kitti import LabelRecords, read_labels, write_labels, write_scan


@pytest.fixture
def dirs(tmp_path):
    d = {k: tmp_path / k for k in ("scans", "preds", "out", "gt")}
    for p in d.values():
        p.mkdir()
    return d


def put_scan(d, stem, points, semantic=None, instance=None):
    write_scan(PointCloud(points), d["scans"] / f"{stem}.bin")
    if semantic is not None:
        write_labels(LabelRecords(semantic, instance), d["preds"] / f"{stem}.label")


def args(d, cmd, *extra):
    return [cmd, "--scans", str(d["scans"]), "--preds", str(d["preds"]), "--out", str(d["out"]), *extra]


def test_segment_empty_dir(dirs, caplog):
    with caplog.at_level(logging.WARNING):
        assert main(args(dirs, "segment")) == 0
    assert "no .bin scans" in caplog.text


def test_segment_fixture_and_determinism(dirs):
    pts, sem, inst = known_fragment_scene()
    put_scan(dirs, "000000", pts, sem, inst)
    assert main(args(dirs, "segment")) == 0
    out = dirs["out"] / "000000.label"
    first = out.read_bytes()
    rec = read_labels(out, len(pts))
    assert set(np.unique(rec.instance[sem == 10])) == {1}
    assert set(np.unique(rec.instance[sem == 0])) == {2}
    np.testing.assert_array_equal(rec.semantic, sem)
    assert main(args(dirs, "segment")) == 0
    assert out.read_bytes() == first
    assert main(args(dirs, "segment", "--jobs", "2")) == 0
    assert out.read_bytes() == first

    assert main(args(dirs, "segment", "--no-refine")) == 0
    assert set(np.unique(read_labels(out).instance[sem == 10])) == {1, 2}


def test_segment_missing_prediction(dirs, caplog):
    pts, sem, inst = known_fragment_scene()
    put_scan(dirs, "000000", pts, sem, inst)
    put_scan(dirs, "000001", pts)
    assert main(args(dirs, "segment")) == 1
    assert "000001" in caplog.text
    assert (dirs["out"] / "000000.label").exists()


def test_segment_corrupt_scan(dirs):
    (dirs["scans"] / "bad.bin").write_bytes(b"\0" * 17)
    write_labels(LabelRecords([0], [0]), dirs["preds"] / "bad.label")
    assert main(args(dirs, "segment")) == 1


def test_cluster_three_blobs(dirs):
    pts, truth = separated_blobs(np.random.default_rng(3), n_blobs=3, per_blob=50)
    put_scan(dirs, "a", pts)
    oracle = brute_force_cluster(pts, EllipsoidParams())
    assert oracle.n_clusters == 3
    argv = ["cluster", "--scans", str(dirs["scans"]), "--out", str(dirs["out"])]
    assert main(argv) == 0
    rec = read_labels(dirs["out"] / "a.label", len(pts))
    np.testing.assert_array_equal(rec.instance, oracle.labels)

    assert main(argv + ["--algo", "euclidean", "--radius", "1.0"]) == 0
    rec = read_labels(dirs["out"] / "a.label", len(pts))
    f32 = PointCloud(pts).points.astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(rec.instance, euclidean_cluster(f32, 1.0).labels)


def test_cluster_with_background_removal(dirs):
    pts, sem, inst = known_fragment_scene()
    put_scan(dirs, "s", pts, sem, inst)
    assert main(args(dirs, "cluster", "--min-unknown-points", "1")) == 0
    rec = read_labels(dirs["out"] / "s.label", len(pts))
    assert np.all(rec.instance[sem == 40] == 0)
    # class-agnostic: the car is one cluster, ignoring the predicted split
    assert len(np.unique(rec.instance[sem == 10])) == 1


def test_invalid_theta_is_usage_error(tmp_path):
    missing = tmp_path / "nope"
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--scans", str(missing), "--out", str(missing), "--theta", "0"])
    assert exc.value.code == 2
    assert not missing.exists()


def test_config_file_and_override(dirs, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("rho: 2.0\ntheta: 200\n")
    base = ["cluster", "--scans", str(dirs["scans"]), "--out", str(dirs["out"]), "--config", str(cfg)]
    with pytest.raises(SystemExit):
        main(base)
    assert main(base + ["--theta", "2.0"]) == 0
    cfg.write_text("bogus: 1\n")
    with pytest.raises(SystemExit):
        main(base)


def test_refine_command(dirs):
    pts, sem, inst = known_fragment_scene()
    put_scan(dirs, "s", pts, sem, inst)
    assert main(args(dirs, "refine")) == 0
    rec = read_labels(dirs["out"] / "s.label", len(pts))
    assert set(np.unique(rec.instance[sem == 10])) == {1}
    assert np.all(rec.instance[sem != 10] == 0)


def eval_args(dirs, *extra):
    return ["eval", "--preds", str(dirs["preds"]), "--gt", str(dirs["gt"]), "--out", str(dirs["out"]), *extra]


def test_eval_perfect(dirs):
    rec = LabelRecords([10] * 6 + [0] * 3, [1] * 6 + [2] * 3)
    write_labels(rec, dirs["gt"] / "a.label")
    write_labels(rec, dirs["preds"] / "a.label")
    assert main(eval_args(dirs)) == 0
    report = json.loads((dirs["out"] / "report.json").read_text())
    assert report["s_assoc"] == {"car": 1.0, "known": 1.0, "unknown": 1.0, "all": 1.0}
    for kind in ("iou", "recall"):
        for g in ("known", "unknown", "all"):
            assert set(report[kind][g].values()) == {1.0}


def test_eval_lumping_and_absent_group(dirs, capsys):
    write_labels(LabelRecords([10] * 8, [1] * 4 + [2] * 4), dirs["gt"] / "a.label")
    write_labels(LabelRecords([10] * 8, [9] * 8), dirs["preds"] / "a.label")
    assert main(eval_args(dirs, "--thresholds", "0.5")) == 0
    report = json.loads((dirs["out"] / "report.json").read_text())
    assert report["s_assoc"]["all"] == 0.5
    assert "unknown" not in report["s_assoc"]
    assert "0.500" in capsys.readouterr().out
    assert "0.500" in (dirs["out"] / "report.txt").read_text()


def test_eval_unpaired(dirs, caplog):
    write_labels(LabelRecords([10], [1]), dirs["gt"] / "a.label")
    write_labels(LabelRecords([10], [1]), dirs["preds"] / "b.label")
    assert main(eval_args(dirs)) == 1
    assert "a, b" in caplog.text


def test_export_ply(dirs):
    pts, sem, inst = known_fragment_scene()
    put_scan(dirs, "s", pts, sem, inst)
    assert main(args(dirs, "export-ply")) == 0
    text = (dirs["out"] / "s.ply").read_text()
    assert f"element vertex {len(pts)}" in text
    assert len(text.splitlines()) == len(pts) + 10
