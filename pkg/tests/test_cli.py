import json

import numpy as np
import pytest

from alforge.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from alforge.dataset import save_dataset
from alforge.detectors import save_predictions, SyntheticDetector, noiseless_config

from conftest import al_surrogate


@pytest.fixture()
def dataset_dir(tmp_path):
    dataset = al_surrogate(seed=1, n_labeled=12, n_pool=30, n_valid=8,
                           pool_ann=(60, 25, 10), labeled_ann=(30, 12, 5),
                           valid_ann=(20, 8, 4))
    root = tmp_path / "data"
    save_dataset(dataset, root)
    return root, dataset


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["definitely-not-a-command"])
    assert excinfo.value.code == EXIT_USAGE


def test_analyze_emits_csvs(dataset_dir, tmp_path, capsys):
    root, _ = dataset_dir
    out = tmp_path / "analysis"
    assert main(["analyze", "--dataset", str(root), "--out", str(out)]) == EXIT_OK
    records_csv = (out / "scale_records.csv").read_text()
    assert records_csv.startswith("image_id,box_index,class_id,area_ratio,scale_class")
    hist_csv = (out / "scale_histogram.csv").read_text()
    assert hist_csv.startswith("bin_lo,bin_hi,count_total,count_c0,count_c1,count_c2")
    # Reports are self-describing about the active policy.
    assert "0.0058" in capsys.readouterr().out


def test_filter_round_trips_through_loader(dataset_dir, tmp_path):
    root, dataset = dataset_dir
    out = tmp_path / "filtered"
    assert main(["filter", "--dataset", str(root), "--out", str(out)]) == EXIT_OK
    from alforge.dataset import load_dataset

    filtered = load_dataset(out)
    assert set(filtered.records) == set(dataset.records)
    assert (out / "removal_report.csv").exists()


def test_schedule_table(capsys):
    assert main(["schedule", "--total-epochs", "10", "--cutoff", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "epoch,mosaic_on"
    assert lines[1] == "0,1"
    assert lines[-1] == "9,0"
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == 8


def test_mosaic_writes_composites_and_labels(dataset_dir, tmp_path):
    root, _ = dataset_dir
    out = tmp_path / "mosaics"
    assert main(["mosaic", "--dataset", str(root), "--variant", "4",
                 "--epoch", "0", "--total-epochs", "10", "--cutoff", "2",
                 "--size", "64", "--count", "2", "--seed", "3",
                 "--out", str(out)]) == EXIT_OK
    images = sorted((out / "images").glob("*.png"))
    labels = sorted((out / "labels").glob("*.txt"))
    assert len(images) == 2 and len(labels) == 2
    from alforge.dataset import parse_label_file

    for label_file in labels:
        parse_label_file(label_file.read_text())  # self-consistency round trip


def test_score_select_eval_pipeline(dataset_dir, tmp_path, capsys):
    root, dataset = dataset_dir
    detector = SyntheticDetector(noiseless_config())
    pool = [dataset.records[i] for i in dataset.split_ids("unlabeled-pool")]
    valid = [dataset.records[i] for i in dataset.split_ids("valid")]
    preds_dir = tmp_path / "preds"
    save_predictions(preds_dir, detector(pool + valid, 0))

    assert main(["score", "--dataset", str(root), "--preds", str(preds_dir),
                 "--method", "max"]) == EXIT_OK
    out_lines = capsys.readouterr().out.strip().splitlines()
    assert out_lines[0] == "image_id,uncertainty,detections"
    assert len(out_lines) == 1 + len(pool)

    sel_dir = tmp_path / "selections"
    assert main(["select", "--dataset", str(root), "--preds", str(preds_dir),
                 "--method", "max", "--k", "5", "--out", str(sel_dir)]) == EXIT_OK
    manifest = (sel_dir / "round1.txt").read_text().splitlines()
    assert len(manifest) == 5

    assert main(["eval", "--preds", str(preds_dir), "--gt", str(root),
                 "--split", "valid"]) == EXIT_OK
    eval_out = capsys.readouterr().out
    assert "mAP50,1.0000" in eval_out


def test_select_deterministic_manifests(dataset_dir, tmp_path):
    root, dataset = dataset_dir
    detector = SyntheticDetector(noiseless_config())
    pool = [dataset.records[i] for i in dataset.split_ids("unlabeled-pool")]
    preds_dir = tmp_path / "preds"
    save_predictions(preds_dir, detector(pool, 0))
    outs = []
    for run in range(2):
        out = tmp_path / f"sel{run}"
        main(["select", "--dataset", str(root), "--preds", str(preds_dir),
              "--method", "sum", "--k", "7", "--update", "copy", "--out", str(out)])
        outs.append((out / "round1.txt").read_bytes())
    assert outs[0] == outs[1]


def test_cost_command(tmp_path, capsys):
    config = tmp_path / "block.json"
    config.write_text(json.dumps({"type": "conv", "c_in": 64, "c_out": 64}))
    assert main(["cost", "--config", str(config)]) == EXIT_OK
    assert "4,096 params" in capsys.readouterr().out


def test_al_sim_and_report(dataset_dir, tmp_path, capsys):
    root, _ = dataset_dir
    logs = tmp_path / "runs"
    for method, update in (("max", "move"), ("max", "copy")):
        assert main(["al-sim", "--dataset", str(root), "--detector", "synthetic",
                     "--method", method, "--update", update, "--k", "10",
                     "--rounds", "3", "--seed", "5", "--evaluate",
                     "--out", str(logs)]) == EXIT_OK
    assert (logs / "max_move.csv").exists()
    assert (logs / "selections" / "round1.txt").exists()

    report_out = tmp_path / "report"
    assert main(["report", "--logs", str(logs), "--out", str(report_out)]) == EXIT_OK
    growth = (report_out / "growth_grid.csv").read_text().splitlines()
    assert growth[0].startswith("Method,Strategy,Round1,Round2")
    assert any(line.startswith("Max,Move") for line in growth)
    assert (report_out / "score_grid.csv").exists()
    assert (report_out / "stage_table.csv").exists()


def test_al_sim_full_run_byte_identical(dataset_dir, tmp_path):
    root, _ = dataset_dir
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        assert main(["al-sim", "--dataset", str(root), "--detector", "synthetic",
                     "--method", "sum", "--update", "move", "--k", "8",
                     "--rounds", "2", "--seed", "9", "--out", str(out)]) == EXIT_OK
        outputs.append({p.relative_to(out): p.read_bytes()
                        for p in sorted(out.rglob("*")) if p.is_file()})
    assert outputs[0] == outputs[1]


def test_data_error_exit_code(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["al-sim", "--dataset", str(empty), "--out",
                 str(tmp_path / "o")]) == EXIT_DATA


def test_config_env_sets_global_defaults(dataset_dir, tmp_path, monkeypatch, capsys):
    config = tmp_path / "defaults.json"
    config.write_text(json.dumps({"seed": 4}))
    monkeypatch.setenv("ALFORGE_CONFIG", str(config))
    assert main(["schedule", "--total-epochs", "4", "--cutoff", "1"]) == EXIT_OK
