import csv
import json
import shutil

import numpy as np
import pytest

from helpers import AIRCRAFT_A, AIRCRAFT_B, SCENARIO_WIND, scenario_grid, write_config
from windconflict import pipeline
from windconflict.config import load_config
from windconflict.ensemble_io import CorrelationSpec, WindEnsemble, generate_synthetic_ensemble, save_ensemble
from windconflict.errors import MissingStageError, NumericalError

FAR_NORTH = "29.2, -19.0", "29.2, -14.0", 230
FAR_SOUTH = "24.8, -19.0", "24.8, -14.0", 230


@pytest.fixture(scope="module")
def three_aircraft_run(tmp_path_factory):
    """A, B crossing plus a far-away parallel flight C; probability forced."""
    root = tmp_path_factory.mktemp("three")
    save_ensemble(generate_synthetic_ensemble(3, scenario_grid(), 300, SCENARIO_WIND), root / "ens.csv")
    path = write_config(root / "s.ini", ["ens.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B, "C": FAR_NORTH},
                        conflict={"probe_times": "1100, 1200", "condition_time": 1100, "condition_bound_nm": 15,
                                  "force_probability": "true"})
    cfg = load_config(path, env={})
    text = pipeline.run_all(cfg)
    return cfg, json.loads(pipeline.RunDir(cfg.output_dir).report.read_text()), text


def _pairs(report):
    return {pipeline.pair_key(r["pair"]): r for r in report["pairs"]}


def test_three_aircraft_outputs(three_aircraft_run):
    cfg, report, _ = three_aircraft_run
    run = pipeline.RunDir(cfg.output_dir)
    assert set(_pairs(report)) == {"A-B", "A-C", "B-C"}
    envelopes = sorted(p.name for p in (run / "series").glob("envelope_*.csv"))
    assert envelopes == ["envelope_A-B.csv", "envelope_A-C.csv", "envelope_B-C.csv"]
    with open(run / "series" / "envelope_A-B.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "mean", "sigma", "lower", "upper"]
    assert (run / "series" / "ensemble_A-B.csv").exists()
    assert len(list((run / "trajectories" / "A").glob("node_*.csv"))) == 16


def test_crossing_pair_report(three_aircraft_run):
    _, report, text = three_aircraft_run
    ab = _pairs(report)["A-B"]
    assert ab["verdict"] == "conflict-by-envelope"
    assert 0.0 < ab["probability"] < 1.0
    assert [p["t"] for p in ab["probes"]] == [1100.0, 1200.0]
    assert ab["conditional"][0]["t1"] == 1100.0 and ab["conditional"][0]["t2"] == ab["t_min_distance"]
    assert ab["baseline"]["n_members"] == 300
    assert ab["high_risk"] and "HIGH RISK" in text
    assert report["M"] == 4 and report["n_members"] == 300


def test_far_pair_negligible(three_aircraft_run):
    _, report, _ = three_aircraft_run
    for key in ("A-C", "B-C"):
        rec = _pairs(report)[key]
        assert rec["verdict"] == "no-conflict"
        assert rec["probability"] < 1e-6
        assert not rec["high_risk"]


def test_report_json_is_deterministic_and_timing_free(three_aircraft_run, tmp_path):
    cfg, report, _ = three_aircraft_run
    raw = pipeline.RunDir(cfg.output_dir).report.read_text()
    assert "seconds" not in raw and "timing" not in raw
    again = cfg.with_changes(output_dir=str(tmp_path / "again"))
    pipeline.ingest(again)
    pipeline.decompose(again)
    pipeline.surrogate(again)
    pipeline.detect(again)
    assert (tmp_path / "again" / "report.json").read_text() == raw


def test_manifest_records_existing_artifacts(three_aircraft_run):
    cfg, _, _ = three_aircraft_run
    run = pipeline.RunDir(cfg.output_dir)
    manifest = json.loads(run.manifest.read_text())
    assert manifest["config_hash"] == cfg.digest()
    assert set(manifest["timings"]) == {"ingest", "decompose", "surrogate", "detect", "report"}
    assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
    assert all((run.root / a).exists() for a in manifest["artifacts"])
    assert "report.json" in manifest["artifacts"] and "summary.txt" in manifest["artifacts"]


def test_report_rewrites_summary(three_aircraft_run):
    cfg, _, text = three_aircraft_run
    run = pipeline.RunDir(cfg.output_dir)
    run.summary.unlink()
    assert pipeline.report(cfg.output_dir) == text
    assert run.summary.read_text() == text


def test_figures_rendered(three_aircraft_run, tmp_path):
    cfg, _, _ = three_aircraft_run
    copy = tmp_path / "copy"
    shutil.copytree(cfg.output_dir, copy)
    pipeline.report(copy, figures=True)
    pngs = sorted(p.name for p in (copy / "figures").glob("*.png"))
    assert any(n.startswith("envelope_A-B") for n in pngs)
    assert all((copy / "figures" / n).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for n in pngs)


def test_decompose_archive_byte_identical(scenario_files):
    root, path = scenario_files
    cfg = load_config(path, env={})
    pipeline.decompose(cfg)
    first = pipeline.RunDir(cfg.output_dir).mukl.read_bytes()
    pipeline.decompose(cfg)
    assert pipeline.RunDir(cfg.output_dir).mukl.read_bytes() == first


def test_report_requires_detect(scenario_files):
    root, path = scenario_files
    cfg = load_config(path, env={})
    pipeline.ingest(cfg)
    with pytest.raises(MissingStageError) as info:
        pipeline.report(cfg.output_dir)
    assert info.value.stage == "detect"
    with pytest.raises(MissingStageError):
        pipeline.report(root / "nowhere")


def _constant_ensemble(path, u=0.0, v=0.0, members=3):
    grid = scenario_grid()
    shape = (members,) + grid.shape
    save_ensemble(WindEnsemble(grid, np.full(shape, u), np.full(shape, v)), path)


def test_zero_variance_crossing_is_conflict_by_envelope(tmp_path):
    _constant_ensemble(tmp_path / "calm.csv")
    path = write_config(tmp_path / "s.ini", ["calm.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B},
                        expansion={"M": 1})
    report = pipeline.detect(load_config(path, env={}))
    ab = report["pairs"][0]
    assert report["M"] == 0 and report["explained_percent"] == 100.0
    assert ab["verdict"] == "conflict-by-envelope"
    assert ab["sigma_at_min_m"] == 0.0
    assert ab["min_mean_separation_m"] < 9260.0
    assert ab["baseline"]["probability"] == 1.0


def test_zero_variance_far_pair_no_conflict(tmp_path):
    _constant_ensemble(tmp_path / "calm.csv", u=5.0)
    path = write_config(tmp_path / "s.ini", ["calm.csv"], {"N": FAR_NORTH, "S": FAR_SOUTH}, expansion={"M": 1})
    rec = pipeline.detect(load_config(path, env={}))["pairs"][0]
    assert rec["verdict"] == "no-conflict"
    assert rec["probability"] == 0.0
    assert "zero variance" in rec["warning"]


def test_rank_one_ensemble_fully_explained(tmp_path):
    grid = scenario_grid()
    la, lo = np.meshgrid(grid.lats, grid.lons, indexing="ij")
    pattern = np.sin(la) * np.cos(lo)
    a = np.random.default_rng(0).standard_normal(30)
    u = 10.0 + a[:, None, None] * pattern
    save_ensemble(WindEnsemble(grid, u, np.zeros_like(u)), tmp_path / "r1.csv")
    path = write_config(tmp_path / "s.ini", ["r1.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B}, expansion={"M": 1})
    exp = pipeline.decompose(load_config(path, env={}))
    assert exp.explained_percent == pytest.approx(100.0, abs=1e-9)
    rows = list(csv.reader(open(tmp_path / "run" / "explained_variance.csv")))
    assert rows[0] == ["k", "percent", "cumulative_percent"] and len(rows) == 2


def test_near_total_delta_keeps_almost_all_modes(tmp_path):
    R = 25
    spec = CorrelationSpec(length_deg=0.3, rho=0.0, sigma_u=2.0, sigma_v=2.0)
    save_ensemble(generate_synthetic_ensemble(1, scenario_grid(), R, spec), tmp_path / "rough.csv")
    path = write_config(tmp_path / "s.ini", ["rough.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B},
                        expansion={"delta": 0.999})
    exp = pipeline.decompose(load_config(path, env={}))
    assert R - 3 <= exp.M <= R - 1
    assert exp.explained_percent >= 99.9


def test_planner_failure_marks_pairs_failed(tmp_path):
    save_ensemble(generate_synthetic_ensemble(2, scenario_grid(), 40, SCENARIO_WIND), tmp_path / "e.csv")
    outside = "25.3, -18.4", "33.0, -14.6", 230
    path = write_config(tmp_path / "s.ini", ["e.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B, "X": outside},
                        expansion={"M": 2})
    cfg = load_config(path, env={})
    status = pipeline.surrogate(cfg)
    assert status["X"]["status"] == "failed" and status["A"]["status"] == "ok"
    pairs = _pairs(pipeline.detect(cfg))
    assert pairs["A-X"]["verdict"] == "failed" and "outside" in pairs["A-X"]["note"]
    assert pairs["B-X"]["verdict"] == "failed"
    assert pairs["A-B"]["verdict"] != "failed"
    assert "A-X: failed" in pipeline.report(cfg.output_dir)


def test_too_many_modes_is_numerical(scenario_files):
    _, path = scenario_files
    cfg = load_config(path, env={}).with_changes(M=400)
    with pytest.raises(NumericalError) as info:
        pipeline.decompose(cfg)
    assert info.value.stage_context == "decompose"


def test_sweep_table(scenario_files):
    root, path = scenario_files
    cfg = load_config(path, env={})
    rows = pipeline.sweep(cfg, [1, 2])
    assert [r[0] for r in rows] == [1, 2]
    table = list(csv.DictReader(open(root / "run" / "sweep.csv")))
    assert [t["M"] for t in table] == ["1", "2"]
    assert all(t["pair"] == "A-B" and float(t["seconds"]) > 0 for t in table)
    assert (root / "run" / "sweep" / "M2" / "report.json").exists()


@pytest.mark.parametrize("text, expected", [("3..5", [3, 4, 5]), ("2", [2])])
def test_parse_range(text, expected):
    assert pipeline.parse_range(text) == expected


@pytest.mark.parametrize("text", ["5..3", "0..2", "a..b"])
def test_parse_range_rejects(text):
    from windconflict.errors import ConfigError

    with pytest.raises(ConfigError, match="sweep-M"):
        pipeline.parse_range(text)


def test_infinite_condition_bound_round_trips(tmp_path):
    save_ensemble(generate_synthetic_ensemble(4, scenario_grid(), 80, SCENARIO_WIND), tmp_path / "e.csv")
    path = write_config(tmp_path / "s.ini", ["e.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B}, expansion={"M": 2},
                        conflict={"condition_time": 900, "condition_bound_nm": "inf", "force_probability": "true"})
    cfg = load_config(path, env={})
    rec = pipeline.detect(cfg)["pairs"][0]
    cond = rec["conditional"][0]
    assert cond["bound_m"] == "inf" and cond["p_condition"] == 1.0
    assert cond["probability"] == rec["probability"]
    assert json.loads((tmp_path / "run" / "config.json").read_text())["condition"] == [900.0, "inf"]
    assert "< inf" in pipeline.report(cfg.output_dir)
