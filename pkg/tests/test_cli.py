import json

import numpy as np
import pytest

from spinescale.cli import main
from spinescale.forecaster import Forecast, load_checkpoint, load_forecast_csv, save_forecast_csv
from spinescale.policy import replay_journal

SMALL_CONFIG = {
    "seed": 9,
    "topology": {"n_leaf": 2, "n_spine": 3, "capacity_bps": 1_000_000_000,
                 "base_latency_us": 3.0, "min_spines": 2, "max_spines": 5},
    "latency": {"queue_factor": 1.0, "noise_us": 0.0},
    "traffic": {"base_bps": 300_000_000, "diurnal_amp_bps": 100_000_000,
                "noise_bps": 0, "flows_per_pair": 8},
    "training": {"lookback_hours": 12, "epochs": 3, "batch_size": 16,
                 "hidden_size": 8, "conv_channels": 4, "dropout": 0.1},
    "policy": {"remove_threshold_us": 0.5, "add_threshold_us": 500.0,
               "cooldown_cycles": 0},
    "run": {"cycles": 2, "hours_per_cycle": 16, "horizon_hours": 12},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_simulate_duration_zero(config_path, tmp_path):
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", config_path, "--duration-hours", 0,
                   "--out", out) == 0
    assert (out / "telemetry.log").read_text() == ""


def test_simulate_record_count_3x5(tmp_path):
    cfg = dict(SMALL_CONFIG, topology={"n_leaf": 3, "n_spine": 5,
                                       "capacity_bps": 1_000_000_000,
                                       "base_latency_us": 3.0})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", path, "--duration-hours", 1, "--out", out) == 0
    lines = (out / "telemetry.log").read_text().splitlines()
    assert len(lines) == 15 * 60


def test_simulate_deterministic_bytes(config_path, tmp_path):
    out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run_cli("simulate", "--config", config_path, "--duration-hours", 3, "--out", out1)
    run_cli("simulate", "--config", config_path, "--duration-hours", 3, "--out", out2)
    run_cli("simulate", "--config", config_path, "--duration-hours", 3, "--out", out3,
            "--seed", 777)
    assert (out1 / "telemetry.log").read_bytes() == (out2 / "telemetry.log").read_bytes()
    assert (out1 / "telemetry.log").read_bytes() != (out3 / "telemetry.log").read_bytes()


def test_stage_chain_train_forecast_decide(config_path, tmp_path):
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", config_path, "--duration-hours", 30,
                   "--out", out) == 0
    assert run_cli("train", "--config", config_path, "--out", out) == 0
    model = load_checkpoint(out / "model.ckpt")
    assert model.hyper.lookback_hours == 12

    assert run_cli("forecast", "--out", out, "--horizon", 120) == 0
    forecast = load_forecast_csv(out / "forecast.csv")
    assert forecast.spine_ids() == [0, 1, 2]
    assert all(len(forecast.per_spine[s]) == 120 for s in forecast.spine_ids())

    # dead-zone thresholds: empty journal, still exit 0
    assert run_cli("decide", "--out", out, "--remove-threshold-us", 0.001,
                   "--add-threshold-us", 10000.0) == 0
    assert (out / "journal.log").read_text() == ""


def test_decide_writes_expected_removals(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    fc = Forecast(horizon=6, per_spine={0: np.full(6, 3.0), 1: np.full(6, 9.0),
                                        2: np.full(6, 9.5), 3: np.full(6, 4.5)})
    save_forecast_csv(fc, out / "forecast.csv")
    assert run_cli("decide", "--out", out, "--min-spines", 2) == 0
    entries = replay_journal(out / "journal.log")
    assert [(e.kind, e.spine_id) for e in entries] == [("remove_spine", 0),
                                                       ("remove_spine", 3)]
    assert all(e.remove_threshold_us == 6.0 for e in entries)


def test_export_plots_row_counts(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    rng = np.random.default_rng(0)
    fc = Forecast(horizon=120, per_spine={s: rng.uniform(7, 11, 120) for s in range(5)})
    save_forecast_csv(fc, out / "forecast.csv")
    assert run_cli("export-plots", "--out", out) == 0
    data = (out / "plot_latency.csv").read_text().splitlines()
    assert data[0] == "hour,spine_id,predicted_latency_us"
    assert len(data) - 1 == 5 * 120
    cands = (out / "plot_candidates.csv").read_text().splitlines()
    assert cands[0] == "spine_id,mean_predicted_latency_us,hours_below_threshold"
    assert len(cands) == 1          # dead zone: no candidates


def test_export_plots_empty_forecast(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    save_forecast_csv(Forecast(horizon=0, per_spine={}), out / "forecast.csv")
    assert run_cli("export-plots", "--out", out) == 0
    assert (out / "plot_latency.csv").read_text() == "hour,spine_id,predicted_latency_us\n"


def test_export_plots_candidates_match_decide(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    fc = Forecast(horizon=10, per_spine={0: np.full(10, 3.2), 1: np.full(10, 9.0),
                                         2: np.full(10, 4.8), 3: np.full(10, 9.1),
                                         4: np.full(10, 2.9)})
    save_forecast_csv(fc, out / "forecast.csv")
    assert run_cli("decide", "--out", out, "--min-spines", 2) == 0
    assert run_cli("export-plots", "--out", out, "--min-spines", 2) == 0
    removed = [e.spine_id for e in replay_journal(out / "journal.log")]
    cand_rows = (out / "plot_candidates.csv").read_text().splitlines()[1:]
    assert [int(r.split(",")[0]) for r in cand_rows] == removed
    assert all(int(r.split(",")[2]) == 10 for r in cand_rows)


def test_run_closed_loop_idle(config_path, tmp_path):
    from pathlib import Path

    out = tmp_path / "out"
    assert run_cli("run", "--config", config_path, "--out", out) == 0
    manifest = json.loads((out / "manifest").read_text())
    assert [c["active_spines"] for c in manifest["cycles"]] == [[0, 1, 2], [0, 1, 2]]
    for key, path in manifest["artifacts"].items():
        assert Path(path).exists(), f"missing artifact {key}: {path}"


def test_run_deterministic_artifacts(config_path, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cli("run", "--config", config_path, "--out", out1) == 0
    assert run_cli("run", "--config", config_path, "--out", out2) == 0
    for name in ("telemetry.log", "model.ckpt", "forecast.csv", "journal.log"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_bad_config_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"topology": {"n_leaf": 0}}))
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", bad, "--duration-hours", 1, "--out", out) == 2
    assert "n_leaf" in capsys.readouterr().err


def test_missing_artifacts_nonzero_exit(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    assert run_cli("forecast", "--out", out) == 2
    err = capsys.readouterr().err
    assert "model.ckpt" in err
    (out / "forecast.csv").write_text("hour,spine_id,predicted_latency_us\n2,0,5.0\n")
    assert run_cli("decide", "--out", out) == 2
    assert "forecast" in capsys.readouterr().err
