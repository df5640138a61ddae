import numpy as np
import pytest

from spinescale.baselines import mse, persistence_predictions, seasonal_naive_predictions
from spinescale.config import TrainingConfig
from spinescale.errors import (DecodeError, InsufficientHistoryError, NumericError, ShapeError,
                               TrainingDivergedError)
from spinescale.forecaster import (Forecast, backward_batch, digest_forecast, forecast_horizon,
                                   forward, forward_batch, gradient_check, init_model,
                                   load_checkpoint, load_forecast_csv, models_equal, mse_loss,
                                   save_checkpoint, save_forecast_csv, train)
from spinescale.windows import Scaler, SwitchSeries, WindowedDataset

SMALL = TrainingConfig(lookback_hours=12, conv_width=3, conv_channels=4,
                       hidden_size=12, dropout=0.2, epochs=20, batch_size=8,
                       learning_rate=5e-3)


def toy_dataset(n=8, lookback=12, seed=0):
    rng = np.random.default_rng(seed)
    return WindowedDataset(inputs=rng.uniform(0, 1, size=(n, lookback, 3)),
                           targets=rng.uniform(0, 1, size=n),
                           spine_ids=np.zeros(n, dtype=np.int64),
                           lookback=lookback, horizon=1)


def constant_series(spine_id=0, T=60, lat=5.0, fab=100.0, edg=200.0):
    return SwitchSeries(spine_id=spine_id, start_hour=0,
                        latency_us=np.full(T, lat), fabric_bps=np.full(T, fab),
                        edge_bps=np.full(T, edg))


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def test_eval_forward_deterministic():
    model = init_model(SMALL, seed=1)
    window = np.random.default_rng(2).uniform(0, 1, size=(12, 3))
    assert forward(model, window) == forward(model, window)


def test_dropout_zero_train_equals_eval():
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 0.0})
    model = init_model(hyper, seed=1)
    window = np.random.default_rng(2).uniform(0, 1, size=(12, 3))
    rng = np.random.default_rng(3)
    assert forward(model, window, train_mode=True, rng=rng) == forward(model, window)


def test_dropout_one_zeroes_layer_outputs():
    # p=1 blanks everything entering layer 2; with layer-2 params zero its
    # state stays zero, so the output is exactly the dense bias.
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 1.0})
    model = init_model(hyper, seed=1)
    for name in model.layer2.array_names():
        getattr(model.layer2, name)[...] = 0.0
    model.dense_b[...] = -0.7341
    window = np.random.default_rng(2).uniform(0, 1, size=(12, 3))
    out = forward(model, window, train_mode=True, rng=np.random.default_rng(0))
    assert out == pytest.approx(-0.7341, abs=1e-15)


def test_forward_rejects_bad_shapes():
    model = init_model(SMALL, seed=1)
    with pytest.raises(ShapeError):
        forward(model, np.zeros((12, 2)))
    with pytest.raises(ShapeError):
        forward(model, np.zeros((2, 12, 3)))   # batch passed to single-window op


def test_forward_names_layer_on_non_finite():
    model = init_model(SMALL, seed=1)
    window = np.full((12, 3), np.nan)
    with pytest.raises(NumericError, match="conv"):
        forward(model, window)


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

def test_gradient_check_below_tolerance():
    model = init_model(SMALL, seed=3)
    ds = toy_dataset(seed=4)
    err = gradient_check(model, ds.inputs[:4], ds.targets[:4], eps=1e-5,
                         num_params=120, seed=0)
    assert err < 1e-4


def test_gradient_check_detects_scaled_dense_gradient():
    model = init_model(SMALL, seed=3)
    ds = toy_dataset(seed=4)
    preds, cache = forward_batch(model, ds.inputs[:4])
    _, d_preds = mse_loss(preds, ds.targets[:4])
    grads = backward_batch(model, cache, d_preds)
    grads["dense.w"] = grads["dense.w"] * 2.0
    err = gradient_check(model, ds.inputs[:4], ds.targets[:4], grads=grads)
    assert err > 1e-4


def test_gradient_check_zero_parameter_model():
    model = init_model(SMALL, seed=3)
    for arr in model.parameters().values():
        arr[...] = 0.0
    ds = toy_dataset(seed=4)
    err = gradient_check(model, ds.inputs[:4], ds.targets[:4])
    assert np.isfinite(err) and err < 1e-4


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_overfit_toy_dataset():
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 0.0, "epochs": 300})
    model = init_model(hyper, seed=1)
    ds = toy_dataset(seed=0)
    model, report = train(model, ds, seed=2)
    assert report.train_losses[-1] < 1e-3
    assert len(report.train_losses) == 300


def test_zero_learning_rate_changes_nothing():
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 0.0,
                              "learning_rate": 0.0, "epochs": 5})
    model = init_model(hyper, seed=1)
    before = {k: v.copy() for k, v in model.parameters().items()}
    model, report = train(model, toy_dataset(), seed=2)
    for k, v in model.parameters().items():
        assert np.array_equal(v, before[k])
    assert np.allclose(report.train_losses, report.train_losses[0], rtol=1e-9)


def test_train_deterministic_per_seed():
    ds = toy_dataset()
    runs = []
    for _ in range(2):
        model = init_model(SMALL, seed=7)
        model, report = train(model, ds, seed=9)
        runs.append((model, report))
    m1, r1 = runs[0]
    m2, r2 = runs[1]
    assert r1.train_losses == r2.train_losses
    assert r1.best_epoch == r2.best_epoch
    assert models_equal(m1, m2)
    model3 = init_model(SMALL, seed=7)
    model3, r3 = train(model3, ds, seed=10)
    assert r1.train_losses != r3.train_losses


def test_training_divergence_reports_epoch():
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 0.0,
                              "learning_rate": 1e160, "epochs": 10})
    model = init_model(hyper, seed=5)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(model, toy_dataset(), seed=6)


def test_final_grad_check_recorded_in_report():
    hyper = TrainingConfig(**{**SMALL.__dict__, "epochs": 2})
    model = init_model(hyper, seed=1)
    model, report = train(model, toy_dataset(), seed=2, final_grad_check=True)
    assert report.grad_check_error is not None
    assert report.grad_check_error < 1e-4
    model2 = init_model(hyper, seed=1)
    _, report2 = train(model2, toy_dataset(), seed=2)
    assert report2.grad_check_error is None


def test_best_validation_epoch_retained():
    hyper = TrainingConfig(**{**SMALL.__dict__, "dropout": 0.0, "epochs": 40})
    model = init_model(hyper, seed=1)
    train_ds = toy_dataset(n=16, seed=0)
    val_ds = toy_dataset(n=8, seed=1)
    model, report = train(model, train_ds, seed=2, val_ds=val_ds)
    assert len(report.val_losses) == 40
    assert report.best_epoch == int(np.argmin(report.val_losses))


# ---------------------------------------------------------------------------
# forecast_horizon
# ---------------------------------------------------------------------------

from functools import lru_cache


@lru_cache(maxsize=None)
def trained_constant_model(lookback=24, lat=5.0):
    hyper = TrainingConfig(lookback_hours=lookback, conv_width=3, conv_channels=4,
                           hidden_size=8, dropout=0.0, epochs=150, batch_size=16,
                           learning_rate=5e-3)
    series = constant_series(T=3 * lookback, lat=lat)
    scaler = Scaler.fit([series])
    normed = scaler.transform_series(series)
    from spinescale.windows import make_windows
    ds = make_windows([normed], lookback, 1)
    model = init_model(hyper, seed=1, scaler=scaler)
    model, _ = train(model, ds, seed=2)
    return model, series


def test_forecast_horizon_counts_and_bounds():
    model, series = trained_constant_model()
    histories = [constant_series(spine_id=s, T=30) for s in (0, 1, 4)]
    fc = forecast_horizon(model, histories, 120)
    assert fc.spine_ids() == [0, 1, 4]
    for sid in fc.spine_ids():
        preds = fc.per_spine[sid]
        assert preds.shape == (120,)
        assert np.isfinite(preds).all()
        assert (preds >= 0).all()


def test_forecast_single_step_equals_forward_on_last_window():
    model, series = trained_constant_model()
    fc = forecast_horizon(model, [series], 1)
    n = model.hyper.lookback_hours
    window = model.scaler.transform(series.channels())[-n:]
    expected = max(model.scaler.invert_latency(forward(model, window)), 0.0)
    assert fc.per_spine[0][0] == pytest.approx(expected, abs=1e-12)


def test_forecast_constant_signal_within_5_percent():
    model, series = trained_constant_model(lat=5.0)
    fc = forecast_horizon(model, [series], 48)
    assert np.all(np.abs(fc.per_spine[0] - 5.0) <= 0.25)


def test_forecast_insufficient_history():
    model, _ = trained_constant_model(lookback=24)
    short = constant_series(T=10)
    with pytest.raises(InsufficientHistoryError):
        forecast_horizon(model, [short], 5)


# ---------------------------------------------------------------------------
# checkpoint
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_exact(tmp_path):
    model, _ = trained_constant_model()
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert models_equal(loaded, model)


def test_checkpoint_roundtrip_without_scaler(tmp_path):
    model = init_model(SMALL, seed=3)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert models_equal(loaded, model)
    assert loaded.scaler is None


def test_checkpoint_save_is_stable_bytes(tmp_path):
    model = init_model(SMALL, seed=3)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(model, a)
    save_checkpoint(model, b)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda lines: ["garbage"] + lines[1:],                  # bad magic
    lambda lines: lines[:-2],                               # missing end / param data
    lambda lines: [ln for ln in lines if not ln.startswith("param dense.b")],
])
def test_checkpoint_corruption_detected(tmp_path, mutate):
    model = init_model(SMALL, seed=3)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.ckpt"
    mutated = mutate(lines)
    if mutated == lines:  # param line filter drops data line too
        mutated = lines
    bad.write_text("\n".join(mutated) + "\n")
    with pytest.raises(DecodeError):
        load_checkpoint(bad)


# ---------------------------------------------------------------------------
# forecast CSV + digest
# ---------------------------------------------------------------------------

def test_forecast_csv_roundtrip(tmp_path):
    fc = Forecast(horizon=3, per_spine={0: np.array([3.1, 3.2, 3.3]),
                                        4: np.array([5.950000000001, 6.0, 7e-12])})
    path = tmp_path / "forecast.csv"
    save_forecast_csv(fc, path)
    loaded = load_forecast_csv(path)
    assert loaded.horizon == 3
    assert loaded.spine_ids() == [0, 4]
    for sid in (0, 4):
        assert np.array_equal(loaded.per_spine[sid], fc.per_spine[sid])


def test_forecast_csv_empty(tmp_path):
    path = tmp_path / "forecast.csv"
    save_forecast_csv(Forecast(horizon=0, per_spine={}), path)
    assert path.read_text() == "hour,spine_id,predicted_latency_us\n"
    loaded = load_forecast_csv(path)
    assert loaded.per_spine == {}


def test_forecast_csv_malformed(tmp_path):
    path = tmp_path / "forecast.csv"
    path.write_text("hour,spine_id,predicted_latency_us\n1,0,3.0\n3,0,4.0\n")
    with pytest.raises(DecodeError):
        load_forecast_csv(path)
    path.write_text("wrong,header\n")
    with pytest.raises(DecodeError):
        load_forecast_csv(path)


def test_digest_sensitive_to_content():
    a = Forecast(horizon=2, per_spine={0: np.array([1.0, 2.0])})
    b = Forecast(horizon=2, per_spine={0: np.array([1.0, 2.0000001])})
    assert digest_forecast(a) == digest_forecast(a)
    assert digest_forecast(a) != digest_forecast(b)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def test_persistence_baseline_reads_last_value():
    ds = toy_dataset(n=5, lookback=30, seed=8)
    assert np.array_equal(persistence_predictions(ds), ds.inputs[:, -1, 0])


def test_seasonal_naive_reads_period_before_target():
    # lookback 30, horizon 1: target is at step 30; 24 earlier is step 6
    ds = toy_dataset(n=5, lookback=30, seed=8)
    assert np.array_equal(seasonal_naive_predictions(ds), ds.inputs[:, 6, 0])


def test_seasonal_naive_requires_long_lookback():
    ds = toy_dataset(n=5, lookback=12, seed=8)
    from spinescale.errors import InsufficientDataError
    with pytest.raises(InsufficientDataError):
        seasonal_naive_predictions(ds)


def test_seasonal_naive_perfect_on_periodic_signal():
    t = np.arange(200, dtype=float)
    wave = np.sin(2 * np.pi * t / 24.0)
    series = SwitchSeries(spine_id=0, start_hour=0, latency_us=wave,
                          fabric_bps=np.zeros(200), edge_bps=np.zeros(200))
    from spinescale.windows import make_windows
    ds = make_windows([series], lookback=48, horizon=1)
    preds = seasonal_naive_predictions(ds)
    assert mse(preds, ds.targets) < 1e-25
