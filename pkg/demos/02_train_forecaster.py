#!/usr/bin/env python3
# Train the conv + stacked-LSTM forecaster on two weeks of synthetic diurnal
# traffic and compare its validation error against the persistence and
# seasonal-naive baselines. Takes a minute or two on a laptop.

import time

from spinescale.baselines import mse, persistence_predictions, seasonal_naive_predictions
from spinescale.config import (LatencyConfig, SimConfig, TopologyConfig, TrafficConfig,
                               TrainingConfig)
from spinescale.forecaster import evaluate_mse, gradient_check, init_model, train
from spinescale.pipeline import (METRICS_TOPIC, build_datasets, series_from_bus,
                                 simulate_hours, topology_from_config)
from spinescale.telemetry import TopicBus

cfg = SimConfig(seed=11)
cfg.topology = TopologyConfig(n_leaf=3, n_spine=5, capacity_bps=10_000_000_000,
                              base_latency_us=3.0)
cfg.latency = LatencyConfig(queue_factor=1.0, noise_us=0.2)
cfg.traffic = TrafficConfig(base_bps=12_500_000_000, diurnal_amp_bps=5_000_000_000,
                            noise_bps=300_000_000, flows_per_pair=64)
cfg.training = TrainingConfig(lookback_hours=48, epochs=25, dropout=0.2)

print("simulating 14 days of diurnal traffic...")
topology = topology_from_config(cfg)
bus = TopicBus()
simulate_hours(cfg, topology, bus, METRICS_TOPIC, 0, 14 * 24, seed=cfg.seed)
series = series_from_bus(bus, METRICS_TOPIC, topology)

# 80/20 time split; the scaler sees only the training range, windows never
# straddle the boundary.
scaler, train_ds, val_ds = build_datasets(series, val_fraction=0.2,
                                          lookback=48, horizon=1)
print(f"windows: {len(train_ds)} train / {len(val_ds)} validation "
      f"({cfg.training.lookback_hours} h lookback, 3 channels)")

model = init_model(cfg.training, seed=cfg.seed, scaler=scaler)
t0 = time.time()
model, report = train(model, train_ds, seed=cfg.seed + 1, val_ds=val_ds)
print(f"trained {cfg.training.epochs} epochs in {time.time() - t0:.0f}s, "
      f"best epoch {report.best_epoch} "
      f"(val MSE {report.val_losses[report.best_epoch]:.3e})")

# the analytic BPTT gradients agree with central finite differences
err = gradient_check(model, val_ds.inputs[:4], val_ds.targets[:4])
print(f"gradient check: max relative error {err:.2e} (tolerance 1e-4)")

model_mse = evaluate_mse(model, val_ds)
pers_mse = mse(persistence_predictions(val_ds), val_ds.targets)
seas_mse = mse(seasonal_naive_predictions(val_ds), val_ds.targets)
print(f"validation MSE (normalized latency):")
print(f"  model            {model_mse:.3e}")
print(f"  persistence      {pers_mse:.3e}  (model {(1 - model_mse / pers_mse) * 100:+.1f}%)")
print(f"  seasonal-naive   {seas_mse:.3e}  (model {(1 - model_mse / seas_mse) * 100:+.1f}%)")
