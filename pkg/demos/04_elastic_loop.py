#!/usr/bin/env python3
# The full elastic loop: two spines are configured with fewer ECMP hash
# slots, so they carry little traffic and idle below the 6 us removal
# threshold. The knowledge plane forecasts five days ahead, spots them, and
# removes them; everything lands in the decision journal.

import tempfile
from pathlib import Path

from spinescale.config import (LatencyConfig, PolicySection, RunSection, SimConfig,
                               TopologyConfig, TrafficConfig, TrainingConfig)
from spinescale.forecaster import load_forecast_csv
from spinescale.pipeline import run_closed_loop
from spinescale.policy import replay_journal

cfg = SimConfig(seed=23)
# spines 0 and 4 get 1 hash slot each, spines 1-3 get 3: the light pair
# settles near 4 us while the heavy trio sits well above 6 us
cfg.topology = TopologyConfig(n_leaf=3, n_spine=5, capacity_bps=10_000_000_000,
                              base_latency_us=3.0, min_spines=2, max_spines=8,
                              spine_slots=[1, 3, 3, 3, 1])
cfg.latency = LatencyConfig(queue_factor=1.0, noise_us=0.15)
cfg.traffic = TrafficConfig(base_bps=12_500_000_000, diurnal_amp_bps=1_250_000_000,
                            noise_bps=150_000_000, flows_per_pair=64)
cfg.training = TrainingConfig(lookback_hours=48, epochs=25, dropout=0.2)
cfg.policy = PolicySection(remove_threshold_us=6.0, add_threshold_us=48.0,
                           cooldown_cycles=0, horizon_fraction=1.0)
cfg.run = RunSection(cycles=1, hours_per_cycle=10 * 24, horizon_hours=120)

out = Path(tempfile.mkdtemp(prefix="spinescale-demo-"))
print("running the closed loop (simulate -> train -> forecast -> decide -> apply)...")
manifest = run_closed_loop(cfg, out)

forecast = load_forecast_csv(out / "forecast.csv")
print("\n120-hour forecast per spine:")
for sid in forecast.spine_ids():
    preds = forecast.per_spine[sid]
    tag = "LOW, removable" if preds.max() < cfg.policy.remove_threshold_us else "loaded"
    print(f"  spine {sid}: {preds.min():.2f}..{preds.max():.2f} us  [{tag}]")

print("\ndecision journal:")
for entry in replay_journal(out / "journal.log"):
    print(f"  cycle {entry.cycle}: {entry.kind} spine={entry.spine_id} "
          f"({entry.reason}, mean {entry.mean_pred_us:.2f} us)")

print(f"\nfinal active spines: {manifest.cycles[-1]['active_spines']}")
print(f"artifacts under {out}")
