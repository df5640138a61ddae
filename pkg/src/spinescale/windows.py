"""Turn minute-level link samples into normalized per-switch training windows.

Pipeline: aggregate_hourly -> split_train_val -> Scaler.fit on the training
split only -> make_windows. Each window is [lookback hours x 3 channels]
(latency, fabric speed, edge speed) with a next-step normalized-latency
target; windows from all switches are stacked into one dataset with the
switch id carried as metadata, not as an input channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, GapError, InsufficientDataError, InvalidConfigError
from .fabric import LinkMetricSample, Topology

N_CHANNELS = 3  # latency, fabric speed, edge speed


@dataclass
class SwitchSeries:
    """Hourly metric channels for one spine switch, hours contiguous."""
    spine_id: int
    start_hour: int
    latency_us: np.ndarray
    fabric_bps: np.ndarray
    edge_bps: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.latency_us) == len(self.fabric_bps) == len(self.edge_bps)):
            raise DataError(f"channel lengths differ for spine {self.spine_id}")

    def __len__(self) -> int:
        return len(self.latency_us)

    def channels(self) -> np.ndarray:
        """Stacked [T, 3] array in (latency, fabric, edge) order."""
        return np.stack([self.latency_us, self.fabric_bps, self.edge_bps], axis=1)

    @classmethod
    def from_channels(cls, spine_id: int, start_hour: int, data: np.ndarray) -> "SwitchSeries":
        return cls(spine_id=spine_id, start_hour=start_hour,
                   latency_us=data[:, 0].copy(), fabric_bps=data[:, 1].copy(),
                   edge_bps=data[:, 2].copy())


def aggregate_hourly(samples: list[LinkMetricSample],
                     topology: Topology | None = None) -> list[SwitchSeries]:
    """Per-spine hourly means of the three channels, sorted by spine id.

    Latency and fabric speed are averaged over the spine's links; edge
    speed is averaged over the same samples, which (one sample per link)
    equals the mean over the spine's leaves. An hour with no samples for
    an active spine is a gap error, never imputed. Order-insensitive.

    With topology=None (replaying a log with no live topology) the spine
    set is taken from the samples themselves.
    """
    if not samples:
        raise InsufficientDataError("no samples to aggregate")
    if topology is not None:
        active = topology.active_spine_ids
    else:
        active = sorted({s.spine_id for s in samples})
    # canonical accumulation order so the result is bit-identical for any
    # input permutation
    samples = sorted(samples, key=lambda s: (s.spine_id, s.ts, s.link_id))
    hours = sorted({s.ts // 60 for s in samples})
    h_min, h_max = hours[0], hours[-1]

    sums: dict[tuple[int, int], np.ndarray] = {}
    counts: dict[tuple[int, int], int] = {}
    for s in samples:
        key = (s.spine_id, s.ts // 60)
        acc = sums.get(key)
        if acc is None:
            sums[key] = np.array([s.latency_us, s.fabric_bps, s.edge_bps], dtype=np.float64)
            counts[key] = 1
        else:
            acc += (s.latency_us, s.fabric_bps, s.edge_bps)
            counts[key] += 1

    series: list[SwitchSeries] = []
    for spine_id in active:
        rows = np.empty((h_max - h_min + 1, N_CHANNELS), dtype=np.float64)
        for hour in range(h_min, h_max + 1):
            key = (spine_id, hour)
            if key not in sums:
                raise GapError(f"spine {spine_id} has no samples for hour {hour}")
            rows[hour - h_min] = sums[key] / counts[key]
        if not np.isfinite(rows).all():
            raise DataError(f"non-finite aggregate for spine {spine_id}")
        series.append(SwitchSeries.from_channels(spine_id, h_min, rows))
    return series


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    """Per-channel min-max map onto [0, 1], fitted on the training split.

    A constant channel (max == min) maps every value to 0; inverting then
    returns the original constant, so invert(apply(x)) == x still holds.
    """
    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, series_list: list[SwitchSeries]) -> "Scaler":
        if not series_list:
            raise InsufficientDataError("cannot fit a scaler on an empty training split")
        stacked = np.concatenate([s.channels() for s in series_list], axis=0)
        if not np.isfinite(stacked).all():
            raise DataError("non-finite values in scaler training data")
        return cls(mins=stacked.min(axis=0), maxs=stacked.max(axis=0))

    def _span(self) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(span == 0.0, 1.0, span)

    def transform(self, data: np.ndarray) -> np.ndarray:
        """Normalize a [T, 3] (or [3]) channel array."""
        if not np.isfinite(data).all():
            raise DataError("non-finite values passed to scaler")
        return (data - self.mins) / self._span()

    def invert(self, data: np.ndarray) -> np.ndarray:
        return data * self._span() + self.mins

    def transform_series(self, series: SwitchSeries) -> SwitchSeries:
        data = self.transform(series.channels())
        return SwitchSeries.from_channels(series.spine_id, series.start_hour, data)

    def transform_latency(self, values: np.ndarray | float) -> np.ndarray | float:
        span = float(self._span()[0])
        return (values - float(self.mins[0])) / span

    def invert_latency(self, values: np.ndarray | float) -> np.ndarray | float:
        span = float(self._span()[0])
        return values * span + float(self.mins[0])


def split_train_val(series_list: list[SwitchSeries], val_fraction: float
                    ) -> tuple[list[SwitchSeries], list[SwitchSeries]]:
    """Split each series by time, earliest (1-val_fraction) for training.

    Windows are built per split afterwards, so none straddles the boundary.
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidConfigError(f"val_fraction must be in (0,1), got {val_fraction}")
    train, val = [], []
    for s in series_list:
        cut = int(len(s) * (1.0 - val_fraction))
        if cut == 0 or cut == len(s):
            raise InsufficientDataError(
                f"series for spine {s.spine_id} too short ({len(s)} h) to split")
        data = s.channels()
        train.append(SwitchSeries.from_channels(s.spine_id, s.start_hour, data[:cut]))
        val.append(SwitchSeries.from_channels(s.spine_id, s.start_hour + cut, data[cut:]))
    return train, val


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

@dataclass
class WindowedDataset:
    """Stacked lookback windows over all switches.

    inputs:  [num_samples, lookback, 3] normalized channels
    targets: [num_samples] normalized latency `horizon` steps after each
             window's last input hour
    spine_ids: [num_samples] switch label per sample (metadata)
    """
    inputs: np.ndarray
    targets: np.ndarray
    spine_ids: np.ndarray
    lookback: int
    horizon: int

    def __len__(self) -> int:
        return len(self.targets)


def make_windows(series_list: list[SwitchSeries], lookback: int, horizon: int = 1
                 ) -> WindowedDataset:
    """Slide a lookback window over each normalized series.

    Sample i of a length-T series takes hours [i, i+lookback) as input and
    the latency at hour i+lookback+horizon-1 as target, giving
    T - lookback - horizon + 1 samples per switch.
    """
    if lookback < 1 or horizon < 1:
        raise InvalidConfigError("lookback and horizon must be >= 1")
    all_inputs, all_targets, all_labels = [], [], []
    for s in series_list:
        T = len(s)
        count = T - lookback - horizon + 1
        if count < 1:
            raise InsufficientDataError(
                f"spine {s.spine_id}: series length {T} < lookback {lookback} + horizon {horizon}")
        data = s.channels()
        for i in range(count):
            all_inputs.append(data[i:i + lookback])
            all_targets.append(data[i + lookback + horizon - 1, 0])
            all_labels.append(s.spine_id)
    return WindowedDataset(
        inputs=np.asarray(all_inputs, dtype=np.float64),
        targets=np.asarray(all_targets, dtype=np.float64),
        spine_ids=np.asarray(all_labels, dtype=np.int64),
        lookback=lookback,
        horizon=horizon,
    )


def export_windows(dataset: WindowedDataset, path) -> int:
    """Write the dataset as columnar text for offline inspection.

    Header then one row per (sample, step):
        sample,spine_id,step,latency,fabric,edge,target
    target is repeated on each of the sample's rows. Returns rows written.
    """
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample,spine_id,step,latency,fabric,edge,target\n")
        for i in range(len(dataset)):
            sid = int(dataset.spine_ids[i])
            tgt = repr(float(dataset.targets[i]))
            for step in range(dataset.lookback):
                lat, fab, edg = (repr(float(v)) for v in dataset.inputs[i, step])
                fh.write(f"{i},{sid},{step},{lat},{fab},{edg},{tgt}\n")
                rows += 1
    return rows
