"""Next-hour requirement prediction from total-quantity history.

An LSTM reads the past 24 hourly totals and predicts the next hour; it is
trained with mini-batch Adam on mean squared error over sliding windows of
a recorded episode. A two-lag reference predictor, the average of the
values one hour and one day back, provides the comparison bar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .nn import Adam, Lstm, NumericError

WINDOW = 24  # hours of history per prediction


@dataclass
class ForecastDataset:
    """Sliding windows over a series, min-max normalized to [0, 1].

    inputs[k] covers series[k .. k+23] and targets[k] is series[k+24];
    lo/hi are the normalization constants for the inverse transform.
    """

    inputs: np.ndarray   # (n_samples, 24), normalized
    targets: np.ndarray  # (n_samples,), normalized
    lo: float
    hi: float

    def __len__(self) -> int:
        return len(self.targets)

    def denormalize(self, v):
        return self.lo + np.asarray(v) * (self.hi - self.lo)


def make_dataset(series) -> ForecastDataset:
    """Split a series into stride-1 windows of 24 plus next-hour targets."""
    values = np.asarray(series, dtype=float)
    if values.ndim != 1 or len(values) < WINDOW + 1:
        raise ValueError(f"series must be 1-D with >= {WINDOW + 1} values, got shape {values.shape}")
    lo = float(values.min())
    hi = float(values.max())
    norm = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    n = len(values) - WINDOW
    inputs = np.lib.stride_tricks.sliding_window_view(norm, WINDOW)[:n].copy()
    targets = norm[WINDOW:].copy()
    return ForecastDataset(inputs=inputs, targets=targets, lo=lo, hi=hi)


def baseline_predict(series, t: int) -> float:
    """Two-lag reference: the mean of the values at t-1 and t-24."""
    if t < WINDOW:
        raise ValueError(f"need t >= {WINDOW}, got {t}")
    values = np.asarray(series, dtype=float)
    return 0.5 * (float(values[t - 1]) + float(values[t - WINDOW]))


@dataclass
class Forecaster:
    """Trained LSTM head plus the normalization it was fitted under."""

    lstm: Lstm
    lo: float
    hi: float

    def _normalize(self, window: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        return (window - self.lo) / span if span > 0 else np.zeros_like(window)

    def predict_normalized(self, last_24) -> float:
        """Next-hour prediction in normalized [0, 1]-scale units."""
        window = np.asarray(last_24, dtype=float)
        if window.shape != (WINDOW,):
            raise ValueError(f"window must have shape ({WINDOW},), got {window.shape}")
        return float(self.lstm.forward_batch(self._normalize(window)[None, :])[0])

    def predict(self, last_24) -> float:
        """Next-hour prediction on the original series scale."""
        return self.lo + self.predict_normalized(last_24) * (self.hi - self.lo)

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        """Raw-scale predictions for a (n, 24) array of raw-scale windows."""
        windows = np.asarray(windows, dtype=float)
        preds = self.lstm.forward_batch(self._normalize(windows))
        return self.lo + preds * (self.hi - self.lo)

    def predict_batch_normalized(self, windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows, dtype=float)
        return self.lstm.forward_batch(self._normalize(windows))


def train_lstm(dataset: ForecastDataset, units: int = 32, epochs: int = 50, seed: int = 0,
               batch_size: int = 32, learning_rate: float = 5e-3) -> tuple[Forecaster, float]:
    """Fit an LSTM to the dataset with mini-batch Adam on squared error.

    Returns the forecaster and the final full-training-set MSE (normalized
    scale). Raises NumericError naming the epoch if the loss goes non-finite.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    lstm = Lstm.random(1, units, int(rng.integers(2**31)))
    opt = Adam(learning_rate=learning_rate)
    x, y = dataset.inputs, dataset.targets
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            sel = order[start:start + batch_size]
            preds, cache = lstm._forward_batch_cache(x[sel][:, :, None])
            err = preds - y[sel]
            if not np.all(np.isfinite(err)):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            grads = lstm._backward_from_cache(cache, 2.0 * err / len(sel))
            opt.step(lstm, grads)
    final_mse = float(np.mean((lstm.forward_batch(x) - y) ** 2))
    if not np.isfinite(final_mse):
        raise NumericError(f"non-finite loss at epoch {epochs - 1}")
    return Forecaster(lstm=lstm, lo=dataset.lo, hi=dataset.hi), final_mse


def holdout_mse(series, forecaster: Forecaster, holdout_frac: float = 0.2) -> tuple[float, float]:
    """(LSTM MSE, two-lag reference MSE) on the last fraction of windows.

    Both are evaluated on the raw series scale over identical target hours.
    """
    values = np.asarray(series, dtype=float)
    n = len(values) - WINDOW
    split = n - max(1, int(round(holdout_frac * n)))
    windows = np.lib.stride_tricks.sliding_window_view(values, WINDOW)[split:n]
    targets = values[WINDOW + split:]
    lstm_preds = forecaster.predict_batch(windows)
    ref_preds = np.array([baseline_predict(values, t) for t in range(WINDOW + split, len(values))])
    return (float(np.mean((lstm_preds - targets) ** 2)),
            float(np.mean((ref_preds - targets) ** 2)))


def train_forecaster(series, units: int = 32, epochs: int = 50, seed: int = 0,
                     batch_size: int = 32, learning_rate: float = 5e-3,
                     holdout_frac: float = 0.2) -> tuple[Forecaster, float]:
    """Fit on the first (1 - holdout_frac) of windows, keeping the tail unseen."""
    dataset = make_dataset(series)
    n = len(dataset)
    split = n - max(1, int(round(holdout_frac * n)))
    train = ForecastDataset(inputs=dataset.inputs[:split], targets=dataset.targets[:split],
                            lo=dataset.lo, hi=dataset.hi)
    return train_lstm(train, units=units, epochs=epochs, seed=seed,
                      batch_size=batch_size, learning_rate=learning_rate)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_forecaster(forecaster: Forecaster, path: str) -> None:
    blob = {
        "kind": "forecaster",
        "lo": forecaster.lo,
        "hi": forecaster.hi,
        "units": forecaster.lstm.units,
        "input_dim": forecaster.lstm.input_dim,
        "arrays": [p.reshape(-1).tolist() for p in forecaster.lstm.params()],
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_forecaster(path: str) -> Forecaster:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("kind") != "forecaster":
        raise ValueError(f"{path} is not a forecaster checkpoint")
    lstm = Lstm.zeros(blob["input_dim"], blob["units"])
    for p, flat in zip(lstm.params(), blob["arrays"]):
        p[...] = np.asarray(flat, dtype=float).reshape(p.shape)
    return Forecaster(lstm=lstm, lo=blob["lo"], hi=blob["hi"])


def save_series_csv(series, path: str) -> None:
    """Two-column export: hour index, total quantity."""
    values = np.asarray(series, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "total_quantity"])
        for t, v in enumerate(values):
            writer.writerow([t, v])


def load_series_csv(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["total_quantity"]) for r in rows])
