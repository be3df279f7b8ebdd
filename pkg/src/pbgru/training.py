"""Training loop (L1 loss, Adam, step-decay schedule) and evaluation.

Loss is computed on Z-scored values; metrics are computed after inverting the
Z-score so they are in passengers per interval.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ZScoreStats
from .errors import DataError, NumericError, ShapeError
from .model import ModelGraphs, ModelSpec, forward
from .numerics import AdamState, Rng, Tensor, adam_step

CHANNEL_NAMES = ("inflow", "outflow")


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over every element (subgradient 0 at exact ties)."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs target {target.shape}")
    return (pred - target).abs().mean()


def lr_schedule(epoch: int, lr: float = 1e-3, decay: float = 0.5, every: int = 40) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return lr * decay ** (epoch // every)


# -- metrics -----------------------------------------------------------------


def _metric_cell(y_true: np.ndarray, y_pred: np.ndarray, mape_min_true: float) -> dict:
    err = y_pred - y_true
    mask = y_true >= mape_min_true
    kept = int(mask.sum())
    return {
        "MAE": float(np.mean(np.abs(err))),
        "RMSE": float(np.sqrt(np.mean(err * err))),
        "MAPE": float(np.mean(np.abs(err[mask]) / y_true[mask])) if kept else float("nan"),
        "count": int(err.size),
        "mape_count": kept,
        "mape_masked": int(err.size - kept),
    }


@dataclass
class EvalReport:
    interval_minutes: int
    samples: int
    horizons: dict[str, dict[str, dict]] = field(default_factory=dict)

    def cell(self, horizon_step: int, channel: str = "combined") -> dict:
        return self.horizons[f"{horizon_step * self.interval_minutes}min"][channel]

    def mean_mae(self, channel: str = "combined") -> float:
        return float(np.mean([h[channel]["MAE"] for h in self.horizons.values()]))

    def check(self) -> None:
        for hkey, chans in self.horizons.items():
            for ch, cell in chans.items():
                for k in ("MAE", "RMSE"):
                    if not cell[k] >= 0:
                        raise NumericError(f"{hkey}/{ch}: {k} is negative or NaN")
                # float rounding can put RMSE a few ulps under MAE when all errors are equal
                if cell["RMSE"] < cell["MAE"] * (1 - 1e-12):
                    raise NumericError(f"{hkey}/{ch}: RMSE {cell['RMSE']} < MAE {cell['MAE']}")

    def to_dict(self) -> dict:
        return {"interval_minutes": self.interval_minutes, "samples": self.samples, "horizons": self.horizons}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray, interval_minutes: int = 15,
                    mape_min_true: float = 1.0) -> EvalReport:
    """Metrics per horizon step from ``[S, t_out, n, 2]`` arrays in raw units."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"metrics: truth {y_true.shape} vs prediction {y_pred.shape}")
    if y_true.size == 0:
        raise DataError("cannot evaluate an empty test set")
    report = EvalReport(interval_minutes, int(y_true.shape[0]))
    for h in range(y_true.shape[1]):
        cells = {}
        for c, name in enumerate(CHANNEL_NAMES):
            cells[name] = _metric_cell(y_true[:, h, :, c], y_pred[:, h, :, c], mape_min_true)
        cells["combined"] = _metric_cell(y_true[:, h], y_pred[:, h], mape_min_true)
        report.horizons[f"{(h + 1) * interval_minutes}min"] = cells
    report.check()
    return report


# -- prediction and evaluation -----------------------------------------------


def predict(params, graphs: ModelGraphs, spec: ModelSpec, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode predictions in Z-scored units, ``[S, t_out, n, 2]``."""
    outs = []
    for start in range(0, x.shape[0], batch_size):
        outs.append(forward(x[start:start + batch_size], graphs, params, spec, "eval").values)
    if not outs:
        return np.zeros((0, spec.t_out, graphs.n, 2))
    return np.concatenate(outs, axis=0)


def evaluate(params, graphs: ModelGraphs, spec: ModelSpec, x: np.ndarray, y_raw: np.ndarray,
             stats: ZScoreStats, interval_minutes: int = 15, mape_min_true: float = 1.0,
             return_predictions: bool = False):
    """Evaluate on windows whose inputs are Z-scored and whose targets are raw."""
    if x.shape[0] == 0:
        raise DataError("cannot evaluate an empty test set")
    pred = stats.inverse(predict(params, graphs, spec, x))
    report = compute_metrics(y_raw, pred, interval_minutes, mape_min_true)
    return (report, pred) if return_predictions else report


def export_predictions(path, y_true: np.ndarray, y_pred: np.ndarray) -> None:
    """CSV ``window_id,horizon_step,station_id,channel,y_true,y_pred`` (steps 1-based)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_id", "horizon_step", "station_id", "channel", "y_true", "y_pred"])
        s_count, t_out, n, _ = y_true.shape
        for s in range(s_count):
            for h in range(t_out):
                for i in range(n):
                    for c, name in enumerate(CHANNEL_NAMES):
                        w.writerow([s, h + 1, i, name, repr(float(y_true[s, h, i, c])),
                                    repr(float(y_pred[s, h, i, c]))])


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    log: list[dict]
    best_epoch: int
    final_params: dict[str, Tensor]


def _copy(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(v.values, requires_grad=True) for k, v in params.items()}


def train(params: dict[str, Tensor], spec: ModelSpec, graphs: ModelGraphs,
          train_x: np.ndarray, train_y: np.ndarray, *, epochs: int, batch_size: int, lr: float = 1e-3,
          lr_decay: float = 0.5, lr_decay_every: int = 40, seed: int = 0,
          val_x: np.ndarray | None = None, val_y_raw: np.ndarray | None = None, stats: ZScoreStats | None = None,
          interval_minutes: int = 15, log_fn=None) -> TrainResult:
    """Mini-batch Adam on the L1 loss.

    ``train_x``/``train_y`` are Z-scored. When validation windows are given the
    returned parameters are those of the epoch with the lowest validation MAE
    (mean over horizons, raw units); otherwise those of the final epoch.
    """
    if train_x.shape[0] == 0:
        raise DataError("no training windows")
    rng = Rng(seed)
    shuffle_rng = rng.child("shuffle")
    dropout_rng = rng.child("dropout")
    state = AdamState(lr=lr)
    params = _copy(params)
    has_val = val_x is not None and val_x.shape[0] > 0
    if has_val and stats is None:
        raise ValueError("validation needs the training Z-score statistics")
    log: list[dict] = []
    best, best_epoch, best_val = _copy(params), 0, math.inf
    batch_index = 0
    for epoch in range(epochs):
        started = time.perf_counter()
        state.lr = lr_schedule(epoch, lr, lr_decay, lr_decay_every)
        order = shuffle_rng.permutation(train_x.shape[0])
        total, count = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            try:
                pred = forward(train_x[idx], graphs, params, spec, "train", dropout_rng)
                loss = l1_loss(pred, train_y[idx])
                loss.backward()
                grads = {k: p.grad for k, p in params.items()}
                params, state = adam_step(params, grads, state)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}, batch {batch_index}: {exc}") from exc
            total += loss.item() * len(idx)
            count += len(idx)
            batch_index += 1
        val_mae = math.nan
        if has_val:
            val_mae = evaluate(params, graphs, spec, val_x, val_y_raw, stats, interval_minutes).mean_mae()
            if val_mae < best_val:
                best, best_epoch, best_val = _copy(params), epoch + 1, val_mae
        row = {"epoch": epoch + 1, "train_loss": total / count, "val_mae": val_mae, "lr": state.lr,
               "seconds": time.perf_counter() - started}
        log.append(row)
        if log_fn is not None:
            log_fn(row)
    if not has_val:
        best, best_epoch = _copy(params), epochs
    return TrainResult(best, log, best_epoch, params)


def write_log(path, log: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mae", "lr", "seconds"])
        for row in log:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_mae"]), repr(row["lr"]),
                        f"{row['seconds']:.6f}"])
