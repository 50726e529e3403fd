"""Per-epoch loss curves as CSV, plus epochs-to-threshold summaries."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import numpy as np

from .ranking import LEVELS
from .train import TrainTrace

CURVE_COLUMNS = ("epoch", "L_point", "L_pair", "L_list", "joint", "dev_map")
SUMMARY_COLUMNS = ("run", "epochs", "best_epoch", "epochs_to_dev_map", "epochs_to_list_loss",
                   "first_L_list", "final_L_list")


def epochs_to_dev_map(trace: TrainTrace, threshold: float = 0.9) -> int | None:
    """First epoch whose dev MAP reaches ``threshold`` (None if never)."""
    return next((e.epoch for e in trace.epochs if e.dev_map >= threshold), None)


def epochs_to_list_loss(trace: TrainTrace, fraction: float = 0.1) -> int | None:
    """First epoch whose L_list is at most ``fraction`` of the first epoch's value."""
    values = [e.losses.get("list") for e in trace.epochs]
    if not values or values[0] is None:
        return None
    target = fraction * values[0]
    return next((e.epoch for e, v in zip(trace.epochs, values) if v <= target), None)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_curve(trace: TrainTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for e in trace.epochs:
            w.writerow([e.epoch] + [_fmt(e.losses.get(lvl)) for lvl in LEVELS]
                       + [_fmt(e.joint), _fmt(e.dev_map)])


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name).strip("_")


def emit_curves(traces: Mapping[str, TrainTrace], out_dir: str | Path,
                dev_threshold: float = 0.9, loss_fraction: float = 0.1) -> dict:
    """Write ``curve_<run>.csv`` per trace and ``curves_summary.csv``; return the summary rows."""
    if not traces:
        raise ValueError("emit_curves needs at least one trace")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, trace in traces.items():
        write_curve(trace, out / f"curve_{_safe(name)}.csv")
        first = trace.epochs[0].losses.get("list") if trace.epochs else None
        last = trace.epochs[-1].losses.get("list") if trace.epochs else None
        rows.append({
            "run": name,
            "epochs": len(trace.epochs),
            "best_epoch": trace.best_epoch,
            "epochs_to_dev_map": epochs_to_dev_map(trace, dev_threshold),
            "epochs_to_list_loss": epochs_to_list_loss(trace, loss_fraction),
            "first_L_list": first,
            "final_L_list": last,
        })
    with (out / "curves_summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return {"rows": rows, "dev_threshold": dev_threshold, "loss_fraction": loss_fraction}


def mean_epochs(rows, key: str = "epochs_to_dev_map") -> float | None:
    """Mean of ``key`` over rows; a run that never reached the threshold counts its full length."""
    vals = [r[key] if r[key] is not None else r["epochs"] for r in rows]
    return float(np.mean(vals)) if vals else None
