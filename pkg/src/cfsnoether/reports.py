"""Report envelopes, CSV series and optional figures."""
from __future__ import annotations

import csv
import datetime as _dt
import math
from pathlib import Path

from . import __version__
from .io import write_json

# keys that differ between otherwise identical runs
VOLATILE_KEYS = ("timestamp",)


def _clean(obj):
    """Convert numpy scalars and containers to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def envelope(command: str, seed: int, passed: bool | None, body: dict, inputs: dict | None = None) -> dict:
    return _clean({
        "command": command,
        "seed": seed,
        "passed": passed,
        "inputs": inputs or {},
        "result": body,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    })


def strip_volatile(report: dict) -> dict:
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}


def write_report(path, report: dict) -> Path:
    return write_json(path, report)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return path


def sibling(path, suffix: str) -> Path:
    """report.json -> report<suffix> in the same directory."""
    path = Path(path)
    return path.with_name(path.stem + suffix)


def plot_series(path, x, series: dict, xlabel: str, ylabel: str, logx=False, logy=False,
                title: str | None = None) -> Path:
    """Line plot of one or more series against x, rendered off-screen."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, ys in series.items():
        vals = [abs(v) for v in ys] if logy else list(ys)
        ax.plot(x, vals, marker="o", ms=3, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
