"""
Result writers: CSV tables, JSON records and SVG line plots.

Provides:
- format_value(v) -> str     (repr for floats so reruns are byte-identical)
- write_csv(path, header, rows) -> str
- write_json(path, obj) -> str
- plot_timeseries(path, rows, columns, title) -> str
"""

import csv
import json
import math
import os
from typing import Any, Dict, Iterable, List, Sequence

from src.utilis import get_logger

log = get_logger("report")


def _ensure_dir(path: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return str(v)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    log.debug(f"wrote {path}")
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def write_json(path: str, obj: Dict[str, Any]) -> str:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True)
        f.write("\n")
    log.debug(f"wrote {path}")
    return path


def plot_timeseries(path: str, rows: List[Dict[str, float]], columns: Sequence[str], title: str = "") -> str:
    """Line plot of the selected columns against ``t``, saved as SVG."""
    import matplotlib  # local import to avoid hard dependency at import time

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    _ensure_dir(path)
    t = [r["t"] for r in rows]
    plt.figure(figsize=(10, 4))
    for col in columns:
        plt.plot(t, [r.get(col, math.nan) for r in rows], lw=1.5, label=col)
    plt.xlabel("t")
    plt.title(title)
    plt.grid(True, ls=":", alpha=0.5)
    plt.legend()
    plt.tight_layout()
    plt.savefig(path, format="svg")
    plt.close()
    log.info(f"saved plot -> {path}")
    return path


__all__ = ["format_value", "write_csv", "write_json", "plot_timeseries"]
