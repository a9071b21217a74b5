"""
Result files: metrics.csv, trace.csv and summary.json

Floats are written with repr() so two runs with identical inputs produce
byte-identical files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["round", "x_bar", "pad_frob_sq", "g_bar", "q_frob", "r_dev", "clamp_count", "wallclock_ms"]
TRACE_COLUMNS = ["round", "agent", "x_norm", "abs_delta", "clamped", "grad_norm", "g_norm", "reset_count"]


def format_value(value: Any) -> str:
    """repr for floats, empty cell for missing values"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class MetricsWriter:
    """Streams RoundMetrics rows to metrics.csv as they are recorded"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(METRICS_COLUMNS)
        self.rows = 0

    def write(self, metrics) -> None:
        self._writer.writerow([
            format_value(metrics.round),
            format_value(metrics.x_bar),
            format_value(metrics.pad),
            format_value(metrics.g_bar),
            format_value(metrics.q_frob),
            format_value(metrics.r_dev),
            format_value(metrics.clamp_count),
            format_value(metrics.wallclock_ms),
        ])
        self.rows += 1

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_trace(rows: Sequence[Dict[str, Any]], path: Path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([format_value(row[column]) for column in TRACE_COLUMNS])
    logger.info(f"Wrote {len(rows)} trace rows to {out_path}")
    return out_path


def read_metrics(path: Path) -> List[Dict[str, Optional[float]]]:
    """Parse a metrics.csv back into dicts of floats (None for empty cells)"""
    with open(path, "r", newline="") as f:
        return [
            {key: (float(value) if value != "" else None) for key, value in row.items()}
            for row in csv.DictReader(f)
        ]


def time_averages(history: Iterable, burn_in: int, T: int) -> Dict[str, Optional[float]]:
    """
    Averages of x_bar, pad and g_bar over the recorded rounds in [burn_in, T)

    Args:
        history: RoundMetrics rows
        burn_in: First round of the averaging window
        T: Total rounds; round T itself is excluded

    Returns:
        Dict with x_bar_T, pad_T (None when no pad was recorded), g_bar_T and the window size
    """
    window = [m for m in history if burn_in <= m.round < T and m.measured]
    if not window:
        return {"x_bar_T": None, "pad_T": None, "g_bar_T": None, "rounds_averaged": 0}
    pads = [m.pad for m in window if m.pad is not None]
    return {
        "x_bar_T": float(np.mean([m.x_bar for m in window])),
        "pad_T": float(np.mean(pads)) if pads else None,
        "g_bar_T": float(np.mean([m.g_bar for m in window])),
        "rounds_averaged": len(window),
    }


def is_monotone_nonincreasing(values: Sequence[Optional[float]]) -> bool:
    present = [v for v in values if v is not None]
    return all(later <= earlier for earlier, later in zip(present, present[1:]))


def write_summary(summary: Dict[str, Any], path: Path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote summary to {out_path}")
    return out_path
