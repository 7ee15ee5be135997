"""CSV and JSON artifact formats.

CSV files carry a header row, UTF-8 text, '.' decimal separator, and
shortest round-trip float formatting, so reruns of the same (config, seed)
are byte-identical and diffable.  JSON reports keep a stable key order and
always embed the config and seed that produced them.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .integrator import SolutionTrace
from .reflection import PathBundle

__all__ = [
    "write_columns_csv",
    "write_bundle_csv",
    "write_trace_csv",
    "write_events_csv",
    "write_report",
    "load_config_file",
    "output_dir",
]

ENV_OUTPUT_DIR = "INELASTIC_LANGEVIN_OUT"


def output_dir(override: str | None = None) -> Path:
    """Artifact directory: flag value, else the environment default, else cwd."""
    root = override or os.environ.get(ENV_OUTPUT_DIR) or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(x) -> str:
    return repr(float(x))


def write_columns_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    if len(header) != len(columns):
        raise ConfigError("header and column count differ")
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ConfigError("columns must have equal length")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i in range(n):
        writer.writerow([_fmt(c[i]) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_bundle_csv(bundle: PathBundle, stem: Path) -> list[Path]:
    """Three files per bundle: original grid, clock grid, dual clock."""
    p1 = stem.with_name(stem.name + "_original.csv")
    write_columns_csv(
        p1, ["t", "W", "Y", "I"],
        [bundle.W.times, bundle.W.values, bundle.Y.values, bundle.I.values],
    )
    p2 = stem.with_name(stem.name + "_clock.csv")
    write_columns_csv(
        p2, ["s", "X", "V", "A", "B"],
        [bundle.X.times, bundle.X.values, bundle.V.values,
         bundle.A.values, bundle.B.values],
    )
    p3 = stem.with_name(stem.name + "_dual.csv")
    write_columns_csv(p3, ["s′", "B′"], [bundle.Bp.times, bundle.Bp.values])
    return [p1, p2, p3]


def write_trace_csv(trace: SolutionTrace, path: Path) -> Path:
    write_columns_csv(
        path, ["t", "X", "V", "A", "B"],
        [trace.X.times, trace.X.values, trace.V.values,
         trace.A.values, trace.B.values],
    )
    return path


def write_events_csv(events, path: Path) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "v_in", "jump"])
    for e in events:
        writer.writerow([_fmt(e.time), _fmt(e.v_in), _fmt(e.jump)])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_report(path: Path, command: str, config: dict, results: dict,
                 passed: bool | None = None) -> dict:
    """Emit a JSON report embedding the producing config (and its seed)."""
    report = {"command": command, "config": config, "results": results}
    if passed is not None:
        report["pass"] = bool(passed)
    path.write_text(json.dumps(report, indent=2, sort_keys=False) + "\n",
                    encoding="utf-8")
    return report


def load_config_file(path: str | Path, known_keys) -> dict:
    """JSON config file; unknown keys are rejected by name."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    for key in raw:
        if key not in known_keys:
            raise ConfigError(f"unknown config key {key!r}")
    return raw
