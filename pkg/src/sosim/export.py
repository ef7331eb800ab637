"""
Result files: per-timestep tables as CSV or JSON lines, supply curves as CSV.

Both formats open with the run's provenance (seed, config hash, RNG algorithm).
CSV carries it as `# key=value` comment lines, JSON lines as a first `meta`
record. Output depends only on the result, so identical runs give identical bytes.
"""

from __future__ import annotations

import io
import json
import logging
from pathlib import Path
from typing import Literal, TextIO

import pandas as pd

from sosim.scenario import RunResult, SupplyCurve

__all__ = ["ExportFormat", "curve_frame", "export_curve", "export_results", "results_frame"]

log = logging.getLogger(__name__)

ExportFormat = Literal["csv", "jsonl"]


def results_frame(result: RunResult) -> pd.DataFrame:
    """One row per timestep; `delivered_<label>` columns are empty where nothing was served."""
    rows = []
    for record in result.records:
        row: dict[str, object] = {
            "timestep": record.t,
            "scenario": result.scenario,
            "total_cost": record.total_cost,
            "total_shortfall": record.total_shortfall,
        }
        row |= {f"delivered_{label}": cost for label, cost in record.delivered}
        rows.append(row)
    columns = ["timestep", "scenario", "total_cost", "total_shortfall"]
    if result.records:
        columns += [f"delivered_{label}" for label, _ in result.records[0].delivered]
    return pd.DataFrame(rows, columns=columns)


def curve_frame(curve: SupplyCurve) -> pd.DataFrame:
    return pd.DataFrame(list(curve.steps), columns=["quantity", "cost"])


def _header(result: RunResult) -> dict[str, object]:
    return {
        "scenario": result.scenario,
        "seed": result.seed,
        "config_hash": result.config_hash,
        "rng_algorithm": result.rng_algorithm,
    }


def _render(result: RunResult, fmt: ExportFormat) -> str:
    frame = results_frame(result)
    buf = io.StringIO()
    match fmt:
        case "csv":
            for key, value in _header(result).items():
                buf.write(f"# {key}={value}\n")
            frame.to_csv(buf, index=False, lineterminator="\n")
        case "jsonl":
            buf.write(json.dumps({"meta": _header(result)}, sort_keys=True) + "\n")
            if len(frame):
                buf.write(frame.to_json(orient="records", lines=True, double_precision=15))
                if not buf.getvalue().endswith("\n"):
                    buf.write("\n")
        case _:
            raise ValueError(f"unknown export format {fmt!r}; use csv or jsonl")
    return buf.getvalue()


def _write(text: str, destination: Path | str | TextIO):
    if isinstance(destination, str | Path):
        Path(destination).write_text(text)
    else:
        destination.write(text)


def export_results(result: RunResult, fmt: ExportFormat, destination: Path | str | TextIO):
    """Write a run's per-timestep table to a path or an open text stream."""
    _write(_render(result, fmt), destination)
    log.debug("exported %d timesteps of %s as %s", len(result.records), result.scenario, fmt)


def export_curve(curve: SupplyCurve, destination: Path | str | TextIO):
    """(quantity, cost) rows of a supply curve; a truncated curve notes where it stopped."""
    buf = io.StringIO()
    buf.write(f"# curve={curve.name}\n")
    buf.write(f"# demanded={curve.demanded!r}\n")
    if curve.truncated:
        buf.write(f"# truncated_at={curve.truncated_at!r}\n")
    curve_frame(curve).to_csv(buf, index=False, lineterminator="\n")
    _write(buf.getvalue(), destination)
