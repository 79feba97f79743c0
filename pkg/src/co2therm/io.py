"""CSV ingestion, offset calibration and result export.

All data interchange is CSV: header row, comma separated, UTF-8, '.'
decimals.  Values are written with 17 significant digits so that
ingest -> export -> ingest round-trips doubles bit-exactly.  Missing cells
are fatal; no imputation happens anywhere.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import backend_name
from .benchmark import Dataset
from .errors import DataError
from .params import BlockLayout
from .windows import WindowResult


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_cell(text: str, path, row: int, col: str) -> float:
    text = text.strip()
    if not text:
        raise DataError(f"{path}: missing value at row {row}, column {col!r}")
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"{path}: unparsable value {text!r} at row {row}, "
                        f"column {col!r}") from exc


@dataclass(frozen=True)
class RawSensorTable:
    """Ingested sensor log: strictly increasing times, complete columns."""

    times: np.ndarray
    co2: np.ndarray             # (n_zones, N)
    temp: np.ndarray
    zone_ids: tuple[str, ...]
    ambient_co2: np.ndarray | None = None
    ambient_temp: np.ndarray | None = None


def default_schema(zone_ids) -> dict:
    """Column map for the canonical layout written by this package."""
    return {
        "time": "time_s",
        "co2": {z: f"co2_{z}" for z in zone_ids},
        "temp": {z: f"temp_{z}" for z in zone_ids},
        "ambient_co2": "ambient_co2",
        "ambient_temp": "ambient_temp",
    }


def load_sensor_csv(path, schema: dict) -> RawSensorTable:
    """Parse and validate a sensor CSV according to a column map.

    Timestamps are normalized to seconds from the first row.  Errors carry
    the offending row and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]

    col_index = {name: i for i, name in enumerate(header)}
    zone_ids = tuple(schema["co2"].keys())
    needed = [schema["time"]]
    needed += [schema["co2"][z] for z in zone_ids]
    needed += [schema["temp"][z] for z in zone_ids]
    for opt in ("ambient_co2", "ambient_temp"):
        if schema.get(opt):
            needed.append(schema[opt])
    for col in needed:
        if col not in col_index:
            raise DataError(f"{path}: missing required column {col!r}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    def column(col: str) -> np.ndarray:
        idx = col_index[col]
        out = np.empty(len(rows))
        for r, row in enumerate(rows):
            if idx >= len(row):
                raise DataError(f"{path}: missing value at row {r + 2}, "
                                f"column {col!r}")
            out[r] = _parse_cell(row[idx], path, r + 2, col)
        return out

    times = column(schema["time"])
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0)) + 2
        raise DataError(f"{path}: timestamps not strictly increasing at "
                        f"row {bad + 1}")
    times = times - times[0]

    co2 = np.vstack([column(schema["co2"][z]) for z in zone_ids])
    temp = np.vstack([column(schema["temp"][z]) for z in zone_ids])
    amb_c = column(schema["ambient_co2"]) if schema.get("ambient_co2") else None
    amb_t = column(schema["ambient_temp"]) if schema.get("ambient_temp") else None
    return RawSensorTable(times=times, co2=co2, temp=temp, zone_ids=zone_ids,
                          ambient_co2=amb_c, ambient_temp=amb_t)


def offset_calibrate(table: RawSensorTable,
                     baseline: tuple[float, float]) -> tuple[RawSensorTable, dict]:
    """Remove per-zone sensor bias using a quiet baseline interval.

    For each field, the offset of zone j is its baseline mean minus the grand
    mean across zones; subtracting it aligns all zone baselines on the grand
    mean.  Ambient reference columns are left untouched.  Idempotent.
    """
    t0, t1 = baseline
    mask = (table.times >= t0) & (table.times <= t1)
    if int(mask.sum()) < 2:
        raise DataError("baseline interval must contain at least two samples")

    offsets: dict[str, dict[str, float]] = {"co2": {}, "temp": {}}
    new = {}
    for field in ("co2", "temp"):
        mat = getattr(table, field)
        zone_means = mat[:, mask].mean(axis=1)
        grand = float(zone_means.mean())
        off = zone_means - grand
        offsets[field] = dict(zip(table.zone_ids, off.tolist()))
        new[field] = mat - off[:, None]
    calibrated = RawSensorTable(times=table.times, co2=new["co2"],
                                temp=new["temp"], zone_ids=table.zone_ids,
                                ambient_co2=table.ambient_co2,
                                ambient_temp=table.ambient_temp)
    return calibrated, offsets


def table_to_dataset(table: RawSensorTable, ambient_co2=None,
                     ambient_temp=None) -> Dataset:
    """Promote a sensor table to a dataset; ambient falls back to constants."""
    n = table.times.size

    def _series(explicit, column, what):
        if column is not None:
            return np.asarray(column, dtype=float)
        if explicit is None:
            raise DataError(f"no {what} column ingested and no fallback given")
        return np.full(n, float(explicit))

    return Dataset(times=table.times, co2=table.co2, temp=table.temp,
                   zone_ids=table.zone_ids,
                   ambient_co2=_series(ambient_co2, table.ambient_co2,
                                       "ambient CO2"),
                   ambient_temp=_series(ambient_temp, table.ambient_temp,
                                        "ambient temperature"))


def write_dataset_csv(dataset: Dataset, path, noiseless: bool = False) -> None:
    """Write observed (or noiseless-twin) series in the canonical layout."""
    co2 = dataset.noiseless_co2 if noiseless else dataset.co2
    temp = dataset.noiseless_temp if noiseless else dataset.temp
    if co2 is None or temp is None:
        raise DataError("dataset has no noiseless twin to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"]
                        + [f"co2_{z}" for z in dataset.zone_ids]
                        + [f"temp_{z}" for z in dataset.zone_ids]
                        + ["ambient_co2", "ambient_temp"])
        for k in range(dataset.times.size):
            writer.writerow([_fmt(dataset.times[k])]
                            + [_fmt(v) for v in co2[:, k]]
                            + [_fmt(v) for v in temp[:, k]]
                            + [_fmt(dataset.ambient_co2[k]),
                               _fmt(dataset.ambient_temp[k])])


def read_dataset_csv(path, zone_ids) -> Dataset:
    """Ingest a canonical dataset CSV back into a Dataset."""
    table = load_sensor_csv(path, default_schema(zone_ids))
    return table_to_dataset(table)


def write_table_csv(table: RawSensorTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        cols = (["time_s"] + [f"co2_{z}" for z in table.zone_ids]
                + [f"temp_{z}" for z in table.zone_ids])
        if table.ambient_co2 is not None:
            cols.append("ambient_co2")
        if table.ambient_temp is not None:
            cols.append("ambient_temp")
        writer.writerow(cols)
        for k in range(table.times.size):
            row = ([_fmt(table.times[k])]
                   + [_fmt(v) for v in table.co2[:, k]]
                   + [_fmt(v) for v in table.temp[:, k]])
            if table.ambient_co2 is not None:
                row.append(_fmt(table.ambient_co2[k]))
            if table.ambient_temp is not None:
                row.append(_fmt(table.ambient_temp[k]))
            writer.writerow(row)


def write_windows_csv(results: list[WindowResult], layout: BlockLayout,
                      path) -> None:
    """Per-window posterior means and 2.5/97.5% quantiles per coordinate."""
    names = layout.coordinate_names()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_index", "start_index", "start_time_s",
                         "window_size", "acceptance_rate"]
                        + [f"mean:{n}" for n in names]
                        + [f"q025:{n}" for n in names]
                        + [f"q975:{n}" for n in names])
        for idx, res in enumerate(results):
            flat = res.posterior_mean.flat()
            writer.writerow([idx, res.plan.start_index, _fmt(res.start_time),
                             res.plan.window_size, _fmt(res.acceptance_rate)]
                            + [_fmt(v) for v in flat]
                            + [_fmt(v) for v in res.q025]
                            + [_fmt(v) for v in res.q975])


def read_windows_csv(path, layout: BlockLayout) -> list[dict]:
    """Read back window summaries (means as flat vectors)."""
    names = layout.coordinate_names()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for r, rec in enumerate(reader):
            try:
                mean = np.array([float(rec[f"mean:{n}"]) for n in names])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: bad window row {r + 2}: {exc}") from exc
            rows.append({
                "window_index": int(rec["window_index"]),
                "start_index": int(rec["start_index"]),
                "start_time_s": float(rec["start_time_s"]),
                "window_size": int(rec["window_size"]),
                "acceptance_rate": float(rec["acceptance_rate"]),
                "mean": mean,
            })
    return rows


def write_predictive_csv(result: WindowResult, zone_ids, path) -> None:
    pred = result.predictive
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["time_s"]
        for z in zone_ids:
            header += [f"co2_mean_{z}", f"co2_lower_{z}", f"co2_upper_{z}"]
        for z in zone_ids:
            header += [f"temp_mean_{z}", f"temp_lower_{z}", f"temp_upper_{z}"]
        writer.writerow(header)
        for k in range(pred.times.size):
            row = [_fmt(pred.times[k] + result.start_time)]
            for j in range(len(zone_ids)):
                row += [_fmt(pred.co2_mean[j, k]), _fmt(pred.co2_lower[j, k]),
                        _fmt(pred.co2_upper[j, k])]
            for j in range(len(zone_ids)):
                row += [_fmt(pred.temp_mean[j, k]), _fmt(pred.temp_lower[j, k]),
                        _fmt(pred.temp_upper[j, k])]
            writer.writerow(row)


def write_rows_csv(rows: list[dict], fieldnames: list[str], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def write_run_manifest(out_dir, command: str, config_paths, seeds: dict) -> None:
    """Reproducibility record: config hashes, seeds, versions, backend.

    Deliberately timestamp-free so repeated runs with equal inputs produce
    byte-identical output directories.
    """
    from . import __version__

    hashes = {}
    for p in config_paths:
        p = Path(p)
        hashes[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "command": command,
        "config_sha256": hashes,
        "seeds": seeds,
        "versions": {
            "co2therm": __version__,
            "numpy": np.__version__,
            "backend": backend_name(),
        },
    }
    out = Path(out_dir) / "run_manifest.json"
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
