"""Persistence: binary snapshots with JSON sidecars, CSV tables, JSON reports."""

from __future__ import annotations

import csv
import json
import struct
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import Domain, Field
from .equilibria import EQUILIBRIUM_CSV_COLUMNS, EquilibriumRecord
from .reflection import LAMBDA_CSV_COLUMNS, capital_lambda, symmetry_defect

MAGIC = b"PSYMSNAP"
VERSION = 1
_HEAD = struct.Struct("<8sII")

DIAGNOSTICS_CSV_COLUMNS = ("t", "min_u", "max_u", "lambda", "symmetry_defect")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path: str | Path, field: Field, t: float = 0.0, extra: Mapping | None = None) -> Path:
    """Write ``field`` as header + little-endian float64 values; a ``.json`` sidecar repeats the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"t": float(t), "n": int(field.values.size), "domain": field.domain.to_dict()}
    if extra:
        header["extra"] = dict(extra)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    return path


def read_snapshot(path: str | Path) -> tuple[Field, float, dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise SnapshotFormatError("file too short")
    magic, version, hlen = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError("bad magic")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported version {version}")
    header = json.loads(data[_HEAD.size : _HEAD.size + hlen])
    values = np.frombuffer(data, dtype="<f8", offset=_HEAD.size + hlen)
    if values.size != header["n"]:
        raise SnapshotFormatError(f"expected {header['n']} values, found {values.size}")
    domain = Domain.from_dict(header["domain"])
    return Field(domain, values.astype(float)), float(header["t"]), header.get("extra", {})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    """CSV with a fixed column order; floats written with ``repr`` so output is bit-reproducible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: _fmt(row.get(c, "")) for c in columns})
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def diagnostics_rows(traj, tol_rel: float = 1e-9) -> list[dict]:
    rows = []
    for i, t in enumerate(traj.times):
        z = traj.field_at(i)
        rows.append({
            "t": t,
            "min_u": float(z.values.min()),
            "max_u": float(z.values.max()),
            "lambda": capital_lambda(z, tol_rel).value,
            "symmetry_defect": symmetry_defect(z),
        })
    return rows


def write_diagnostics(path, traj, tol_rel: float = 1e-9) -> Path:
    return write_csv(path, DIAGNOSTICS_CSV_COLUMNS, diagnostics_rows(traj, tol_rel))


def write_lambda_series(path, series) -> Path:
    return write_csv(path, LAMBDA_CSV_COLUMNS, series.csv_rows())


def write_equilibria(directory: str | Path, records: Sequence[EquilibriumRecord]) -> Path:
    """One snapshot per record plus ``index.csv``."""
    directory = Path(directory)
    rows = []
    for j, rec in enumerate(records):
        name = rec.name or f"eq{j:03d}"
        write_snapshot(directory / f"{name}.snap", rec.field, extra={"class": rec.cls})
        rows.append({**rec.index_row(), "name": name})
    return write_csv(directory / "index.csv", EQUILIBRIUM_CSV_COLUMNS, rows)


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_report(path: str | Path, report: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return path


def csv_schema() -> str:
    """Text of the shipped CSV column documentation."""
    return resources.files("parasym").joinpath("csv_schema.md").read_text()
