"""Flat-file emission and re-parsing: CSV tables, key-value records, locks.

Every artifact the batch interface writes can be read back by the
functions here (round-trip property).  Floats are printed with 17
significant digits so oracle comparisons are bit-stable.
"""

from __future__ import annotations

import csv
import json
import math
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "format_value",
    "write_csv",
    "read_csv",
    "write_record",
    "read_record",
    "write_field",
    "read_field",
    "write_json",
    "read_json",
    "output_lock",
]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    return str(v)


def _parse_scalar(text: str):
    t = text.strip()
    if t == "true":
        return True
    if t == "false":
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path):
    """Returns (header, rows) with scalars parsed back to python values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse_scalar(v) for v in row] for row in reader]
    return header, rows


def write_record(path, rows: Iterable[Sequence]) -> None:
    """Key-value structured text record: key,value,units,provenance lines."""
    write_csv(path, ("key", "value", "units", "provenance"), rows)


def read_record(path) -> dict:
    _, rows = read_csv(path)
    return {row[0]: row[1] for row in rows}


def write_field(path, x, u) -> None:
    write_csv(path, ("x", "u"), zip(x, u))


def read_field(path):
    import numpy as np

    _, rows = read_csv(path)
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


def write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@contextmanager
def output_lock(outdir):
    """Exclusive lock on an output directory; refuses concurrent writers."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {outdir} is locked by another run "
            f"(remove {lock} if that run is dead)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield outdir
    finally:
        lock.unlink(missing_ok=True)
