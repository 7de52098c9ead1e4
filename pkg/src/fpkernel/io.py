"""CSV and JSON artifacts.

Floats are written with ``repr``, the shortest string that round-trips to
the same double, so identical runs give byte-identical files.
"""
import csv
import hashlib
import json
import math

import numpy as np

from .snapshots import Snapshot, SnapshotSet

SNAPSHOT_HEADER = ("snapshot", "t", "x", "y")
SAMPLE_HEADER = ("snapshot", "t", "x")
COEFFICIENT_HEADER = ("snapshot", "i", "x_center", "t_snapshot", "coefficient")
GRID_HEADER = ("t", "x", "value")
GRID_TRUTH_HEADER = ("t", "x", "value", "value_truth")


def fmt(value):
    """Shortest round-trip text for a number; integers stay integral."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _read_rows(path, expected):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header not in expected:
            raise ValueError(f"{path}: unexpected header {','.join(header)!r}")
        return header, [row for row in reader if row]


def write_snapshots(path, data):
    """Snapshot CSV with snapshots numbered from 1, as in the coefficients CSV."""
    if data.labelled:
        rows = ((k, s.t, x, y) for k, s in enumerate(data, start=1) for x, y in zip(s.x, s.y))
        _write_rows(path, SNAPSHOT_HEADER, rows)
    else:
        rows = ((k, s.t, x) for k, s in enumerate(data, start=1) for x in s.x)
        _write_rows(path, SAMPLE_HEADER, rows)


def read_snapshots(path):
    """Read a snapshot CSV; rows are grouped by the ``snapshot`` column."""
    header, rows = _read_rows(path, (SNAPSHOT_HEADER, SAMPLE_HEADER))
    labelled = header == SNAPSHOT_HEADER
    groups = {}
    for row in rows:
        k = int(row[0])
        t = float(row[1])
        entry = groups.setdefault(k, (t, [], []))
        if entry[0] != t:
            raise ValueError(f"{path}: snapshot {k} has several times")
        entry[1].append(float(row[2]))
        if labelled:
            entry[2].append(float(row[3]))
    snaps = [Snapshot(t, np.array(xs), np.array(ys) if labelled else None) for _, (t, xs, ys) in sorted(groups.items())]
    return SnapshotSet(snaps)


def coefficient_rows(snapshot, index, centers, times, coefficients):
    return zip(snapshot, index, centers, times, coefficients)


def write_coefficients(path, rows):
    _write_rows(path, COEFFICIENT_HEADER, rows)


def read_coefficients(path):
    _, rows = _read_rows(path, (COEFFICIENT_HEADER,))
    return [(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows]


def write_grid(path, rows, with_truth):
    _write_rows(path, GRID_TRUTH_HEADER if with_truth else GRID_HEADER, rows)


def read_grid(path):
    header, rows = _read_rows(path, (GRID_HEADER, GRID_TRUTH_HEADER))
    return header, np.array([[float(v) for v in r] for r in rows]).reshape(-1, len(header))


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(path, obj):
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _json_value(o)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()
