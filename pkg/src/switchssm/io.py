"""CSV and JSON helpers with lossless floats and atomic multi-file output."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

RESERVED = ("t", "traj", "label")


class DataFormatError(ValueError):
    """Input file does not follow the CSV conventions."""


def fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def csv_text(header, columns):
    """CSV with a header row; integer columns stay integers, floats get 17 digits."""
    cols = [np.asarray(c) for c in columns]
    n = {c.shape[0] for c in cols}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    ints = [np.issubdtype(c.dtype, np.integer) for c in cols]
    for i in range(n.pop()):
        w.writerow([str(int(c[i])) if isint else "%.17g" % float(c[i])
                    for c, isint in zip(cols, ints)])
    return buf.getvalue()


def series_csv(values, labels=None, traj=None):
    """Standard series table: ``t``, optional ``traj``, value columns, optional ``label``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    names = ["value"] if v.shape[1] == 1 else [f"x{i + 1}" for i in range(v.shape[1])]
    if traj is None:
        t = np.arange(v.shape[0])
    else:
        traj = np.asarray(traj, dtype=int)
        t = np.concatenate([np.arange(np.sum(traj == k)) for k in np.unique(traj)])
    header, cols = ["t"], [t]
    if traj is not None:
        header.append("traj")
        cols.append(traj)
    header += names
    cols += [v[:, i] for i in range(v.shape[1])]
    if labels is not None:
        header.append("label")
        cols.append(np.asarray(labels, dtype=int))
    return csv_text(header, cols)


def read_table(path):
    """``(header, rows)`` with every cell parsed as float."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0]:
        raise DataFormatError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    data = []
    for i, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != len(header):
            raise DataFormatError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from exc
    if not data:
        raise DataFormatError(f"{path}: no data rows")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: non-finite values")
    return header, arr


def read_series(path):
    """Values ``(T, d)``, labels or None, traj ids or None."""
    header, arr = read_table(path)
    idx = {h: i for i, h in enumerate(header)}
    vcols = [i for i, h in enumerate(header) if h not in RESERVED]
    if not vcols:
        raise DataFormatError(f"{path}: no value columns")
    labels = arr[:, idx["label"]].astype(int) if "label" in idx else None
    traj = arr[:, idx["traj"]].astype(int) if "traj" in idx else None
    return arr[:, vcols], labels, traj


def split_trajectories(values, traj):
    if traj is None:
        return [values]
    return [values[traj == k] for k in np.unique(traj)]


def json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


class OutputSet:
    """Collect output files in memory and write them all or none.

    Each file goes to a temporary name in the target directory and is renamed
    into place; on any failure the files already renamed are removed.
    """

    def __init__(self, directory):
        self.directory = directory
        self.files = {}

    def add(self, name, text):
        self.files[name] = text
        return os.path.join(self.directory, name)

    def commit(self):
        os.makedirs(self.directory, exist_ok=True)
        done = []
        try:
            for name, text in self.files.items():
                final = os.path.join(self.directory, name)
                fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.")
                try:
                    with os.fdopen(fd, "w", newline="") as f:
                        f.write(text)
                    os.replace(tmp, final)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
                done.append(final)
        except BaseException:
            for p in done:
                if os.path.exists(p):
                    os.unlink(p)
            raise
        return done
