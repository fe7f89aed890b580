"""Snapshot and monitor-series files.

Snapshot CSV layout::

    # t=<repr>
    # n=<int>
    # N=<int>
    # dt_seed=<repr>
    u1,u2,...
    <row 0>
    ...

Floats are written with ``repr`` so a round trip is exact.  The binary
format is a numpy ``.npz`` archive holding the same fields.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .grid import Snapshot, StateField


class SnapshotError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def snapshot_to_csv(snap: Snapshot) -> str:
    values = snap.state.values
    n, N = values.shape
    lines = [f"# t={_fmt(snap.state.t)}", f"# n={n}", f"# N={N}", f"# dt_seed={_fmt(snap.dt_seed)}",
             ",".join(f"u{a + 1}" for a in range(N))]
    lines += [",".join(_fmt(v) for v in row) for row in values]
    return "\n".join(lines) + "\n"


def snapshot_from_csv(text: str) -> Snapshot:
    header = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key] = val
        elif line and not line.startswith("u"):
            rows.append([float(v) for v in line.split(",")])
    try:
        t, n, N, dt_seed = float(header["t"]), int(header["n"]), int(header["N"]), float(header["dt_seed"])
    except (KeyError, ValueError) as exc:
        raise SnapshotError(f"bad snapshot header: {exc}") from exc
    values = np.array(rows, dtype=float)
    if values.shape != (n, N):
        raise SnapshotError(f"snapshot body has shape {values.shape}, header says {(n, N)}")
    return Snapshot(StateField(t, values), dt_seed)


def write_snapshot(path, snap: Snapshot, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        path.write_text(snapshot_to_csv(snap))
    elif fmt == "npz":
        n, N = snap.state.values.shape
        # write through a buffer so the archive bytes do not depend on the file name
        buf = io.BytesIO()
        np.savez(buf, t=snap.state.t, n=n, N=N, dt_seed=snap.dt_seed, values=snap.state.values)
        path.write_bytes(buf.getvalue())
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return path


def read_snapshot(path) -> Snapshot:
    path = Path(path)
    if path.suffix == ".npz":
        try:
            with np.load(path) as z:
                values = np.array(z["values"], dtype=float)
                if values.shape != (int(z["n"]), int(z["N"])):
                    raise SnapshotError("snapshot shape mismatch")
                return Snapshot(StateField(float(z["t"]), values), float(z["dt_seed"]))
        except (KeyError, OSError, ValueError) as exc:
            raise SnapshotError(str(exc)) from exc
    return snapshot_from_csv(path.read_text())


def series_to_csv(series: dict) -> str:
    """One row per accepted step: t followed by each monitor column."""
    names = list(series)
    if not names:
        return "t\n"
    times = series[names[0]].times
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t"] + names)
    for i, t in enumerate(times):
        w.writerow([_fmt(t)] + [_fmt(series[nm].values[i]) for nm in names])
    return out.getvalue()


def series_from_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], rows[1:]
    cols = {name: [float(r[i]) for r in body] for i, name in enumerate(head)}
    return cols
