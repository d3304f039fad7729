"""Text persistence for solved value tables.

Layout::

    # USS1
    # n=<n>
    # d=<d>
    # m=<grid size>
    # tol_x=<...>
    # tol_v=<...>
    i,k,v_0,...,v_{m-1}      one row per (i, k), i = 1..n+1, 17 significant digits

Thresholds are not stored; :func:`load_tables` recomputes them from the
loaded values, which reproduces them exactly.  Paths ending in ``.gz`` are
gzip-compressed transparently.
"""

from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .bellman import TOL_V, TOL_X, ProblemSpec, ThresholdTable, ValueTable, compute_thresholds
from .errors import ConfigurationError

FORMAT_VERSION = "USS1"


def _open(path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="ascii")
    return open(path, mode, encoding="ascii")


def save_table(vt: ValueTable, path) -> None:
    spec = vt.spec
    n, d, m = spec.n, spec.d, spec.m
    with _open(path, "w") as fh:
        fh.write(f"# {FORMAT_VERSION}\n# n={n}\n# d={d}\n# m={m}\n")
        fh.write(f"# tol_x={TOL_X!r}\n# tol_v={TOL_V!r}\n")
        for i in range(1, n + 2):
            for k in range(d + 1):
                body = ",".join(format(v, ".17g") for v in vt.row(i, k).tolist())
                fh.write(f"{i},{k},{body}\n")


def read_header(path) -> dict:
    header = {}
    with _open(path, "r") as fh:
        first = fh.readline().strip()
        if first != f"# {FORMAT_VERSION}":
            raise ConfigurationError(f"{path}: not a {FORMAT_VERSION} table (first line {first!r})")
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
    try:
        return {"n": int(header["n"]), "d": int(header["d"]), "m": int(header["m"]),
                "tol_x": float(header["tol_x"]), "tol_v": float(header["tol_v"])}
    except KeyError as exc:
        raise ConfigurationError(f"{path}: header is missing {exc}") from None


def load_value_table(path) -> ValueTable:
    meta = read_header(path)
    spec = ProblemSpec(meta["n"], meta["d"], meta["m"])
    values = np.empty((spec.n + 1, spec.d + 1, spec.m))
    seen = np.zeros((spec.n + 1, spec.d + 1), dtype=bool)
    with _open(path, "r") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split(",")
            i, k = int(fields[0]), int(fields[1])
            row = [float(v) for v in fields[2:]]
            if len(row) != spec.m or not (1 <= i <= spec.n + 1 and 0 <= k <= spec.d):
                raise ConfigurationError(f"{path}: malformed row for i={i}, k={k}")
            values[i - 1, k] = row
            seen[i - 1, k] = True
    if not seen.all():
        raise ConfigurationError(f"{path}: {int((~seen).sum())} (i, k) rows missing")
    return ValueTable(spec, values)


def load_tables(path) -> tuple[ValueTable, ThresholdTable]:
    vt = load_value_table(path)
    return vt, compute_thresholds(vt)
