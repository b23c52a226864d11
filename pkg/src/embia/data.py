"""Dataset container and loaders for the clustering models.

Three data kinds are supported:

* ``continuous`` -- real n x m matrix (Gaussian mixtures),
* ``binary``     -- n x M matrix with entries in {0, 1} (latent class),
* ``network``    -- n x n symmetric binary adjacency, zero diagonal
  (stochastic block models).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "load_matrix",
    "load_edgelist",
    "builtin_karate",
    "summarize",
    "resolve_fixture",
]

KINDS = ("continuous", "binary", "network")


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable observed-data record.

    ``payload`` is stored as a read-only float array; ``row_ids`` and
    ``column_ids`` are optional labels carried through to reports.
    """

    kind: str
    payload: np.ndarray
    row_ids: tuple[str, ...] | None = None
    column_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        payload = np.asarray(self.payload, dtype=float)
        if payload.ndim != 2:
            raise ValueError(f"payload must be 2-d, got shape {payload.shape}")
        if payload.size == 0:
            raise ValueError("payload is empty")
        if not np.isfinite(payload).all():
            i, j = np.argwhere(~np.isfinite(payload))[0]
            raise ValueError(f"non-finite value at row {i + 1}, column {j + 1}")
        if self.kind == "binary":
            bad = (payload != 0.0) & (payload != 1.0)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise ValueError(
                    f"binary dataset has entry {payload[i, j]!r} at row {i + 1}, "
                    f"column {j + 1}; only 0/1 allowed"
                )
        if self.kind == "network":
            n0, n1 = payload.shape
            if n0 != n1:
                raise ValueError(f"network payload must be square, got {payload.shape}")
            bad = (payload != 0.0) & (payload != 1.0)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise ValueError(f"adjacency entry at ({i + 1}, {j + 1}) is not 0/1")
            if np.diag(payload).any():
                i = int(np.flatnonzero(np.diag(payload))[0])
                raise ValueError(f"self-loop on node {i + 1}; diagonal must be zero")
            asym = payload != payload.T
            if asym.any():
                i, j = np.argwhere(asym)[0]
                raise ValueError(f"adjacency is asymmetric at ({i + 1}, {j + 1})")
        if self.row_ids is not None and len(self.row_ids) != payload.shape[0]:
            raise ValueError(
                f"{len(self.row_ids)} row_ids for {payload.shape[0]} rows"
            )
        if self.column_ids is not None and len(self.column_ids) != payload.shape[1]:
            raise ValueError(
                f"{len(self.column_ids)} column_ids for {payload.shape[1]} columns"
            )
        object.__setattr__(self, "payload", _readonly(payload))
        if self.row_ids is not None:
            object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        if self.column_ids is not None:
            object.__setattr__(self, "column_ids", tuple(str(c) for c in self.column_ids))

    @property
    def n(self) -> int:
        return self.payload.shape[0]

    @property
    def m(self) -> int:
        return self.payload.shape[1]

    @classmethod
    def continuous(cls, payload, row_ids=None, column_ids=None) -> "Dataset":
        return cls("continuous", payload, row_ids, column_ids)

    @classmethod
    def binary(cls, payload, row_ids=None, column_ids=None) -> "Dataset":
        return cls("binary", payload, row_ids, column_ids)

    @classmethod
    def network(cls, payload, row_ids=None) -> "Dataset":
        return cls("network", payload, row_ids)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "payload": self.payload.tolist(),
                "row_ids": list(self.row_ids) if self.row_ids else None,
                "column_ids": list(self.column_ids) if self.column_ids else None,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        d = json.loads(text)
        return cls(
            d["kind"],
            np.asarray(d["payload"], dtype=float),
            tuple(d["row_ids"]) if d.get("row_ids") else None,
            tuple(d["column_ids"]) if d.get("column_ids") else None,
        )


def _detect_delimiter(line: str) -> str | None:
    counts = {d: line.count(d) for d in (",", "\t", ";")}
    best = max(counts, key=counts.get)
    return best if counts[best] > 0 else None  # None -> whitespace split


def _split(line: str, delimiter: str | None) -> list[str]:
    cells = line.split(delimiter) if delimiter else line.split()
    return [c.strip() for c in cells]


def load_matrix(path, kind: str, delimiter: str | None = None) -> Dataset:
    """Read a delimited text matrix into a Dataset of the given kind.

    The delimiter is auto-detected (comma, tab, semicolon, else whitespace)
    unless given.  A header row is assumed when any cell of the first line
    fails to parse as a number; it becomes ``column_ids``.  Malformed input
    raises ValueError naming the offending row and column.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: no data rows")
    if delimiter is None:
        delimiter = _detect_delimiter(lines[0])

    column_ids = None
    first = _split(lines[0], delimiter)
    try:
        [float(c) for c in first]
    except ValueError:
        column_ids = tuple(first)
        lines = lines[1:]
        if not lines:
            raise ValueError(f"{path}: header but no data rows")

    width = len(_split(lines[0], delimiter))
    rows = []
    for r, ln in enumerate(lines, start=1):
        cells = _split(ln, delimiter)
        if len(cells) != width:
            raise ValueError(f"{path}: row {r} has {len(cells)} cells, expected {width}")
        row = []
        for c, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ValueError(f"{path}: row {r}, column {c}: {cell!r} is not a number")
        rows.append(row)
    return Dataset(kind, np.asarray(rows), column_ids=column_ids)


def load_edgelist(path, n: int | None = None) -> Dataset:
    """Read a 1-based undirected edge list into a network Dataset.

    One ``i j`` pair per line; duplicate edges are idempotent; self-loops
    are an error (with line number).  ``n`` defaults to the largest index
    seen.
    """
    path = os.fspath(path)
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, ln in enumerate(fh, start=1):
            if not ln.strip():
                continue
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected two indices, got {ln!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-integer index in {ln!r}")
            if i == j:
                raise ValueError(f"{path}: line {lineno}: self-loop on node {i}")
            if i < 1 or j < 1:
                raise ValueError(f"{path}: line {lineno}: indices are 1-based, got ({i}, {j})")
            pairs.append((i, j))
    if not pairs and n is None:
        raise ValueError(f"{path}: no edges and no node count; cannot size the network")
    top = max(max(p) for p in pairs) if pairs else 0
    if n is None:
        n = top
    elif top > n:
        i, j = next(p for p in pairs if max(p) > n)
        raise ValueError(f"{path}: edge ({i}, {j}) exceeds declared n={n}")
    adj = np.zeros((n, n))
    for i, j in pairs:
        adj[i - 1, j - 1] = 1.0
        adj[j - 1, i - 1] = 1.0
    return Dataset.network(adj)


# Zachary's karate club: 34 members, 78 friendship ties (1-based pairs).
KARATE_EDGES: tuple[tuple[int, int], ...] = (
    (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9),
    (1, 11), (1, 12), (1, 13), (1, 14), (1, 18), (1, 20), (1, 22), (1, 32),
    (2, 3), (2, 4), (2, 8), (2, 14), (2, 18), (2, 20), (2, 22), (2, 31),
    (3, 4), (3, 8), (3, 9), (3, 10), (3, 14), (3, 28), (3, 29), (3, 33),
    (4, 8), (4, 13), (4, 14),
    (5, 7), (5, 11),
    (6, 7), (6, 11), (6, 17),
    (7, 17),
    (9, 31), (9, 33), (9, 34),
    (10, 34),
    (14, 34),
    (15, 33), (15, 34),
    (16, 33), (16, 34),
    (19, 33), (19, 34),
    (20, 34),
    (21, 33), (21, 34),
    (23, 33), (23, 34),
    (24, 26), (24, 28), (24, 30), (24, 33), (24, 34),
    (25, 26), (25, 28), (25, 32),
    (26, 32),
    (27, 30), (27, 34),
    (28, 34),
    (29, 32), (29, 34),
    (30, 33), (30, 34),
    (31, 33), (31, 34),
    (32, 33), (32, 34),
    (33, 34),
)


def builtin_karate() -> Dataset:
    """The Zachary karate-club network (34 nodes, 78 edges), embedded."""
    adj = np.zeros((34, 34))
    for i, j in KARATE_EDGES:
        adj[i - 1, j - 1] = 1.0
        adj[j - 1, i - 1] = 1.0
    return Dataset.network(adj, row_ids=tuple(str(i) for i in range(1, 35)))


def summarize(dataset: Dataset) -> dict:
    """Quick per-dataset statistics keyed by kind."""
    out: dict = {"kind": dataset.kind, "n": dataset.n}
    if dataset.kind in ("continuous", "binary"):
        out["m"] = dataset.m
        means = dataset.payload.mean(axis=0)
        out["column_means"] = [float(v) for v in means]
        if dataset.column_ids:
            out["columns"] = list(dataset.column_ids)
    else:
        edges = int(dataset.payload.sum()) // 2
        n = dataset.n
        out["edges"] = edges
        out["density"] = float(2.0 * edges / (n * (n - 1))) if n > 1 else 0.0
        out["degree_min"] = int(dataset.payload.sum(axis=0).min())
        out["degree_max"] = int(dataset.payload.sum(axis=0).max())
    return out


FIXTURE_KINDS = {"ais": "continuous", "carcinoma": "binary", "alzheimer": "binary"}


def resolve_fixture(name: str, explicit: str | None = None) -> str | None:
    """Locate a named fixture CSV: explicit path, then $EMBIA_DATA_DIR, then ./data.

    Returns the path, or None when the fixture is not present.
    """
    if explicit:
        return explicit if os.path.exists(explicit) else None
    candidates = []
    env = os.environ.get("EMBIA_DATA_DIR")
    if env:
        candidates.append(os.path.join(env, f"{name}.csv"))
    candidates.append(os.path.join("data", f"{name}.csv"))
    here = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    candidates.append(os.path.join(here, "data", f"{name}.csv"))
    for c in candidates:
        if os.path.exists(c):
            return c
    return None
