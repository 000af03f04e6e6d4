"""CSV ledgers written through a single serialized sink."""

from __future__ import annotations

import csv
import threading
from pathlib import Path
from typing import Iterable, Mapping


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


class LedgerSink:
    """Owns an output directory; every CSV goes through :meth:`write`.

    Floats are written with ``repr`` so identical numbers give identical
    bytes. A lock serializes writers.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.files: list[str] = []

    def write(self, name: str, rows: Iterable[Mapping], columns: list[str] | None = None) -> Path:
        rows = list(rows)
        if columns is None:
            columns = []
            for r in rows:
                columns += [k for k in r if k not in columns]
        path = self.root / name
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for r in rows:
                    w.writerow([_cell(r.get(c, "")) for c in columns])
            if name not in self.files:
                self.files.append(name)
        return path

    def plot(self, name: str, x, y, xlabel: str = "x", ylabel: str = "y") -> Path:
        """Two-column plot-data file under ``plots/``."""
        return self.write(f"plots/{name}.csv", [{xlabel: float(a), ylabel: float(b)} for a, b in zip(x, y)])


def read_ledger(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
