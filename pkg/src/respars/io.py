"""Text file formats: dense matrices, labels, masks, JSON reports."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError

MASK_TOKENS = ("train", "val", "test", "none")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError("matrix file needs a 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise ParseError(f"bad matrix entry: {exc}") from None
    if vals.size != rows * cols:
        raise ParseError(f"expected {rows * cols} entries, found {vals.size}")
    return vals.reshape(rows, cols)


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, m) -> None:
    atomic_write_text(path, format_matrix(m))


def read_labels(path) -> np.ndarray:
    try:
        return np.array([int(x) for x in Path(path).read_text().split()], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"bad label: {exc}") from None


def write_labels(path, labels) -> None:
    atomic_write_text(path, "".join(f"{int(x)}\n" for x in labels))


def read_masks(path) -> dict[str, np.ndarray]:
    tokens = Path(path).read_text().split()
    bad = set(tokens) - set(MASK_TOKENS)
    if bad:
        raise ParseError(f"unknown mask tokens {sorted(bad)}")
    arr = np.array(tokens)
    return {name: arr == name for name in ("train", "val", "test")}


def write_masks(path, masks: dict) -> None:
    n = len(next(iter(masks.values())))
    out = np.full(n, "none", dtype=object)
    for name in ("train", "val", "test"):
        out[np.asarray(masks[name], dtype=bool)] = name
    atomic_write_text(path, "".join(f"{t}\n" for t in out))


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(path, report: dict) -> None:
    atomic_write_text(path, dumps_report(report))
