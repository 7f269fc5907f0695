"""Small shared helpers: worker pools and deterministic JSON output."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "H2H_THREADS"


def worker_count() -> int:
    """Worker cap from the environment (0 or unset means auto)."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    if n == 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Map ``fn`` over ``items`` preserving order.

    Items are independent units of work; results are collected in input
    order regardless of completion order, so output is identical for any
    worker count.
    """
    items = list(items)
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _format_json(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [
            f"{pad}{json.dumps(str(k))}: {_format_json(v, indent, level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(parts) + "\n" + end_pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        parts = [f"{pad}{_format_json(v, indent, level + 1)}" for v in seq]
        return "[\n" + ",\n".join(parts) + "\n" + end_pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            raise ValueError(f"non-finite value {v} cannot be serialized")
        return f"{v:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Serialize to JSON with 17-significant-digit floats.

    Floats round-trip exactly and the output is byte-stable across runs,
    which the end-to-end determinism contract relies on.
    """
    return _format_json(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
