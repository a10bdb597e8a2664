"""Deterministic result files: atomic writes and fixed float formatting.

JSON floats carry 17 significant digits (round-trip exact); CSV floats 10.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["atomic_write", "to_jsonable", "dumps_json", "write_json", "write_csv", "format_csv_value"]


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt_float(x: float, digits: int) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0:
        return "0.0"
    text = f"{x:.{digits}g}"
    # keep floats recognisable as floats when read back
    return text if any(ch in text for ch in ".en") else text + ".0"


def to_jsonable(obj):
    """Recursively convert numpy/complex values; complex becomes ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return [to_jsonable(z.real), to_jsonable(z.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, float):
        return _fmt_float(obj, 17)
    return json.dumps(obj)


def dumps_json(obj, indent: int = 2) -> str:
    return _encode(to_jsonable(obj), indent, 0) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


def format_csv_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v), 10)
    if isinstance(v, (complex, np.complexfloating)):
        raise TypeError("split complex values into real and imaginary columns")
    return str(v)


def write_csv(path, columns: list, rows: list) -> Path:
    """Rows are dicts; missing keys become empty cells."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_csv_value(row[c]) if c in row and row[c] is not None else "" for c in columns))
    return atomic_write(path, "\n".join(lines) + "\n")
