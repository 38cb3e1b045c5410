"""Canonical JSON reports.

Keys are sorted, floats are written with 17 significant digits, rationals
as strings and complex numbers as ``[re, im]``.  Writes go to a temporary
file in the target directory which is then renamed into place.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import is_dataclass
from fractions import Fraction
from typing import IO, Iterator

import numpy as np

SCHEMA_VERSION = "1"
VERDICTS = ("ok", "violation", "inconclusive")


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _chunks(obj) -> Iterator[str]:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        yield json.dumps(None if obj is None else bool(obj))
    elif isinstance(obj, (int, np.integer)):
        yield str(int(obj))
    elif isinstance(obj, (float, np.floating)):
        yield _float(float(obj))
    elif isinstance(obj, (complex, np.complexfloating)):
        yield f"[{_float(obj.real)},{_float(obj.imag)}]"
    elif isinstance(obj, Fraction):
        yield json.dumps(str(obj))
    elif isinstance(obj, str):
        yield json.dumps(obj)
    elif isinstance(obj, dict):
        yield "{"
        items = sorted(((str(k), v) for k, v in obj.items()), key=lambda kv: kv[0])
        for n, (k, v) in enumerate(items):
            if n:
                yield ","
            yield json.dumps(k) + ":"
            yield from _chunks(v)
        yield "}"
    elif isinstance(obj, (list, tuple, np.ndarray)):
        yield "["
        for n, v in enumerate(obj.tolist() if isinstance(obj, np.ndarray) else obj):
            if n:
                yield ","
            yield from _chunks(v)
        yield "]"
    elif hasattr(obj, "to_json"):
        yield from _chunks(obj.to_json())
    elif is_dataclass(obj):
        yield from _chunks(obj.__dict__)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Canonical serialization (no whitespace, trailing newline excluded)."""
    return "".join(_chunks(obj))


def dump(obj, fh: IO[str]) -> None:
    for c in _chunks(obj):
        fh.write(c)
    fh.write("\n")


def write_atomic(obj, path: str | os.PathLike) -> None:
    """Stream ``obj`` to a temporary sibling of ``path`` and rename it."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            dump(obj, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def make_report(command: str, inputs: dict, verdict: str, result=None,
                witnesses: dict | None = None) -> dict:
    """Report envelope.  Non-ok verdicts must carry witnesses."""
    if verdict not in VERDICTS:
        raise ValueError(f"verdict must be one of {VERDICTS}")
    if verdict != "ok" and not witnesses:
        raise ValueError("non-ok reports need witnesses")
    out = {"schema_version": SCHEMA_VERSION, "command": command, "inputs": inputs,
           "verdict": verdict, "witnesses": witnesses or {}}
    if result is not None:
        out["result"] = result
    return out
