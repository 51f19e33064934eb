"""Shared output helpers: fixed-precision number formatting and stable file writing.

Every numeric value leaving the package is serialized with 12 significant
digits so that repeated runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def fmt_num(x: float | int) -> str:
    """Serialize a number with 12 significant digits (ints verbatim)."""
    if isinstance(x, bool):  # bool is an int subclass; keep it out of numerics
        raise TypeError("bool is not a serializable number")
    if isinstance(x, int):
        return str(x)
    if x == 0.0:
        return "0"  # avoid "-0"
    return format(x, ".12g")


def dumps_stable(obj) -> str:
    """JSON-encode with sorted keys and 12-significant-digit floats.

    json.dumps cannot emit custom float tokens, so this walks the structure
    itself.  Supports dict/list/tuple/str/int/float/bool/None.
    """
    return _encode(obj, indent=0) + "\n"


def _encode(obj, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, float)):
        return fmt_num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key).__name__}")
            items.append(f"{inner}{json.dumps(key, ensure_ascii=False)}: {_encode(obj[key], indent + 1)}")
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{_encode(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_text(path: str | Path, text: str) -> None:
    """Write UTF-8 text with fixed '\\n' line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
