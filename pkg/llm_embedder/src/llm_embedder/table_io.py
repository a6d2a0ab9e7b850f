"""Writer for the embedding-table interchange format.

Line 1 is ``#dim <N>``, then ``#provenance external``, then one
``<string> TAB <floats>`` row per entry with floats in shortest
round-trip decimal. Tab, newline and backslash in strings are escaped
as ``\\t``, ``\\n``, ``\\\\``. This mirrors the format the evaluation
toolkit reads; no other serialization crosses the boundary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _format_float(v: float) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="0")


def write_table(entries: dict[str, np.ndarray], dim: int, path: str | Path) -> None:
    for key, vec in entries.items():
        if vec.shape != (dim,):
            raise ValueError(f"entry {key!r} has shape {vec.shape}, expected ({dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"entry {key!r} contains non-finite components")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim {dim}\n")
        fh.write("#provenance external\n")
        for key in sorted(entries):
            values = " ".join(_format_float(v) for v in entries[key])
            fh.write(f"{_escape(key)}\t{values}\n")
