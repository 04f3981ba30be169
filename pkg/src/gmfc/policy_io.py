"""Plain-text policy files: one ``m s a probability`` row per entry.

Indices are 0-based; block ``m`` has anchor ``(m + 1) / M``.  Probabilities
are written with 17 significant digits so files round-trip exactly.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from .mfc import check_policy_ensemble


def write_policy(pi, header_lines: Iterable[str] = ()) -> str:
    pi = check_policy_ensemble(pi)
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"# shape {pi.shape[0]} {pi.shape[1]} {pi.shape[2]}")
    for (m, s, a), p in np.ndenumerate(pi):
        lines.append(f"{m} {s} {a} {format(p, '.17g')}")
    return "\n".join(lines) + "\n"


def parse_policy(text: str) -> np.ndarray:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 'm s a probability'")
        entries[tuple(int(x) for x in parts[:3])] = float(parts[3])
    if not entries:
        raise ValueError("policy file has no entries")
    shape = tuple(max(k[i] for k in entries) + 1 for i in range(3))
    pi = np.full(shape, np.nan)
    for k, p in entries.items():
        pi[k] = p
    if np.isnan(pi).any():
        raise ValueError("policy file is missing entries")
    return check_policy_ensemble(pi)


def read_policy(path) -> np.ndarray:
    return parse_policy(Path(path).read_text(encoding="utf-8"))
