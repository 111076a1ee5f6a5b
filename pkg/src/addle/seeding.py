"""Per-stage seeds from one master seed.

``derive_seed(master, "train", 3)`` folds each label into the state with one
splitmix64 step: strings via CRC-32, integers as-is. Stages therefore get
independent, reproducible seeds no matter which other stages run.
"""
from __future__ import annotations

import zlib

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *labels: str | int) -> int:
    state = splitmix64(int(master) & _MASK)
    for label in labels:
        v = zlib.crc32(label.encode()) if isinstance(label, str) else int(label)
        state = splitmix64(state ^ (v & _MASK))
    # numpy accepts any non-negative int; keep it in 63 bits for portability
    return state >> 1
