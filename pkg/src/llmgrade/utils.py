from __future__ import annotations

import hashlib
import json
import os
import tempfile
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Union

Number = Union[int, float, Decimal, Fraction]


def round_half_away(x: Number) -> int:
    """Round to the nearest integer, halves away from zero.

    Floats go through their shortest repr so 84.5 rounds to 85 and 2.675
    is treated as written, not as its binary neighbour.
    """
    if isinstance(x, bool):
        raise TypeError("bool is not a score")
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        n, d = abs(x.numerator), x.denominator
        q = (2 * n + d) // (2 * d)
        return q if x >= 0 else -q
    if isinstance(x, float):
        x = Decimal(repr(x))
    return int(x.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
