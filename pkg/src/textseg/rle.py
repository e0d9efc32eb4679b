"""Run-length encoding of binary masks (COCO-compatible counts strings).

Wire format, bit-exactly:

1. Flatten the mask in column-major (Fortran) order.
2. Record run lengths of alternating values starting with zeros — if the
   mask begins with a foreground pixel the first count is 0.
3. Delta-code: for index i >= 3 (0-based), store ``counts[i] - counts[i-2]``
   instead of the raw count (runs of the same value tend to repeat).
4. Write each (possibly negative) value low-bits-first in 5-bit chunks as
   printable characters: chunk c in [0, 31] maps to ``chr(48 + c)`` with the
   0x20 bit set on every chunk except the last. On the final chunk, bit 0x10
   carries the sign: when set, the remaining high bits are all ones.

The resulting strings decode with the standard COCO mask tooling and with
the TypeScript client in this repository.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .validation import check_binary_mask


def _counts(mask: np.ndarray) -> list[int]:
    flat = mask.flatten(order="F").astype(np.int8)
    n = flat.size
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [n]])
    counts = np.diff(bounds).astype(int).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return counts


def _counts_to_string(counts: list[int]) -> str:
    chars = []
    for i, count in enumerate(counts):
        x = count - (counts[i - 2] if i > 2 else 0)
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(48 + c))
    return "".join(chars)


def _string_to_counts(s: str) -> list[int]:
    counts: list[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            code = ord(s[p]) - 48
            if code < 0 or code > 63:
                raise InvalidInputError(f"invalid RLE character {s[p]!r} at position {p}")
            x |= (code & 0x1F) << (5 * k)
            more = bool(code & 0x20)
            p += 1
            k += 1
            if more and p >= len(s):
                raise InvalidInputError("truncated RLE counts string")
            if not more and (code & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def encode_mask(mask) -> dict:
    """Encode a boolean HxW mask as {"size": [H, W], "counts": str}."""
    m = check_binary_mask(mask)
    return {"size": [int(m.shape[0]), int(m.shape[1])], "counts": _counts_to_string(_counts(m))}


def decode_mask(rle: dict) -> np.ndarray:
    """Decode {"size": [H, W], "counts": str} back to a boolean mask."""
    try:
        height, width = (int(v) for v in rle["size"])
        counts_str = rle["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed RLE container: {exc}") from exc
    if height < 1 or width < 1:
        raise InvalidInputError(f"RLE size must be positive, got {height}x{width}")
    counts = _string_to_counts(counts_str)
    if any(c < 0 for c in counts):
        raise InvalidInputError("RLE counts decode to a negative run length")
    total = sum(counts)
    if total != height * width:
        raise InvalidInputError(
            f"RLE counts sum to {total}, expected {height * width} for a {height}x{width} mask"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape((height, width), order="F")
