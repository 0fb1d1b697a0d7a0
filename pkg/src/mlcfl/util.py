"""Small shared helpers."""

from __future__ import annotations

import hashlib


def stable_seed(*parts) -> int:
    """Derive a deterministic 63-bit child seed from hashable parts.

    Uses SHA-256 over the repr of the parts, so results are stable across
    processes and platforms (unlike ``hash``).
    """
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
