"""Canonical serialization and digest helpers.

Every digest in the ledger and every exported artifact goes through
``canonical_json``: sorted keys, compact separators, ASCII-only. Two
states that serialize to the same bytes are considered identical, so
determinism of the whole system reduces to determinism of these bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_DIGEST = "0" * 64


def canonical_json(obj: Any) -> str:
    """Render ``obj`` as canonical JSON (sorted keys, no insignificant whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def digest_of(obj: Any) -> str:
    """SHA-256 over the canonical JSON encoding of ``obj``."""
    return sha256_hex(canonical_json(obj))
