"""Derivation of independent, platform-stable sub-seeds from a master seed."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts: object) -> int:
    """Hash ``master`` and a path of labels into a 63-bit seed.

    Any worker can derive its own stream from the run coordinates, so the
    order in which runs execute never changes their results.
    """
    text = "/".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
