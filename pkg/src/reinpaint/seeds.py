"""Stable 64-bit seed derivation.

Every random draw in the toolkit is keyed by a seed derived from the run
seed plus the identifiers of the work unit (image id, method name, pass
index, ...). Hashing is content-based, so results do not depend on
scheduling order, worker count, or PYTHONHASHSEED.
"""

import hashlib


def derive_seed(*parts: int | str) -> int:
    """Hash a tuple of ints/strings into a uint64 seed.

    The encoding tags each part with its type, so derive_seed(1, "2")
    and derive_seed("1", 2) differ.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
        tag = "i" if isinstance(part, int) else "s"
        h.update(f"{tag}:{part}\x1f".encode("utf-8"))
    return int.from_bytes(h.digest(), "little")
