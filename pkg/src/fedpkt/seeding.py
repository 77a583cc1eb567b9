"""Hash-derived seeds so that independent streams never perturb each other."""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Map an arbitrary tuple of ints/strings to a stable 64-bit seed.

    ``derive_seed(seed, run)`` and ``derive_seed(seed, round, client)`` give
    the per-run and per-(round, client) streams used throughout the package.
    """
    text = "/".join(str(int(p)) if isinstance(p, (bool, int, np.integer)) else str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & _MASK64


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
