"""Deterministic splittable random streams.

Every stochastic routine derives its generator from a 64-bit master seed plus
a path of purpose tags, via a counter-based bit generator (Philox).  Trials
keyed by (seed, tag, index) are independent of evaluation order, so parallel
and serial runs produce identical results.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_to_int(tag):
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("rng path integers must be nonnegative")
        return int(tag) & _MASK64
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def spawn_rng(seed, *path):
    """Return a numpy Generator keyed by (seed, *path).

    Same key, same stream; distinct keys give statistically independent
    streams.  Tags may be ints or strings (strings are hashed stably).
    """
    key = tuple(_tag_to_int(t) for t in path)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def haar_orthogonal(rng, n):
    """Haar-distributed orthogonal n x n matrix (QR of a Gaussian, sign-fixed)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
