"""Child-seed derivation from a single master seed.

Every random stream in a run is keyed by a path of names, e.g.
``derive(master, "session", 3, 2)``. Each key is mapped to a 32-bit word with
CRC32 of its ``str`` form and passed as the ``spawn_key`` of a
``numpy.random.SeedSequence`` rooted at the master seed; the first 64 bits of
the generated state are the child seed. The mapping is stable across
platforms and Python versions.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_word(key: object) -> int:
    return zlib.crc32(str(key).encode("utf-8")) & 0xFFFFFFFF


def derive(master: int, *keys: object) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key_word(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def rng_for(master: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive(master, *keys))
