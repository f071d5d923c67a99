"""Named, reproducible RNG substreams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, *tags: str | int) -> np.random.Generator:
    """Independent generator for (root_seed, tags), stable across runs.

    String tags are hashed with CRC32 so stream identity depends only on
    the tag text, never on interpreter hash randomization.
    """
    words = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            words.append(zlib.crc32(tag.encode("utf-8")))
        else:
            words.append(int(tag) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
