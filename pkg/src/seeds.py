"""Named random substreams derived from the single run seed."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of randomness.

    The same (seed, name) always yields the same stream, and distinct names
    yield statistically independent streams.
    """
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])
