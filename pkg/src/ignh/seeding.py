"""Named random substreams derived from one user seed."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for component ``name`` (split, init, shuffle, oversample, shap, ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
