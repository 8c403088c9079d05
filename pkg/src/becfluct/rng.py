"""Reproducible, independent random streams.

Each stream is a Philox counter-based generator keyed by (seed, stream_id),
so replicas can be drawn in any order or in parallel and still give the
same numbers.
"""

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self):
        key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))


def as_generator(rng):
    """Accept an RngStream, a numpy Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")
