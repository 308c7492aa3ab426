"""Counter-based random streams.

Every random draw in the library comes from a Philox generator whose key
and counter are derived from a stream identifier, never from shared global
state.  Two calls with the same identifiers see the same numbers no matter
how many other streams were consumed in between, so serial and parallel
execution agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags keep streams for different jobs disjoint.
TAG_SRP = 1
TAG_INIT = 2
TAG_SHUFFLE = 3
TAG_AUGMENT = 4
TAG_MIXUP = 5
TAG_ANALYSIS = 6


def stream(seed: int, tag: int, *ids: int) -> np.random.Generator:
    """Generator for the stream ``(seed, tag, ids...)``.

    Up to three ids fit in the high counter words; draws advance the low word.
    """
    if len(ids) > 3:
        raise ValueError("at most three stream ids")
    words = [0] + [int(i) & _MASK64 for i in ids] + [0] * (3 - len(ids))
    key = ((seed & _MASK64) << 64) | (tag & _MASK64)
    return np.random.Generator(np.random.Philox(key=key, counter=words))


@dataclass(frozen=True)
class SrpRng:
    """Randomness source for region pooling during one forward pass.

    ``step`` is the optimizer step (or any call counter); it makes each
    training iteration draw fresh regions.  Streams are keyed by
    (block index, branch id, sample index within the batch).
    """

    seed: int = 0
    step: int = 0

    def generator(self, block: int, branch: int, sample: int) -> np.random.Generator:
        return stream(self.seed, TAG_SRP, (block << 8) | branch, sample, self.step)

    def advance(self, step: int) -> "SrpRng":
        return SrpRng(self.seed, step)
