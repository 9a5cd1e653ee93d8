"""Counter-based random streams keyed by (seed, stream, index)."""

from dataclasses import dataclass
import zlib

import numpy as np

__all__ = ["RngKey", "stream_id", "generator"]


@dataclass(frozen=True)
class RngKey:
    """Address of one independent random stream.

    `stream` separates purposes and replicas, `index` separates draws within a
    stream (the renewal period for potentials). The generator is a pure
    function of the key, so scheduling never changes sampled values.
    """

    seed: int
    stream: int = 0
    index: int = 0

    def at(self, index: int) -> "RngKey":
        return RngKey(self.seed, self.stream, index)

    def child(self, stream: int) -> "RngKey":
        return RngKey(self.seed, stream, self.index)


def stream_id(purpose: str, replica: int = 0) -> int:
    """Stable stream number for a named purpose and a replica number."""
    return (zlib.crc32(purpose.encode("utf-8")) << 24) + int(replica)


def generator(key: RngKey) -> np.random.Generator:
    """Philox generator seeded from the full key."""
    seq = np.random.SeedSequence([int(key.seed) & 0xFFFFFFFFFFFFFFFF, int(key.stream), int(key.index)])
    return np.random.Generator(np.random.Philox(seq))
