"""Addressable random streams.

A stream is identified by the master seed plus a key path such as
("pf", level, "propagate", unit_time). Streams are Philox generators seeded
through `SeedSequence(spawn_key=...)`, so any stream can be rebuilt on its own
and results do not depend on execution order.
"""

import zlib
from typing import Tuple, Union

import numpy as np

KeyPart = Union[int, str]


def _encode(part: KeyPart) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"Stream keys must be nonnegative, got {part}.")
    return int(part)


class StreamFactory:
    def __init__(self, seed: int, *key: KeyPart) -> None:
        self.seed = int(seed)
        self.key: Tuple[int, ...] = tuple(_encode(k) for k in key)

    def child(self, *key: KeyPart) -> "StreamFactory":
        factory = StreamFactory(self.seed)
        factory.key = self.key + tuple(_encode(k) for k in key)
        return factory

    def generator(self, *key: KeyPart) -> np.random.Generator:
        spawn_key = self.key + tuple(_encode(k) for k in key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(seq))

    def __repr__(self) -> str:
        return f"StreamFactory(seed={self.seed}, key={self.key})"


Seed = Union[int, StreamFactory]


def as_factory(seed: Seed) -> StreamFactory:
    if isinstance(seed, StreamFactory):
        return seed
    return StreamFactory(int(seed))
