# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import hashlib
from dataclasses import dataclass
from typing import List, Tuple

import torch

from .errors import ParameterError

_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class RandomStream:
    """
    A reproducible source of randomness identified by a master seed and a
    lineage of ``(tag, index)`` pairs.

    Streams never share state: every call to :meth:`generator` returns a fresh
    ``torch.Generator`` seeded from a hash of ``(master_seed, lineage)``, so the
    same stream always produces the same numbers and streams with different
    lineages are independent for all practical purposes. Use :meth:`child`
    to hand sub-streams to independent pieces of work (replicates, copies,
    scenery blocks).

        >>> root = RandomStream(1234)
        >>> walk_stream = root.child('walk', 0)
        >>> torch.randn(3, generator=walk_stream.generator(), dtype=torch.float64)
    """
    master_seed: int
    lineage: Tuple[Tuple[str, int], ...] = ()

    def __post_init__(self):
        if not isinstance(self.master_seed, int) or not (0 <= self.master_seed < (1 << 64)):
            raise ParameterError(
                f'RandomStream(master_seed={self.master_seed!r}): expected a 64-bit unsigned integer')

    def child(self, tag: str, index: int = 0) -> 'RandomStream':
        return RandomStream(self.master_seed, self.lineage + ((str(tag), int(index)),))

    def children(self, tag: str, count: int) -> List['RandomStream']:
        return [self.child(tag, i) for i in range(count)]

    @property
    def seed(self) -> int:
        h = hashlib.blake2b(digest_size=8)
        h.update(str(self.master_seed).encode('ascii'))
        for tag, index in self.lineage:
            h.update(b'\x00')
            h.update(tag.encode('utf-8'))
            h.update(b'\x01')
            h.update(str(index).encode('ascii'))
        return int.from_bytes(h.digest(), 'little') & _SEED_MASK

    def generator(self) -> torch.Generator:
        g = torch.Generator()
        g.manual_seed(self.seed)
        return g

    def describe(self) -> str:
        path = '/'.join(f'{tag}:{index}' for tag, index in self.lineage)
        return f'{self.master_seed}/{path}' if path else str(self.master_seed)
