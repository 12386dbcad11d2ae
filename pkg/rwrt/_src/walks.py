# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import torch

from .errors import ParameterError, PathRangeError, check_hurst
from .paths import LatticePath, RealPath, RewardPath, interpolate, path_values
from .stable import Size, StableParams, gen_fgn, sample_sas
from .streams import RandomStream

# Rounded stable steps are clipped here so they stay exact in float64 and int64.
_MAX_STEP = float(2 ** 52)


class WalkKind(Enum):
    SIMPLE = 'simple'
    BETA_STABLE = 'beta-stable'
    GAUSSIAN_DEPENDENT = 'gaussian-dependent'


@dataclass(frozen=True)
class CollectingSpec:
    """
    Law of the collecting process ``W(n)``.

    ``simple`` walks have H' = 1/2, ``beta-stable`` walks H' = 1/beta and the
    ``gaussian-dependent`` walk ``ceil(G(k))`` uses the given H'.
    """
    kind: WalkKind
    beta: Optional[float] = None
    hurst: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', WalkKind(self.kind))
        if self.kind is WalkKind.BETA_STABLE:
            if self.beta is None or not (1.0 < self.beta <= 2.0):
                raise ParameterError(
                    f'CollectingSpec(kind=beta-stable): expected beta in (1, 2], got {self.beta}')
        elif self.beta is not None:
            raise ParameterError(f'CollectingSpec(kind={self.kind.value}): beta is only used by beta-stable walks')
        if self.kind is WalkKind.GAUSSIAN_DEPENDENT:
            if self.hurst is None:
                raise ParameterError('CollectingSpec(kind=gaussian-dependent): a Hurst index is required')
            check_hurst('CollectingSpec', self.hurst)
        elif self.hurst is not None:
            raise ParameterError(
                f'CollectingSpec(kind={self.kind.value}): the Hurst index is implied by the walk kind')

    @classmethod
    def simple(cls) -> 'CollectingSpec':
        return cls(WalkKind.SIMPLE)

    @classmethod
    def beta_stable(cls, beta: float) -> 'CollectingSpec':
        return cls(WalkKind.BETA_STABLE, beta=beta)

    @classmethod
    def gaussian_dependent(cls, hurst: float) -> 'CollectingSpec':
        return cls(WalkKind.GAUSSIAN_DEPENDENT, hurst=hurst)

    @property
    def hurst_prime(self) -> float:
        if self.kind is WalkKind.SIMPLE:
            return 0.5
        if self.kind is WalkKind.BETA_STABLE:
            return 1.0 / self.beta
        return self.hurst


def _prepend_zero(steps_cumsum: torch.Tensor) -> torch.Tensor:
    zero = torch.zeros(steps_cumsum.shape[:-1] + (1,), dtype=steps_cumsum.dtype)
    return torch.cat([zero, steps_cumsum], dim=-1)


def gen_walk(spec: CollectingSpec, n: int, stream: RandomStream, batch_shape: Size = ()) -> LatticePath:
    """
    Simulates ``n`` steps of the collecting process.

    ``simple``: i.i.d. +-1 steps. ``beta-stable``: SbS(1) draws rounded to the
    nearest integer. ``gaussian-dependent``: ``positions[k] = ceil(G(k))`` where
    ``G`` is the partial sum of fractional Gaussian noise; ``G`` is kept in
    ``LatticePath.raw``.
    """
    if n < 1:
        raise ParameterError(f'gen_walk: expected n >= 1, got {n}')
    size = (batch_shape,) if isinstance(batch_shape, int) else tuple(batch_shape)
    if spec.kind is WalkKind.SIMPLE:
        steps = torch.randint(0, 2, size + (n,), generator=stream.generator()) * 2 - 1
        return LatticePath(_prepend_zero(steps.cumsum(dim=-1)))
    if spec.kind is WalkKind.BETA_STABLE:
        draws = sample_sas(StableParams(spec.beta), size + (n,), stream)
        steps = draws.clamp(-_MAX_STEP, _MAX_STEP).round().to(torch.int64)
        return LatticePath(_prepend_zero(steps.cumsum(dim=-1)))
    g = _prepend_zero(gen_fgn(spec.hurst, n, stream, size).cumsum(dim=-1))
    return LatticePath(torch.ceil(g).to(torch.int64), raw=g)


def rescale(path: Union[LatticePath, RewardPath], n: int, hurst: float, steps: Optional[int] = None) -> RealPath:
    """
    ``X_n(t) = n**(-hurst) * path(n t)`` on the uniform grid of ``[0, 1]`` with
    ``steps`` intervals (default ``n``, i.e. the path nodes themselves).
    """
    if path_values(path).shape[-1] - 1 < n:
        raise PathRangeError(
            f'rescale(path, n={n}): path has only {path_values(path).shape[-1] - 1} steps')
    if n < 1:
        raise ParameterError(f'rescale: expected n >= 1, got {n}')
    steps = n if steps is None else steps
    if steps == n:
        values = path_values(path)[..., :n + 1]
    else:
        t = torch.arange(steps + 1, dtype=torch.float64) / steps
        values = interpolate(path, t * n)
    return RealPath(1.0 / steps, values * float(n) ** (-hurst))
