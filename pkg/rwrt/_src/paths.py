# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import csv
from dataclasses import dataclass
from typing import IO, Optional, Sequence, Union

import torch
from torch import Tensor

from .errors import ParameterError, PathRangeError

# Paths carry any number of leading batch (replicate) dimensions; the last
# dimension is always the time/step index, starting at 0.


@dataclass(frozen=True, eq=False)
class LatticePath:
    """Integer path ``W(0), ..., W(n)`` of a collecting process, ``W(0) = 0``.

    For the dependent walk, ``raw`` holds the real partial sums ``G(k)`` that
    were rounded up to produce ``positions``.
    """
    positions: Tensor
    raw: Optional[Tensor] = None

    def __post_init__(self):
        if self.positions.dtype != torch.int64:
            raise ParameterError(f'LatticePath: expected int64 positions, got {self.positions.dtype}')
        if self.positions.dim() == 0 or self.positions.shape[-1] < 1:
            raise ParameterError('LatticePath: expected at least one position')
        if bool((self.positions[..., 0] != 0).any()):
            raise ParameterError('LatticePath: positions[0] must be 0')

    @property
    def n(self) -> int:
        return self.positions.shape[-1] - 1

    @property
    def batch_shape(self) -> torch.Size:
        return self.positions.shape[:-1]

    def increments(self) -> Tensor:
        return self.positions.diff(dim=-1)

    def __getitem__(self, idx) -> 'LatticePath':
        raw = None if self.raw is None else self.raw[idx]
        return LatticePath(self.positions[idx], raw)


@dataclass(frozen=True, eq=False)
class RewardPath:
    """Cumulative rewards ``Z_n``, ``A_n`` or ``V_n``, indexed by step, ``values[0] = 0``."""
    values: Tensor

    def __post_init__(self):
        if self.values.dim() == 0 or self.values.shape[-1] < 1:
            raise ParameterError('RewardPath: expected at least one value')

    @property
    def n(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def batch_shape(self) -> torch.Size:
        return self.values.shape[:-1]

    def __getitem__(self, idx) -> 'RewardPath':
        return RewardPath(self.values[idx])


@dataclass(frozen=True, eq=False)
class RealPath:
    """Real path sampled on the uniform grid ``t_k = k * dt``, ``values[..., 0] = 0``."""
    dt: float
    values: Tensor

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f'RealPath: expected dt > 0, got {self.dt}')
        if self.values.dim() == 0 or self.values.shape[-1] < 1:
            raise ParameterError('RealPath: expected at least one value')

    @property
    def n(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def horizon(self) -> float:
        return self.n * self.dt

    @property
    def batch_shape(self) -> torch.Size:
        return self.values.shape[:-1]

    @property
    def times(self) -> Tensor:
        return torch.arange(self.n + 1, dtype=torch.float64) * self.dt

    def at(self, t: Union[float, Tensor]) -> Tensor:
        """Linear interpolation of the path at time(s) ``t``."""
        return interpolate(self, torch.as_tensor(t, dtype=torch.float64) / self.dt)

    def at_times(self, times: Tensor) -> Tensor:
        """Values at grid nodes ``times`` (which must lie on the grid)."""
        return self.values[..., grid_indices(times, self.dt, self.n, 'RealPath.at_times')]

    def __getitem__(self, idx) -> 'RealPath':
        return RealPath(self.dt, self.values[idx])


PathLike = Union[LatticePath, RewardPath, RealPath, Tensor]


def path_values(path: PathLike) -> Tensor:
    if isinstance(path, LatticePath):
        return path.positions.to(torch.float64)
    if isinstance(path, (RewardPath, RealPath)):
        return path.values
    if isinstance(path, Tensor):
        return path.to(torch.float64)
    raise ParameterError(f'expected a path, got {type(path)}')


def interpolate(path: PathLike, t: Union[float, Tensor]) -> Tensor:
    """
    Piecewise-linear interpolation between integer step indices:
    ``v(t) = v[floor(t)] + (t - floor(t)) * (v[ceil(t)] - v[floor(t)])``.

    ``t`` may be a scalar or a tensor of indices; batch dimensions of the path
    come first in the result. Integer ``t`` returns the node value exactly.
    """
    values = path_values(path)
    n = values.shape[-1] - 1
    t = torch.as_tensor(t, dtype=torch.float64)
    if bool((t < 0).any()) or bool((t > n).any()):
        raise PathRangeError(
            f'interpolate(path, t): t must lie in [0, {n}], got range '
            f'[{t.min().item()}, {t.max().item()}]')
    scalar = t.dim() == 0
    flat = t.reshape(-1)
    lo = flat.floor().long()
    hi = flat.ceil().long()
    frac = flat - lo.to(torch.float64)
    v_lo = values[..., lo]
    v_hi = values[..., hi]
    out = v_lo + frac * (v_hi - v_lo)
    if scalar:
        return out[..., 0]
    return out.reshape(values.shape[:-1] + t.shape)


def grid_indices(times: Union[Sequence[float], Tensor], dt: float, n: int, fn_name: str) -> Tensor:
    """Maps times on the grid ``k * dt`` to their indices ``k``."""
    times = torch.as_tensor(times, dtype=torch.float64)
    idx = torch.round(times / dt)
    if bool(((idx * dt - times).abs() > 1e-9 * max(1.0, n * dt)).any()):
        raise ParameterError(f'{fn_name}: times must be multiples of the grid step {dt}')
    idx = idx.long()
    if bool((idx < 0).any()) or bool((idx > n).any()):
        raise PathRangeError(f'{fn_name}: times must lie in [0, {n * dt}]')
    return idx


def uniform_step(times: Union[Sequence[float], Tensor], fn_name: str) -> float:
    """Returns ``dt`` for a grid ``0, dt, 2 dt, ...``; rejects anything else."""
    times = torch.as_tensor(times, dtype=torch.float64)
    if times.dim() != 1 or times.numel() < 2:
        raise ParameterError(f'{fn_name}: expected a 1-d time grid with at least two points')
    if times[0].item() != 0.0:
        raise ParameterError(f'{fn_name}: the time grid must start at 0, got {times[0].item()}')
    steps = times.diff()
    dt = steps.mean().item()
    if not dt > 0 or bool(((steps - dt).abs() > 1e-9 * dt).any()):
        raise ParameterError(f'{fn_name}: expected a uniform increasing time grid')
    return dt


def write_csv(stream: IO[str], index: Tensor, values: Tensor, index_name: str = 't') -> None:
    """
    Writes ``(index, value)`` rows for a single path, or a wide matrix with a
    header row of times and one row per replicate for an ensemble.
    """
    writer = csv.writer(stream, lineterminator='\n')
    index = index.reshape(-1).tolist()
    if values.dim() == 1:
        writer.writerow([index_name, 'value'])
        for i, v in zip(index, values.tolist()):
            writer.writerow([repr(i), repr(v)])
        return
    values = values.reshape(-1, values.shape[-1])
    writer.writerow([repr(i) for i in index])
    for row in values.tolist():
        writer.writerow([repr(v) for v in row])


def write_path_csv(stream: IO[str], path: PathLike) -> None:
    if isinstance(path, RealPath):
        write_csv(stream, path.times, path.values, 't')
    else:
        values = path_values(path)
        if isinstance(path, LatticePath):
            values = path.positions
        write_csv(stream, torch.arange(values.shape[-1]), values, 'index')
