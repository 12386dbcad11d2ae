# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
import warnings
from dataclasses import dataclass
from typing import IO, Optional

import torch
from torch import Tensor

from .errors import ParameterError
from .measures import Kernel, _gather_last
from .paths import RealPath, grid_indices, write_csv

DEFAULT_BINS = 256


@dataclass(frozen=True)
class Bins:
    """``count`` bins of equal ``width`` starting at ``lo``."""
    lo: float
    width: float
    count: int

    def __post_init__(self):
        if not self.width > 0 or self.count < 1:
            raise ParameterError(f'Bins: expected width > 0 and count >= 1, got {self.width}, {self.count}')

    @property
    def hi(self) -> float:
        return self.lo + self.count * self.width

    @classmethod
    def covering(cls, lo_value: float, hi_value: float, width: float, origin: float = 0.0) -> 'Bins':
        """Smallest run of bins aligned on ``origin + k * width`` that covers ``[lo_value, hi_value]``."""
        first = math.floor((lo_value - origin) / width)
        last = math.floor((hi_value - origin) / width)
        return cls(origin + first * width, width, last - first + 1)

    @classmethod
    def for_values(cls, values: Tensor, count: int = DEFAULT_BINS) -> 'Bins':
        lo, hi = values.min().item(), values.max().item()
        width = (hi - lo) / count if hi > lo else 1.0 / count
        return cls.covering(lo, hi, width)

    def extended_to(self, lo_value: float, hi_value: float) -> 'Bins':
        lo = min(lo_value, self.lo)
        hi = max(hi_value, self.hi - 0.5 * self.width)
        return Bins.covering(lo, hi, self.width, origin=self.lo)


class LocalTimeProfile(Kernel):
    """
    Binned occupation density ``l_Y(t, x)``: ``values[..., j]`` is the time
    spent in bin ``j`` up to ``horizon``, divided by the bin width, so
    ``sum(values) * width == horizon``.
    """

    def __init__(self, bins: Bins, values: Tensor, horizon):
        self.bins = bins
        self.values = values
        self.horizon = horizon

    @property
    def width(self) -> float:
        return self.bins.width

    @property
    def edges(self) -> Tensor:
        return self.bins.lo + self.bins.width * torch.arange(self.bins.count + 1, dtype=torch.float64)

    def mass(self) -> Tensor:
        return self.values.sum(dim=-1) * self.width

    def l2_norm_sq(self) -> Tensor:
        """``int l(t, x)**2 dx``."""
        return (self.values * self.values).sum(dim=-1) * self.width

    def __call__(self, x: Tensor) -> Tensor:
        pos = (x - self.bins.lo) / self.width
        k = pos.floor().long().clamp(0, self.bins.count - 1)
        inside = (pos >= 0) & (pos < self.bins.count)
        out = _gather_last(self.values, k)
        return torch.where(inside, out, torch.zeros_like(out))

    def antiderivative(self, x: Tensor) -> Tensor:
        pos = ((x - self.bins.lo) / self.width).clamp(0, self.bins.count)
        k = pos.floor().long().clamp(max=self.bins.count - 1)
        zero = torch.zeros(self.values.shape[:-1] + (1,), dtype=torch.float64)
        cum = torch.cat([zero, self.values.cumsum(dim=-1)], dim=-1)
        frac = pos - k.to(torch.float64)
        return self.width * (_gather_last(cum, k) + frac * _gather_last(self.values, k))

    def occupation(self, a: float, b: float) -> Tensor:
        """``int_a^b l(t, x) dx``, the time spent in ``[a, b]``."""
        ends = self.antiderivative(torch.tensor([a, b], dtype=torch.float64))
        return ends[..., 1] - ends[..., 0]

    def support(self):
        return self.bins.lo, self.bins.hi

    def outside_mass(self, lo: float, hi: float, h: float, alpha: float) -> Tensor:
        edges = self.edges
        hi_t = torch.tensor(hi, dtype=torch.float64)
        lo_t = torch.tensor(lo, dtype=torch.float64)
        overlap = (torch.minimum(edges[1:], hi_t) - torch.maximum(edges[:-1], lo_t)).clamp(min=0)
        return (self.values.abs().pow(alpha) * (self.width - overlap)).sum(dim=-1)

    def to_csv(self, stream: IO[str]) -> None:
        write_csv(stream, 0.5 * (self.edges[1:] + self.edges[:-1]), self.values, 'x')

    def __repr__(self):
        return f'LocalTimeProfile(bins={self.bins}, batch_shape={tuple(self.values.shape[:-1])})'


def _resolve_bins(values: Tensor, bins: Optional[Bins], fn_name: str) -> Bins:
    if bins is None:
        return Bins.for_values(values)
    lo, hi = values.min().item(), values.max().item()
    if lo < bins.lo or hi > bins.hi:
        extended = bins.extended_to(lo, hi)
        warnings.warn(
            f'{fn_name}: the path range [{lo:.4g}, {hi:.4g}] leaves the bins [{bins.lo:.4g}, {bins.hi:.4g}]; '
            f'extending to {extended.count} bins', RuntimeWarning)
        return extended
    return bins


def _deposit(values: Tensor, dt: float, bins: Bins, slot: Tensor, slots: int) -> Tensor:
    """
    Occupation masses per (path, slot, bin): each linear segment deposits its
    duration into the bins it crosses in proportion to the length it spends
    there. ``slot[i]`` assigns segment ``i`` to a slot (``slots`` drops it).
    """
    r = values.shape[0]
    count, w = bins.count, bins.width
    y0, y1 = values[:, :-1], values[:, 1:]
    a, b = torch.minimum(y0, y1), torch.maximum(y0, y1)
    ua, ub = (a - bins.lo) / w, (b - bins.lo) / w
    ja = ua.floor().long().clamp(0, count - 1)
    jb = ub.floor().long().clamp(0, count - 1)
    same = ja == jb
    length = b - a
    rate = torch.where(same, torch.zeros_like(length), dt / torch.where(same, torch.ones_like(length), length))

    valid = (slot < slots).to(torch.float64).expand_as(a)
    s = slot.clamp(max=slots - 1).expand_as(ja)
    row = torch.arange(r)[:, None] * slots + s

    first = torch.where(same, torch.full_like(a, dt), rate * w * (ja + 1 - ua))
    last = torch.where(same, torch.zeros_like(a), rate * w * (ub - jb))
    masses = torch.zeros(r * slots * count, dtype=torch.float64)
    masses.index_add_(0, (row * count + ja).reshape(-1), (valid * first).reshape(-1))
    masses.index_add_(0, (row * count + jb).reshape(-1), (valid * last).reshape(-1))

    # full bins strictly between ja and jb, through a difference array
    interior = torch.where(jb > ja + 1, rate * w, torch.zeros_like(a)) * valid
    diff = torch.zeros(r * slots * (count + 1), dtype=torch.float64)
    diff.index_add_(0, (row * (count + 1) + ja + 1).clamp(max=r * slots * (count + 1) - 1).reshape(-1),
                    interior.reshape(-1))
    diff.index_add_(0, (row * (count + 1) + jb).reshape(-1), -interior.reshape(-1))
    full = diff.reshape(r * slots, count + 1).cumsum(dim=-1)[:, :count]
    return (masses.reshape(r * slots, count) + full).reshape(r, slots, count)


def local_time(path: RealPath, bins: Optional[Bins] = None) -> LocalTimeProfile:
    """
    Local time ``l_Y(T, x)`` of the piecewise-linear path up to its horizon
    ``T``. Bins default to ``(path range) / 256`` wide; bins that do not
    cover the path are extended with a warning.
    """
    values = path.values.reshape(-1, path.values.shape[-1])
    bins = _resolve_bins(values, bins, 'local_time')
    slot = torch.zeros(values.shape[-1] - 1, dtype=torch.int64)
    masses = _deposit(values, path.dt, bins, slot, 1)[:, 0]
    return LocalTimeProfile(bins, (masses / bins.width).reshape(path.batch_shape + (bins.count,)), path.horizon)


def local_time_profiles(path: RealPath, times, bins: Optional[Bins] = None) -> LocalTimeProfile:
    """
    The family ``l_Y(t, .)`` for every ``t`` in the increasing grid ``times``
    in one pass; the result has values of shape ``batch + (len(times), bins)``.
    """
    idx = grid_indices(times, path.dt, path.n, 'local_time_profiles')
    if bool((idx.diff() < 0).any()):
        raise ParameterError('local_time_profiles: times must be increasing')
    values = path.values.reshape(-1, path.values.shape[-1])
    bins = _resolve_bins(values, bins, 'local_time_profiles')
    # segment i ends at step i + 1 and counts towards every t_m >= (i + 1) dt
    slot = torch.searchsorted(idx, torch.arange(1, path.n + 1))
    masses = _deposit(values, path.dt, bins, slot, idx.numel()).cumsum(dim=1)
    horizon = idx.to(torch.float64) * path.dt
    values = (masses / bins.width).reshape(path.batch_shape + (idx.numel(), bins.count))
    return LocalTimeProfile(bins, values, horizon)
