# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import Tensor

from .errors import ParameterError, check_hurst
from .limits import DriverSpec
from .measures import MeasureGrid1D, ProductMeasureGrid
from .paths import RealPath
from .streams import RandomStream

# SaS(1) with alpha = 2 has variance 2; extracted Brownian motions carry it.
CONVENTION_FACTOR = 2.0


def default_horizon(hurst: float) -> float:
    return 64.0 if hurst >= 0.5 else 256.0


@dataclass(frozen=True, eq=False)
class HittingTimeMap:
    """
    First passage times ``tau_s = inf{t : Y_t = s}`` of the piecewise-linear
    path for each level; ``taus`` is NaN where the level is not reached
    within the horizon.
    """
    path: RealPath
    levels: Tensor
    taus: Tensor
    step_oscillation: Tensor

    @property
    def reached(self) -> Tensor:
        return ~torch.isnan(self.taus)

    def values_at_taus(self) -> Tensor:
        """``Y(tau_s)``; NaN where the level is not reached."""
        n = self.path.n
        steps = torch.nan_to_num(self.taus / self.path.dt, nan=0.0).clamp(0, n)
        lo, hi = steps.floor().long(), steps.ceil().long()
        y_lo = torch.gather(self.path.values, -1, lo)
        y_hi = torch.gather(self.path.values, -1, hi)
        out = y_lo + (steps - lo.to(torch.float64)) * (y_hi - y_lo)
        return torch.where(self.reached, out, torch.full_like(out, math.nan))


def hitting_times(path: RealPath, levels) -> HittingTimeMap:
    """
    Crossing times of every positive level by every path: the first grid
    interval whose right end is at or above ``s``, interpolated linearly.
    """
    levels = torch.as_tensor(levels, dtype=torch.float64).reshape(-1)
    if bool((levels <= 0).any()):
        raise ParameterError(f'hitting_times: levels must be positive, got {levels.tolist()}')
    values = path.values
    running_max = torch.cummax(values, dim=-1).values
    query = levels.expand(values.shape[:-1] + levels.shape).contiguous()
    k = torch.searchsorted(running_max.contiguous(), query)
    reached = k <= path.n
    k = k.clamp(1, path.n)
    y_hi = torch.gather(values, -1, k)
    y_lo = torch.gather(values, -1, k - 1)
    frac = ((query - y_lo) / (y_hi - y_lo)).clamp(0.0, 1.0)
    taus = (k.to(torch.float64) - 1.0 + frac) * path.dt
    taus = torch.where(reached, taus, torch.full_like(taus, math.nan))
    return HittingTimeMap(path, levels, taus, (y_hi - y_lo).abs())


def hitting_time(path: RealPath, s: float) -> float:
    """``tau_s`` of a single path; NaN when ``s`` is not reached."""
    if path.values.dim() != 1:
        raise ParameterError('hitting_time: expected a single path, use hitting_times for ensembles')
    return hitting_times(path, [s]).taus[0].item()


@dataclass(frozen=True, eq=False)
class TimeChangedEnsemble:
    """
    Time-changed values ``X_s`` (rows: kept replicates, columns: levels).
    For ``extract_bm_times`` ``dropped_copies`` counts copies that never reached
    a level and were left out of the product measure.
    """
    levels: Tuple[float, ...]
    values: Tensor
    dropped: int
    replicates: int
    horizon: float
    hurst: float
    dropped_copies: int = 0
    max_level_error: float = 0.0
    convention_factor: float = CONVENTION_FACTOR

    @property
    def drop_rate(self) -> float:
        return self.dropped / self.replicates


def _check(fn_name: str, hurst: float, levels) -> Tensor:
    check_hurst(fn_name, hurst)
    levels = torch.as_tensor(levels, dtype=torch.float64).reshape(-1)
    if levels.numel() == 0 or bool((levels <= 0).any()) or bool((levels.diff() <= 0).any()):
        raise ParameterError(f'{fn_name}: expected increasing positive levels, got {levels.tolist()}')
    return levels


def extract_bm_minus(hurst: float, levels, replicates: int, stream: RandomStream,
                     horizon: Optional[float] = None, steps_per_unit: int = 64, cells: int = 1024,
                     chunk: int = 256) -> TimeChangedEnsemble:
    """
    Evaluates ``Y^(-)_t = X(Y_t)`` (alpha = 2, ``Y`` an fBm) at the first passage
    times ``tau_s`` of ``Y``. The result is a Brownian motion in ``s`` with
    covariance ``2 min(s, t)``; replicates that miss a level within
    ``horizon`` are dropped and counted.
    """
    levels = _check('extract_bm_minus', hurst, levels)
    horizon = default_horizon(hurst) if horizon is None else horizon
    driver = DriverSpec.fbm(hurst, steps_per_unit)
    top = levels[-1].item()
    h = top / cells
    kept, dropped, worst = [], 0, 0.0
    for c, start in enumerate(range(0, replicates, chunk)):
        size = min(chunk, replicates - start)
        sub = stream.child('chunk', c)
        y = driver.sample(horizon, sub.child('driver'), batch_shape=(size,))
        taus = hitting_times(y, levels)
        ok = taus.reached.all(dim=-1)
        dropped += int((~ok).sum().item())
        if not bool(ok.any()):
            continue
        at_tau = HittingTimeMap(y[ok], levels, taus.taus[ok], taus.step_oscillation[ok]).values_at_taus()
        worst = max(worst, (at_tau - levels).abs().max().item())
        grid = MeasureGrid1D.sample(2.0, h, top + h, sub.child('measure'), batch_shape=(size,))
        grid = dataclasses.replace(grid, draws=grid.draws[ok])
        kept.append(grid.levy_motion(at_tau.clamp(max=grid.hi)))
    _warn_dropped('extract_bm_minus', dropped, replicates, horizon)
    values = torch.cat(kept) if kept else torch.zeros(0, levels.numel(), dtype=torch.float64)
    return TimeChangedEnsemble(tuple(levels.tolist()), values, dropped, replicates, horizon, hurst,
                               max_level_error=worst)


def extract_bm_times(hurst: float, levels, copies: int, replicates: int, stream: RandomStream,
                     horizon: Optional[float] = None, steps_per_unit: int = 16, cells: int = 256,
                     ) -> TimeChangedEnsemble:
    """
    Time-changes the kernel instead of the process: each of ``copies`` fBm
    paths gets its own ``tau^(i)_s`` and the kernels ``1_[0, Y^(i)(tau^(i)_s)]``
    are integrated against the product measure ``M_1``. The result is a
    Brownian motion with ``E(X_s + X_t)**2 = 2 (3s + t)`` for ``s <= t``.

    Copies that miss a level within ``horizon`` leave the product measure
    (``P'`` is spread over the copies that reached every level); a replicate
    is dropped only when no copy reached every level.
    """
    levels = _check('extract_bm_times', hurst, levels)
    if copies < 1:
        raise ParameterError(f'extract_bm_times: expected at least one copy, got {copies}')
    horizon = default_horizon(hurst) if horizon is None else horizon
    driver = DriverSpec.fbm(hurst, steps_per_unit)
    top = levels[-1].item()
    h = top / cells
    kept, dropped, dropped_copies, worst = [], 0, 0, 0.0
    for r in range(replicates):
        sub = stream.child('replicate', r)
        y = driver.sample(horizon, sub.child('driver'), batch_shape=(copies,))
        taus = hitting_times(y, levels)
        ok = taus.reached.all(dim=-1)
        reached = int(ok.sum().item())
        dropped_copies += copies - reached
        if reached == 0:
            dropped += 1
            continue
        at_tau = HittingTimeMap(y[ok], levels, taus.taus[ok], taus.step_oscillation[ok]).values_at_taus()
        worst = max(worst, (at_tau - levels).abs().max().item())
        grid = ProductMeasureGrid.sample(2.0, h, top + h, reached, sub.child('measure'))
        kept.append(grid.levy_motion(at_tau.clamp(max=grid.hi)).sum(dim=0))
    _warn_dropped('extract_bm_times', dropped, replicates, horizon)
    values = torch.stack(kept) if kept else torch.zeros(0, levels.numel(), dtype=torch.float64)
    return TimeChangedEnsemble(tuple(levels.tolist()), values, dropped, replicates, horizon, hurst,
                               dropped_copies=dropped_copies, max_level_error=worst)


def _warn_dropped(fn_name: str, dropped: int, replicates: int, horizon: float) -> None:
    if dropped:
        warnings.warn(
            f'{fn_name}: {dropped} of {replicates} replicates did not reach every level before '
            f't = {horizon:g} and were dropped', RuntimeWarning)


def brownian_miss_probability(level: float, horizon: float, dt: float = 0.0) -> float:
    """
    ``P(tau_s > T)`` for standard Brownian motion, ``P(|N(0, T)| < s)``; with
    ``dt > 0`` the level is shifted by ``0.5826 sqrt(dt)`` to account for
    monitoring the path on a grid.
    """
    shifted = level + 0.5826 * math.sqrt(dt)
    return math.erf(shifted / math.sqrt(2.0 * horizon))

