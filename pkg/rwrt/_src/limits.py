# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import torch
from torch import Tensor

from .errors import ParameterError, check_alpha, check_hurst, check_positive
from .local_time import DEFAULT_BINS, Bins, local_time
from .measures import GaussianTail, MeasureGrid1D, ProductMeasureGrid, stable_integral
from .paths import RealPath, grid_indices, uniform_step
from .stable import Size, gen_fbm_path
from .stats import mean_stderr
from .streams import RandomStream
from .walks import CollectingSpec, gen_walk

# Paths of one simulation chunk hold at most this many values.
_CHUNK_VALUES = 1 << 23


class DriverKind(Enum):
    FBM = 'fbm'
    STABLE_LEVY = 'stable-levy'


@dataclass(frozen=True)
class DriverSpec:
    """
    Law of the random time process ``Y``: fractional Brownian motion with
    index ``hurst``, or an SbS Levy motion (``H' = 1/beta``) obtained from a
    rounded SbS walk rescaled at ``steps_per_unit`` steps per unit time.
    """
    kind: DriverKind
    hurst: Optional[float] = None
    beta: Optional[float] = None
    steps_per_unit: int = 1024

    def __post_init__(self):
        object.__setattr__(self, 'kind', DriverKind(self.kind))
        if self.kind is DriverKind.FBM:
            if self.hurst is None:
                raise ParameterError('DriverSpec(kind=fbm): a Hurst index is required')
            check_hurst('DriverSpec', self.hurst)
        else:
            if self.beta is None or not (1.0 < self.beta <= 2.0):
                raise ParameterError(f'DriverSpec(kind=stable-levy): expected beta in (1, 2], got {self.beta}')
        if self.steps_per_unit < 1:
            raise ParameterError(f'DriverSpec: expected steps_per_unit >= 1, got {self.steps_per_unit}')

    @classmethod
    def fbm(cls, hurst: float, steps_per_unit: int = 1024) -> 'DriverSpec':
        return cls(DriverKind.FBM, hurst=hurst, steps_per_unit=steps_per_unit)

    @classmethod
    def brownian(cls, steps_per_unit: int = 1024) -> 'DriverSpec':
        return cls.fbm(0.5, steps_per_unit)

    @classmethod
    def stable_levy(cls, beta: float, steps_per_unit: int = 1 << 14) -> 'DriverSpec':
        return cls(DriverKind.STABLE_LEVY, beta=beta, steps_per_unit=steps_per_unit)

    @property
    def hurst_prime(self) -> float:
        return self.hurst if self.kind is DriverKind.FBM else 1.0 / self.beta

    def sample(self, horizon: float, stream: RandomStream, batch_shape: Size = (),
               steps: Optional[int] = None) -> RealPath:
        """Paths on ``[0, horizon]`` with ``steps`` intervals (default ``horizon * steps_per_unit``)."""
        check_positive('DriverSpec.sample', 'horizon', horizon)
        n = int(round(horizon * self.steps_per_unit)) if steps is None else steps
        if n < 1:
            raise ParameterError(f'DriverSpec.sample: the horizon {horizon} holds no step')
        dt = horizon / n
        if self.kind is DriverKind.FBM:
            times = torch.arange(n + 1, dtype=torch.float64) * dt
            return gen_fbm_path(self.hurst, times, stream, batch_shape)
        walk = gen_walk(CollectingSpec.beta_stable(self.beta), n, stream, batch_shape)
        return RealPath(dt, walk.positions.to(torch.float64) * (1.0 / dt) ** (-1.0 / self.beta))


class Flavor(Enum):
    DELTA = 'delta'
    GAMMA = 'gamma'
    LAMBDA = 'lambda'


class KernelKind(Enum):
    INDICATOR = 'indicator'
    LOCALTIME = 'localtime'


def hurst_target(alpha: float, hurst_prime: float, kernel: Union[KernelKind, str]) -> float:
    """``1 - H' + H'/alpha`` for local-time kernels, ``H'/alpha`` for indicator kernels."""
    check_alpha('hurst_target', alpha)
    check_hurst('hurst_target', hurst_prime)
    if KernelKind(kernel) is KernelKind.LOCALTIME:
        return 1.0 - hurst_prime + hurst_prime / alpha
    return hurst_prime / alpha


@dataclass(frozen=True)
class LimitSpec:
    """
    One of the six continuum processes: ``delta`` integrates the kernel of a
    single ``Y`` path against ``M_0``, ``gamma`` integrates the kernels of
    ``copies`` paths against the product measure ``M_1`` and ``lambda``
    integrates their average (the ``E'`` of the kernel) against ``M_2``.

    Measure cells are ``(range of Y) / cells`` wide and the measure domain
    is ``[-L, L]`` with ``L = domain_factor * sup |Y|``. With
    ``exact_mean_kernel`` the ``lambda`` flavor of an fBm driver with the
    indicator kernel uses the Gaussian tail in place of the copy average.
    """
    flavor: Flavor
    kernel: KernelKind
    alpha: float
    driver: DriverSpec
    copies: int = 1024
    cells: int = DEFAULT_BINS
    domain_factor: float = 4.0
    exact_mean_kernel: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'flavor', Flavor(self.flavor))
        object.__setattr__(self, 'kernel', KernelKind(self.kernel))
        check_alpha('LimitSpec', self.alpha)
        if self.flavor is Flavor.LAMBDA and self.alpha <= 1.0:
            raise ParameterError(f'LimitSpec(flavor=lambda, alpha={self.alpha}): lambda requires alpha in (1, 2]')
        if self.copies < 1 or self.cells < 1:
            raise ParameterError('LimitSpec: copies and cells must be positive')
        if self.domain_factor < 1.0:
            raise ParameterError(f'LimitSpec: expected domain_factor >= 1, got {self.domain_factor}')
        if self.exact_mean_kernel and not (self.flavor is Flavor.LAMBDA and self.kernel is KernelKind.INDICATOR
                                           and self.driver.kind is DriverKind.FBM):
            raise ParameterError('LimitSpec: exact_mean_kernel needs the lambda flavor, the indicator kernel '
                                 'and an fbm driver')

    @property
    def hurst(self) -> float:
        return hurst_target(self.alpha, self.driver.hurst_prime, self.kernel)


def _resolution(y: Tensor, cells: int, domain_factor: float):
    sup = max(y.abs().max().item(), 1e-12)
    spread = y.max().item() - y.min().item()
    h = (spread if spread > 0 else sup) / cells
    return h, domain_factor * sup


def _limit_chunk(spec: LimitSpec, idx: Tensor, horizon: float, size: int,
                 stream: RandomStream) -> Tensor:
    copies = 1 if spec.flavor is Flavor.DELTA else spec.copies
    y = spec.driver.sample(horizon, stream.child('driver'), batch_shape=(size, copies))
    h, half_width = _resolution(y.values, spec.cells, spec.domain_factor)
    if spec.flavor is Flavor.GAMMA:
        grid = ProductMeasureGrid.sample(spec.alpha, h, half_width, copies, stream.child('measure'),
                                         batch_shape=(size,))
    else:
        grid = MeasureGrid1D.sample(spec.alpha, h, half_width, stream.child('measure'), batch_shape=(size, 1))
    if spec.kernel is KernelKind.INDICATOR:
        per_copy = grid.levy_motion(y.values[..., idx])
    else:
        per_copy = grid.occupation_integral(y)[..., idx]
    if spec.flavor is Flavor.LAMBDA:
        return per_copy.mean(dim=1)
    return per_copy.sum(dim=1)


def _lambda_exact_chunk(spec: LimitSpec, times: Tensor, size: int, stream: RandomStream) -> Tensor:
    scales = times.pow(spec.driver.hurst).clamp(min=1e-300)
    sup = scales.max().item()
    h = 2.0 * spec.domain_factor * sup / (2 * spec.cells)
    grid = MeasureGrid1D.sample(spec.alpha, h, 2.0 * spec.domain_factor * sup, stream.child('measure'),
                                batch_shape=(size, 1))
    values = stable_integral(GaussianTail(scales), grid)
    return torch.where(times == 0, torch.zeros_like(values), values)


def simulate_limit(spec: LimitSpec, times, stream: RandomStream, replicates: Optional[int] = None) -> RealPath:
    """
    Samples the limit process of ``spec`` on the uniform grid ``times``.

    Returns a :class:`RealPath` with values of shape ``(len(times),)``, or
    ``(replicates, len(times))`` when ``replicates`` is given. Every
    replicate owns its driver paths and its measure.
    """
    dt = uniform_step(times, 'simulate_limit')
    times = torch.as_tensor(times, dtype=torch.float64)
    horizon = times[-1].item()
    count = 1 if replicates is None else replicates
    if count < 1:
        raise ParameterError(f'simulate_limit: expected at least one replicate, got {count}')

    copies = 1 if spec.flavor is Flavor.DELTA else spec.copies
    n = int(round(horizon * spec.driver.steps_per_unit))
    driver_dt = horizon / n
    idx = grid_indices(times, driver_dt, n, 'simulate_limit')
    chunk = max(1, _CHUNK_VALUES // (copies * (n + 1)))

    out = []
    for c, start in enumerate(range(0, count, chunk)):
        size = min(chunk, count - start)
        sub = stream.child('chunk', c)
        if spec.exact_mean_kernel:
            out.append(_lambda_exact_chunk(spec, times, size, sub))
        else:
            out.append(_limit_chunk(spec, idx, horizon, size, sub))
    values = torch.cat(out)
    return RealPath(dt, values[0] if replicates is None else values)


def normalized_copy_sum(samples: Tensor, alpha: float, dim: int = 0, shared_measure: bool = False) -> Tensor:
    """
    ``n**(-1/alpha) * sum_i X_i`` over ``n`` independent copies (the
    renormalization under which sums of independent ``delta`` copies approach
    ``gamma``), or ``sum_i X_i / n`` when the copies share one measure (the
    copy average that approaches ``lambda``).
    """
    check_alpha('normalized_copy_sum', alpha)
    n = samples.shape[dim]
    if shared_measure:
        return samples.sum(dim=dim) / n
    return samples.sum(dim=dim) * n ** (-1.0 / alpha)


@dataclass(frozen=True)
class LocalTimeScalingReport:
    scale: float
    hurst_prime: float
    target_ratio: float
    ratio: float
    zscore: float
    mean_unit: float
    stderr_unit: float
    mean_scaled: float
    stderr_scaled: float
    replicates: int

    @property
    def passed(self) -> bool:
        return abs(self.zscore) <= 3.0

    def to_dict(self) -> dict:
        return {
            'scale': self.scale,
            'hurst_prime': self.hurst_prime,
            'target_ratio': self.target_ratio,
            'ratio': self.ratio,
            'zscore': self.zscore,
            'mean_unit': self.mean_unit,
            'stderr_unit': self.stderr_unit,
            'mean_scaled': self.mean_scaled,
            'stderr_scaled': self.stderr_scaled,
            'replicates': self.replicates,
            'passed': self.passed,
        }


def _l2_local_time(driver: DriverSpec, horizon: float, steps: int, width: float, replicates: int,
                   stream: RandomStream) -> Tensor:
    path = driver.sample(horizon, stream, batch_shape=(replicates,), steps=steps)
    bins = Bins.covering(path.values.min().item(), path.values.max().item(), width)
    return local_time(path, bins).l2_norm_sq()


def localtime_scaling_check(driver: DriverSpec, c: float, replicates: int, stream: RandomStream,
                            steps: int = 1024, width: float = 1.0 / 32) -> LocalTimeScalingReport:
    """
    Monte Carlo check of the local time scaling
    ``l(c t, x) = c**(1 - H') l(t, x / c**H')`` in law, through
    ``E int l(c, x)**2 dx = c**(2 - H') E int l(1, x)**2 dx``.

    Both horizons use ``steps`` steps and bins scaled by ``c**H'``; the check
    passes when the two sides agree within 3 combined standard errors.
    """
    check_positive('localtime_scaling_check', 'c', c)
    hp = driver.hurst_prime
    target = c ** (2.0 - hp)
    unit = _l2_local_time(driver, 1.0, steps, width, replicates, stream.child('scale', 0))
    if c == 1.0:
        scaled = unit
    else:
        scaled = _l2_local_time(driver, c, steps, width * c ** hp, replicates, stream.child('scale', 1))
    m1, s1 = mean_stderr(unit)
    mc, sc = mean_stderr(scaled)
    spread = math.sqrt(sc * sc + target * target * s1 * s1)
    z = 0.0 if spread == 0 else (mc - target * m1) / spread
    return LocalTimeScalingReport(c, hp, target, mc / m1, z, m1, s1, mc, sc, replicates)
