# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy import stats as scipy_stats
from torch import Tensor

from .errors import EstimationError, ParameterError
from .paths import RealPath

_MIN_STDERR = 1e-12


@dataclass(frozen=True)
class HurstReport:
    estimate: float
    stderr: float
    method: str
    scales: Tuple[float, ...]

    def to_dict(self) -> dict:
        return {'estimate': self.estimate, 'stderr': self.stderr, 'method': self.method,
                'scales': list(self.scales)}


@dataclass(frozen=True)
class EcfReport:
    """Real part of the empirical characteristic function on a grid of thetas."""
    thetas: Tuple[float, ...]
    values: Tuple[float, ...]
    stderr: Tuple[float, ...]
    samples: int

    def to_dict(self) -> dict:
        return {'thetas': list(self.thetas), 'values': list(self.values), 'stderr': list(self.stderr),
                'samples': self.samples}


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float

    def to_dict(self) -> dict:
        return {'statistic': self.statistic, 'pvalue': self.pvalue}


@dataclass(frozen=True)
class CovarianceReport:
    times: Tuple[float, ...]
    matrix: Tuple[Tuple[float, ...], ...]
    stderr: Tuple[Tuple[float, ...], ...]
    samples: int

    def as_tensors(self) -> Tuple[Tensor, Tensor]:
        return torch.tensor(self.matrix, dtype=torch.float64), torch.tensor(self.stderr, dtype=torch.float64)

    def to_dict(self) -> dict:
        return {'times': list(self.times), 'matrix': [list(r) for r in self.matrix],
                'stderr': [list(r) for r in self.stderr], 'samples': self.samples}


def mean_stderr(x: Tensor) -> Tuple[float, float]:
    x = torch.as_tensor(x, dtype=torch.float64).reshape(-1)
    if x.numel() < 2:
        raise ParameterError(f'mean_stderr: expected at least two samples, got {x.numel()}')
    return x.mean().item(), (x.std() / math.sqrt(x.numel())).item()


def _dyadic_indices(n: int, scales: int) -> Tensor:
    idx = sorted({max(1, int(round(n / 2 ** j))) for j in range(scales)})
    return torch.tensor(idx)


def estimate_hurst(ensemble: RealPath, scales: int = 8, min_paths: int = 100) -> HurstReport:
    """
    Self-similarity index of an ensemble of paths on a common grid: the slope
    of ``log median |X_t|`` against ``log t`` over the dyadic times
    ``t_max / 2**j``, ``j < scales``. The median keeps the estimator usable
    for heavy-tailed (alpha < 2) marginals.
    """
    values = ensemble.values.reshape(-1, ensemble.values.shape[-1])
    if values.shape[0] < min_paths:
        raise ParameterError(f'estimate_hurst: expected at least {min_paths} paths, got {values.shape[0]}')
    idx = _dyadic_indices(ensemble.n, scales)
    if idx.numel() < 4:
        raise ParameterError(f'estimate_hurst: the grid only supports {idx.numel()} dyadic scales, need 4')
    medians = torch.quantile(values[:, idx].abs(), 0.5, dim=0)
    if bool((medians <= 0).any()) or not bool(torch.isfinite(medians).all()):
        raise EstimationError('estimate_hurst: degenerate ensemble, the median of |X_t| vanishes at some scale')
    t = idx.to(torch.float64) * ensemble.dt
    x, y = t.log(), medians.log()
    xc = x - x.mean()
    slope = (xc * (y - y.mean())).sum() / (xc * xc).sum()
    resid = y - y.mean() - slope * xc
    dof = max(1, x.numel() - 2)
    stderr = math.sqrt((resid * resid).sum().item() / dof / (xc * xc).sum().item())
    return HurstReport(slope.item(), max(stderr, _MIN_STDERR), 'median-abs-loglog', tuple(t.tolist()))


def ecf(samples: Tensor, thetas) -> EcfReport:
    """Mean of ``cos(theta X)`` per theta, with its standard error."""
    samples = torch.as_tensor(samples, dtype=torch.float64).reshape(-1)
    if samples.numel() == 0:
        raise ParameterError('ecf: expected at least one sample')
    thetas = torch.as_tensor(thetas, dtype=torch.float64).reshape(-1)
    c = torch.cos(thetas[:, None] * samples[None, :])
    values = c.mean(dim=1)
    if samples.numel() > 1:
        stderr = c.std(dim=1) / math.sqrt(samples.numel())
    else:
        stderr = torch.zeros_like(values)
    return EcfReport(tuple(thetas.tolist()), tuple(values.tolist()), tuple(stderr.tolist()), samples.numel())


def ecf_distance(a: EcfReport, b: EcfReport) -> float:
    if len(a.thetas) != len(b.thetas) or any(abs(x - y) > 1e-12 for x, y in zip(a.thetas, b.thetas)):
        raise ParameterError('ecf_distance: the reports use different theta grids')
    return max(abs(x - y) for x, y in zip(a.values, b.values))


def stable_cf(thetas, alpha: float, sigma: float = 1.0) -> Tensor:
    """``exp(-(sigma |theta|)**alpha)``."""
    thetas = torch.as_tensor(thetas, dtype=torch.float64)
    return torch.exp(-(sigma * thetas.abs()).pow(alpha))


def ecf_zscore(report: EcfReport, target) -> float:
    """``max |ecf - target| / stderr`` over the thetas with a positive stderr."""
    values = torch.tensor(report.values, dtype=torch.float64)
    stderr = torch.tensor(report.stderr, dtype=torch.float64)
    target = torch.as_tensor(target, dtype=torch.float64).expand_as(values)
    z = (values - target).abs() / stderr.clamp(min=_MIN_STDERR)
    z = torch.where(stderr > 0, z, torch.zeros_like(z))
    return z.max().item()


def ks_test(samples: Tensor, reference: Union[Tensor, str, Callable]) -> KsResult:
    """
    Two-sample KS test against reference samples, or one-sample KS test against
    a cdf (a callable or a ``scipy.stats`` distribution name such as ``'norm'``).
    """
    x = torch.as_tensor(samples, dtype=torch.float64).reshape(-1).numpy()
    if isinstance(reference, Tensor):
        result = scipy_stats.ks_2samp(x, reference.to(torch.float64).reshape(-1).numpy())
    elif isinstance(reference, str) or callable(reference):
        result = scipy_stats.kstest(x, reference)
    else:
        raise ParameterError(f'ks_test: unsupported reference of type {type(reference)}')
    return KsResult(float(result.statistic), float(result.pvalue))


def cov_matrix(values: Tensor, times: Optional[Sequence[float]] = None, groups: int = 20) -> CovarianceReport:
    """
    Sample covariance of the columns of ``values`` (replicates x times) with
    delete-a-group jackknife standard errors.
    """
    values = torch.as_tensor(values, dtype=torch.float64)
    if values.dim() != 2 or values.shape[0] < 2:
        raise ParameterError('cov_matrix: expected a (replicates, times) matrix with at least two replicates')
    r, k = values.shape
    times = tuple(float(t) for t in (range(k) if times is None else times))

    def cov(v: Tensor) -> Tensor:
        c = v - v.mean(dim=0)
        return c.T @ c / (v.shape[0] - 1)

    full = cov(values)
    groups = max(2, min(groups, r // 2))
    labels = torch.arange(r) % groups
    leave_out = torch.stack([cov(values[labels != g]) for g in range(groups)])
    spread = leave_out - leave_out.mean(dim=0)
    stderr = torch.sqrt((groups - 1) / groups * (spread * spread).sum(dim=0))
    return CovarianceReport(times, tuple(tuple(row) for row in full.tolist()),
                            tuple(tuple(row) for row in stderr.tolist()), r)


def gaussian_abs_mean(variance: float) -> float:
    """``E|N(0, variance)|``."""
    return math.sqrt(2.0 * variance / math.pi)


def normal_cdf(scale: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return scipy_stats.norm(scale=scale).cdf
