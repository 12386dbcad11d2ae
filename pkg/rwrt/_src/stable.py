# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import torch
from torch import Tensor

from .errors import ParameterError, ResourceError, UnsupportedError, check_alpha, check_hurst, check_positive
from .paths import RealPath, uniform_step
from .streams import RandomStream

Size = Union[int, Tuple[int, ...], torch.Size]

# Largest n for which the dense Cholesky fallback of gen_fgn is attempted.
MAX_DENSE_FGN = 8192
_EIGEN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class StableParams:
    """
    Symmetric alpha-stable law with characteristic function
    ``exp(-sigma**alpha * |theta|**alpha)``.

    Note the convention: ``alpha = 2, sigma = 1`` is the Gaussian law with
    variance 2, not 1.
    """
    alpha: float
    sigma: float = 1.0

    def __post_init__(self):
        check_alpha('StableParams', self.alpha)
        check_positive('StableParams', 'sigma', self.sigma)


class SceneryKind(Enum):
    EXACT_STABLE = 'exact-stable'
    GAUSSIAN = 'gaussian'
    RADEMACHER = 'rademacher'


def _size(n: Size) -> Tuple[int, ...]:
    size = (n,) if isinstance(n, int) else tuple(n)
    if any(s < 0 for s in size) or (isinstance(n, int) and n < 1):
        raise ParameterError(f'expected a positive sample count, got {n}')
    return size


def sample_sas(params: StableParams, n: Size, stream: RandomStream) -> Tensor:
    """
    Draws i.i.d. SaS(sigma) samples with the Chambers-Mallows-Stuck transform.

    Args:
        params: stability index and scale.
        n: number of draws, or a shape.
        stream: source of randomness.

    Returns:
        float64 tensor of shape ``n``.
    """
    size = _size(n)
    g = stream.generator()
    alpha = params.alpha
    v = math.pi * (torch.rand(size, generator=g, dtype=torch.float64) - 0.5)
    w = torch.empty(size, dtype=torch.float64).exponential_(1.0, generator=g)
    if alpha == 2.0:
        x = 2.0 * torch.sqrt(w) * torch.sin(v)
    elif alpha == 1.0:
        x = torch.tan(v)
    else:
        x = (torch.sin(alpha * v) / torch.cos(v).pow(1.0 / alpha)
             * (torch.cos((1.0 - alpha) * v) / w).pow((1.0 - alpha) / alpha))
    return params.sigma * x


def sample_scenery_law(kind: Union[SceneryKind, str], alpha: float, n: Size, stream: RandomStream) -> Tensor:
    """
    Symmetric scenery rewards normalized to the scale-1 law: partial sums over
    ``m`` sites, divided by ``m**(1/alpha)``, converge to SaS(1).

    ``gaussian`` is N(0, 2) and ``rademacher`` is uniform on ``{-sqrt(2), sqrt(2)}``;
    both require ``alpha = 2``.
    """
    kind = SceneryKind(kind)
    check_alpha('sample_scenery_law', alpha)
    if kind is not SceneryKind.EXACT_STABLE and alpha != 2.0:
        raise ParameterError(
            f'sample_scenery_law(kind={kind.value}, alpha={alpha}): {kind.value} sceneries '
            f'are only in the domain of attraction of alpha = 2')
    if kind is SceneryKind.EXACT_STABLE:
        return sample_sas(StableParams(alpha), n, stream)
    size = _size(n)
    g = stream.generator()
    if kind is SceneryKind.GAUSSIAN:
        return math.sqrt(2.0) * torch.randn(size, generator=g, dtype=torch.float64)
    signs = torch.randint(0, 2, size, generator=g).to(torch.float64) * 2.0 - 1.0
    return math.sqrt(2.0) * signs


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def scenery_moment(kind: Union[SceneryKind, str], alpha: float, p: int) -> float:
    """Closed-form ``E[eta**p]`` for the scenery laws that have one."""
    kind = SceneryKind(kind)
    if p < 1:
        raise ParameterError(f'scenery_moment: expected p >= 1, got {p}')
    if kind is SceneryKind.EXACT_STABLE and alpha != 2.0:
        raise UnsupportedError(
            f'scenery_moment(kind={kind.value}, alpha={alpha}, p={p}): moments of an '
            f'alpha < 2 stable law are not available in closed form')
    if p % 2 == 1:
        return 0.0
    q = p // 2
    if kind is SceneryKind.RADEMACHER:
        return float(2 ** q)
    # N(0, 2): E[eta^{2q}] = 2^q (2q - 1)!!
    return float(2 ** q * _double_factorial(2 * q - 1))


def fgn_autocovariance(hurst: float, n: int) -> Tensor:
    """``r(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2`` for ``k = 0..n-1``."""
    k = torch.arange(n, dtype=torch.float64)
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1).pow(h2) - 2 * k.pow(h2) + (k - 1).abs().pow(h2))


def _dense_fgn(hurst: float, n: int, size: Tuple[int, ...], stream: RandomStream) -> Tensor:
    if n > MAX_DENSE_FGN:
        raise ResourceError(
            f'gen_fgn(H={hurst}, n={n}): circulant embedding failed and the dense '
            f'fallback is limited to n <= {MAX_DENSE_FGN}')
    r = fgn_autocovariance(hurst, n)
    idx = torch.arange(n)
    cov = r[(idx[:, None] - idx[None, :]).abs()]
    chol = torch.linalg.cholesky(cov)
    z = torch.randn(size + (n,), generator=stream.child('dense').generator(), dtype=torch.float64)
    return z @ chol.T


def gen_fgn(hurst: float, n: int, stream: RandomStream, batch_shape: Size = ()) -> Tensor:
    """
    Fractional Gaussian noise of length ``n`` with unit variance, by circulant
    embedding of the autocovariance. Partial sums of the first ``m`` terms
    have variance ``m**(2H)``.

    Falls back to an exact Cholesky factorization if the embedding has an
    eigenvalue below ``-1e-10``.
    """
    check_hurst('gen_fgn', hurst)
    if n < 1:
        raise ParameterError(f'gen_fgn: expected n >= 1, got {n}')
    size = tuple(batch_shape) if not isinstance(batch_shape, int) else (batch_shape,)
    if n == 1:
        return torch.randn(size + (1,), generator=stream.generator(), dtype=torch.float64)

    r = fgn_autocovariance(hurst, n + 1)
    # first row of the 2n circulant: r(0..n), r(n-1..1)
    row = torch.cat([r, r[1:n].flip(0)])
    lam = torch.fft.fft(row).real
    if bool((lam < -_EIGEN_TOLERANCE).any()):
        warnings.warn(
            f'gen_fgn(H={hurst}, n={n}): negative circulant eigenvalue '
            f'{lam.min().item():.3g}, using the dense factorization', RuntimeWarning)
        return _dense_fgn(hurst, n, size, stream)
    lam = lam.clamp(min=0.0)
    m = row.shape[0]
    g = stream.generator()
    z = torch.complex(torch.randn(size + (m,), generator=g, dtype=torch.float64),
                      torch.randn(size + (m,), generator=g, dtype=torch.float64))
    out = torch.fft.fft(torch.sqrt(lam / m) * z, dim=-1)
    return out.real[..., :n]


def gen_fbm_path(hurst: float, times, stream: RandomStream, batch_shape: Size = ()) -> RealPath:
    """
    Fractional Brownian motion on the uniform grid ``times`` (starting at 0),
    with covariance ``(s^{2H} + t^{2H} - |t - s|^{2H}) / 2``.
    """
    dt = uniform_step(times, 'gen_fbm_path')
    n = torch.as_tensor(times).numel() - 1
    noise = gen_fgn(hurst, n, stream, batch_shape)
    values = dt ** hurst * noise.cumsum(dim=-1)
    zero = torch.zeros(values.shape[:-1] + (1,), dtype=torch.float64)
    return RealPath(dt, torch.cat([zero, values], dim=-1))
