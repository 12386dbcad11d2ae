# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
from dataclasses import dataclass
from typing import IO, Callable, List, Optional, Sequence, Tuple, Union

import torch
from torch import Tensor

from .errors import NumericError, ParameterError, TruncationError, check_alpha, check_positive
from .paths import RealPath, write_csv
from .scenery import SceneryField
from .stable import SceneryKind, StableParams, sample_sas, sample_scenery_law
from .stats import EcfReport, ecf, ecf_distance
from .streams import RandomStream

# Largest share of ||f||_alpha^alpha allowed outside a measure's domain.
TRUNCATION_BUDGET = 1e-3


def _gather_last(table: Tensor, idx: Tensor) -> Tensor:
    batch = torch.broadcast_shapes(table.shape[:-1], idx.shape[:-1])
    table = table.expand(batch + table.shape[-1:])
    idx = idx.expand(batch + idx.shape[-1:])
    return torch.gather(table, -1, idx)


class Kernel(object):
    """
    A deterministic integrand ``f(x)``, possibly batched (one function per
    leading index). Subclasses with a closed-form ``antiderivative`` are
    integrated exactly over each cell; everything else uses the midpoint rule.
    """

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def antiderivative(self, x: Tensor) -> Optional[Tensor]:
        return None

    def support(self) -> Optional[Tuple[float, float]]:
        return None

    def cell_integrals(self, edges: Tensor) -> Tensor:
        """``int f`` over ``[edges[j], edges[j + 1]]``, shape ``batch + (len(edges) - 1,)``."""
        prim = self.antiderivative(edges)
        if prim is not None:
            return prim.diff(dim=-1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        return self(mid) * edges.diff()

    def outside_mass(self, lo: float, hi: float, h: float, alpha: float) -> Tensor:
        """``int |f|**alpha`` outside ``[lo, hi]``, by the midpoint rule on a ring of cells."""
        support = self.support()
        if support is not None and support[0] >= lo and support[1] <= hi:
            return torch.zeros(())
        cells = max(16, int(round((hi - lo) / h)) // 4)
        left = lo - h * (torch.arange(cells, dtype=torch.float64) + 0.5)
        right = hi + h * (torch.arange(cells, dtype=torch.float64) + 0.5)
        ring = torch.cat([left.flip(0), right])
        return (self(ring).abs().pow(alpha) * h).sum(dim=-1)


class FunctionKernel(Kernel):
    def __init__(self, fn: Callable[[Tensor], Tensor], support: Optional[Tuple[float, float]] = None):
        self.fn = fn
        self._support = support

    def __call__(self, x: Tensor) -> Tensor:
        return torch.as_tensor(self.fn(x), dtype=torch.float64)

    def support(self):
        return self._support


class Indicator(Kernel):
    """``weight * 1_[lo, hi](x)``; the endpoints may be batched tensors."""

    def __init__(self, a, b, weight: float = 1.0):
        a = torch.as_tensor(a, dtype=torch.float64)
        b = torch.as_tensor(b, dtype=torch.float64)
        self.lo = torch.minimum(a, b)
        self.hi = torch.maximum(a, b)
        self.weight = weight

    @classmethod
    def between(cls, a, b, weight: float = 1.0) -> 'Indicator':
        return cls(a, b, weight)

    @classmethod
    def origin_to(cls, y) -> 'Indicator':
        """``1_[0, y]``, read as ``1_[y, 0]`` when ``y < 0``."""
        y = torch.as_tensor(y, dtype=torch.float64)
        return cls(torch.zeros_like(y), y)

    def __call__(self, x: Tensor) -> Tensor:
        lo, hi = self.lo[..., None], self.hi[..., None]
        return self.weight * ((x >= lo) & (x <= hi)).to(torch.float64)

    def antiderivative(self, x: Tensor) -> Tensor:
        lo, hi = self.lo[..., None], self.hi[..., None]
        return self.weight * (torch.minimum(torch.maximum(x, lo), hi) - lo)

    def support(self):
        return self.lo.min().item(), self.hi.max().item()

    def outside_mass(self, lo: float, hi: float, h: float, alpha: float) -> Tensor:
        out = (lo - self.lo).clamp(min=0) + (self.hi - hi).clamp(min=0)
        out = torch.minimum(out, self.hi - self.lo)
        return abs(self.weight) ** alpha * out


class PiecewiseLinear(Kernel):
    """Linear interpolation of ``values`` at increasing ``knots``, zero outside them."""

    def __init__(self, knots, values):
        self.knots = torch.as_tensor(knots, dtype=torch.float64)
        self.values = torch.as_tensor(values, dtype=torch.float64)
        if self.knots.dim() != 1 or self.knots.numel() < 2 or bool((self.knots.diff() <= 0).any()):
            raise ParameterError('PiecewiseLinear: expected at least two strictly increasing knots')
        widths = self.knots.diff()
        areas = 0.5 * (self.values[..., 1:] + self.values[..., :-1]) * widths
        zero = torch.zeros(areas.shape[:-1] + (1,), dtype=torch.float64)
        self._cumulative = torch.cat([zero, areas.cumsum(dim=-1)], dim=-1)

    def _locate(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        xc = x.clamp(self.knots[0].item(), self.knots[-1].item())
        j = (torch.searchsorted(self.knots, xc, right=True) - 1).clamp(0, self.knots.numel() - 2)
        return xc, j

    def __call__(self, x: Tensor) -> Tensor:
        xc, j = self._locate(x)
        v0, v1 = _gather_last(self.values, j), _gather_last(self.values, j + 1)
        k0, k1 = self.knots[j], self.knots[j + 1]
        out = v0 + (v1 - v0) * (xc - k0) / (k1 - k0)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        return torch.where(inside, out, torch.zeros_like(out))

    def antiderivative(self, x: Tensor) -> Tensor:
        xc, j = self._locate(x)
        v0, v1 = _gather_last(self.values, j), _gather_last(self.values, j + 1)
        k0, k1 = self.knots[j], self.knots[j + 1]
        d = xc - k0
        slope = (v1 - v0) / (k1 - k0)
        return _gather_last(self._cumulative, j) + v0 * d + 0.5 * slope * d * d

    def support(self):
        return self.knots[0].item(), self.knots[-1].item()


class GaussianTail(Kernel):
    """
    ``x -> P(|N(0, scale**2)| >= |x|) / 2`` on each side, i.e. the mean over
    ``Y ~ N(0, scale**2)`` of ``1_[0, Y](x)``.
    """

    def __init__(self, scale):
        self.scale = torch.as_tensor(scale, dtype=torch.float64)

    def __call__(self, x: Tensor) -> Tensor:
        return torch.special.ndtr(-x.abs() / self.scale[..., None])

    def antiderivative(self, x: Tensor) -> Tensor:
        s = self.scale[..., None]
        # G vanishes in float64 well before z = 40; scale may be ~0 at t = 0
        z = (x.abs() / s).clamp(max=40.0)
        # G(z) = z * (1 - Phi(z)) - phi(z) has G' = 1 - Phi
        g = z * torch.special.ndtr(-z) - torch.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        g0 = -1.0 / math.sqrt(2 * math.pi)
        return torch.sign(x) * s * (g - g0)


KernelLike = Union[Kernel, Tensor, Callable[[Tensor], Tensor]]


def as_kernel(f: KernelLike) -> Union[Kernel, Tensor]:
    if isinstance(f, (Kernel, Tensor)):
        return f
    if callable(f):
        return FunctionKernel(f)
    raise ParameterError(f'expected a kernel, a tensor of cell values or a callable, got {type(f)}')


@dataclass(frozen=True, eq=False)
class _LatticeMeasure:
    alpha: float
    h: float
    first_cell: int
    draws: Tensor
    cell_mass: float

    @property
    def cells(self) -> int:
        return self.draws.shape[-1]

    @property
    def lo(self) -> float:
        return self.first_cell * self.h

    @property
    def hi(self) -> float:
        return (self.first_cell + self.cells) * self.h

    @property
    def half_width(self) -> float:
        return -self.lo

    @property
    def edges(self) -> Tensor:
        return (self.first_cell + torch.arange(self.cells + 1, dtype=torch.float64)) * self.h

    @property
    def midpoints(self) -> Tensor:
        return (self.first_cell + 0.5 + torch.arange(self.cells, dtype=torch.float64)) * self.h

    def cumulative(self) -> Tensor:
        zero = torch.zeros(self.draws.shape[:-1] + (1,), dtype=torch.float64)
        return torch.cat([zero, self.draws.cumsum(dim=-1)], dim=-1)

    def _cell_position(self, x: Tensor, fn_name: str) -> Tuple[Tensor, Tensor]:
        pos = (x - self.lo) / self.h
        if bool((pos < 0).any()) or bool((pos > self.cells).any()):
            raise TruncationError(
                f'{fn_name}: points in [{x.min().item():.4g}, {x.max().item():.4g}] leave the measure '
                f'domain [{self.lo:.4g}, {self.hi:.4g}]')
        k = pos.floor().long().clamp(max=self.cells - 1)
        return k, pos - k.to(torch.float64)

    def primitive(self, x: Tensor) -> Tensor:
        """``F(x) = M([lo, x])`` with the mass of each cell spread uniformly over it."""
        x = torch.as_tensor(x, dtype=torch.float64)
        scalar = x.dim() == 0
        if scalar:
            x = x[None]
        k, frac = self._cell_position(x, 'primitive')
        out = _gather_last(self.cumulative(), k) + frac * _gather_last(self.draws, k)
        return out[..., 0] if scalar else out

    def levy_motion(self, y) -> Tensor:
        """
        The two-sided stable Levy motion realized by the measure:
        ``X(y) = M([0, y])`` for ``y >= 0`` and ``M([y, 0])`` for ``y < 0``, so
        that ``X(y)`` is the integral of the indicator kernel ``1_[0, y]``.
        """
        y = torch.as_tensor(y, dtype=torch.float64)
        f0 = self.primitive(torch.zeros((), dtype=torch.float64))
        if y.dim() > 0:
            f0 = f0[..., None]
        return torch.sign(y) * (self.primitive(y) - f0)

    def occupation_integral(self, path: RealPath) -> Tensor:
        """
        ``int l_Y(t, x) M(dx)`` for every grid time ``t`` of ``path``.

        By the occupation formula this is ``int_0^t rho(Y_s) ds`` with ``rho``
        the cell density of the measure; on each linear segment of the path
        this is the segment duration times the average of ``rho`` over the
        range of the segment.
        """
        y = path.values
        y0, y1 = y[..., :-1], y[..., 1:]
        a, b = torch.minimum(y0, y1), torch.maximum(y0, y1)
        ka, fa = self._cell_position(a, 'occupation_integral')
        kb, fb = self._cell_position(b, 'occupation_integral')
        draws, cum = self.draws, self.cumulative()
        da, db = _gather_last(draws, ka), _gather_last(draws, kb)
        same = ka == kb
        # M([a, b]) split into the two partial end cells and the full cells between
        inner = _gather_last(cum, kb) - _gather_last(cum, (ka + 1).clamp(max=self.cells))
        spread = da * (1.0 - fa) + db * fb + torch.where(same, torch.zeros_like(inner), inner)
        width = b - a
        mean_density = torch.where(
            same | (width == 0), da / self.h, spread / torch.where(width == 0, torch.ones_like(width), width))
        seg = path.dt * mean_density
        zero = torch.zeros(seg.shape[:-1] + (1,), dtype=torch.float64)
        return torch.cat([zero, seg.cumsum(dim=-1)], dim=-1)

    def to_csv(self, stream: IO[str]) -> None:
        write_csv(stream, self.first_cell + torch.arange(self.cells), self.draws, 'cell')


@dataclass(frozen=True, eq=False)
class MeasureGrid1D(_LatticeMeasure):
    """
    SaS random measure with Lebesgue control on the lattice ``hZ``: cell
    ``[jh, (j + 1)h]`` for ``j = first_cell, ...`` carries an independent
    SaS(h**(1/alpha)) draw. The domain is ``[-L, L]`` rounded out to whole cells.
    """

    @classmethod
    def sample(cls, alpha: float, h: float, half_width: float, stream: RandomStream,
               batch_shape=()) -> 'MeasureGrid1D':
        check_alpha('MeasureGrid1D', alpha)
        check_positive('MeasureGrid1D', 'h', h)
        check_positive('MeasureGrid1D', 'half_width', half_width)
        half = max(1, math.ceil(half_width / h - 1e-9))
        size = (batch_shape,) if isinstance(batch_shape, int) else tuple(batch_shape)
        draws = sample_sas(StableParams(alpha, h ** (1.0 / alpha)), size + (2 * half,), stream)
        return cls(alpha, h, -half, draws, h)


@dataclass(frozen=True, eq=False)
class ProductMeasureGrid(_LatticeMeasure):
    """
    SaS random measure on ``Omega' x R`` with control ``P' x Lebesgue``,
    ``P'`` approximated by ``copies`` equally weighted sample paths: the cell
    ``(i, j)`` carries an SaS((h / copies)**(1/alpha)) draw. Draws have shape
    ``batch + (copies, cells)``.
    """
    copies: int = 1

    @classmethod
    def sample(cls, alpha: float, h: float, half_width: float, copies: int, stream: RandomStream,
               batch_shape=()) -> 'ProductMeasureGrid':
        check_alpha('ProductMeasureGrid', alpha)
        check_positive('ProductMeasureGrid', 'h', h)
        check_positive('ProductMeasureGrid', 'half_width', half_width)
        if copies < 1:
            raise ParameterError(f'ProductMeasureGrid: expected at least one copy, got {copies}')
        half = max(1, math.ceil(half_width / h - 1e-9))
        size = (batch_shape,) if isinstance(batch_shape, int) else tuple(batch_shape)
        mass = h / copies
        draws = sample_sas(StableParams(alpha, mass ** (1.0 / alpha)), size + (copies, 2 * half), stream)
        return cls(alpha, h, -half, draws, mass, copies)


def _check_truncation(fn_name: str, kernel: Kernel, measure: _LatticeMeasure, inside: Tensor) -> None:
    outside = kernel.outside_mass(measure.lo, measure.hi, measure.h, measure.alpha)
    total = inside + outside
    share = torch.where(total > 0, outside / torch.where(total > 0, total, torch.ones_like(total)),
                        torch.zeros_like(total))
    if bool((share > TRUNCATION_BUDGET).any()):
        raise TruncationError(
            f'{fn_name}: {share.max().item():.3g} of ||f||^alpha lies outside the measure domain '
            f'[{measure.lo:.4g}, {measure.hi:.4g}] (budget {TRUNCATION_BUDGET})')


def _integrate(fn_name: str, f: KernelLike, measure: _LatticeMeasure) -> Tensor:
    f = as_kernel(f)
    alpha, h = measure.alpha, measure.h
    if isinstance(f, Tensor):
        if f.shape[-1] != measure.cells:
            raise ParameterError(
                f'{fn_name}: expected {measure.cells} cell values, got a tensor of shape {tuple(f.shape)}')
        return (f.to(torch.float64) * measure.draws).sum(dim=-1)
    if isinstance(f, Indicator):
        inside = abs(f.weight) ** alpha * (f.hi.clamp(measure.lo, measure.hi) - f.lo.clamp(measure.lo, measure.hi))
        _check_truncation(fn_name, f, measure, inside)
        ends = torch.stack([f.lo.clamp(measure.lo, measure.hi), f.hi.clamp(measure.lo, measure.hi)], dim=-1)
        prim = measure.primitive(ends)
        return f.weight * (prim[..., 1] - prim[..., 0])
    averages = f.cell_integrals(measure.edges) / h
    if not bool(torch.isfinite(averages).all()):
        raise NumericError(f'{fn_name}: the integrand has non-finite cell integrals')
    _check_truncation(fn_name, f, measure, (averages.abs().pow(alpha) * h).sum(dim=-1))
    return (averages * measure.draws).sum(dim=-1)


def stable_integral(f: KernelLike, grid: MeasureGrid1D) -> Tensor:
    """
    ``int f dM`` on a :class:`MeasureGrid1D`: ``sum_j fbar_j * draw_j`` where
    ``fbar_j`` is the cell average of ``f`` (exact for kernels with an
    antiderivative, the midpoint value otherwise, the given values for a
    tensor of per-cell values). In law this is SaS with scale
    ``(sum_j |fbar_j|**alpha h)**(1/alpha)``.

    Raises :class:`TruncationError` when more than ``1e-3`` of
    ``||f||_alpha**alpha`` falls outside the grid's domain.
    """
    return _integrate('stable_integral', f, grid)


def product_integral(kernel: KernelLike, grid: ProductMeasureGrid) -> Tensor:
    """
    ``int kernel(omega', x) M_1(d omega', dx)``; the kernel's last batch
    dimension indexes the copies (or broadcasts over them).
    """
    if isinstance(kernel, Tensor) and kernel.dim() < 2:
        raise ParameterError('product_integral: expected cell values of shape (..., copies, cells)')
    return _integrate('product_integral', kernel, grid).sum(dim=-1)


@dataclass(frozen=True, eq=False)
class ScenerySignedMeasure:
    """
    The signed measure with density ``h**(-1 + 1/alpha) * eta(k)`` on
    ``(hk, h(k + 1)]``.
    """
    scenery: SceneryField
    h: float

    def __post_init__(self):
        check_positive('ScenerySignedMeasure', 'h', self.h)

    @property
    def alpha(self) -> float:
        return self.scenery.alpha


def _cell_range(f, h: float, support: Optional[Tuple[float, float]], fn_name: str) -> Tuple[int, int]:
    if support is None and isinstance(f, Kernel):
        support = f.support()
    if support is None:
        raise ParameterError(f'{fn_name}: the integrand has unbounded support; pass support=(lo, hi)')
    return math.floor(support[0] / h), max(math.ceil(support[1] / h), math.floor(support[0] / h) + 1)


def mu_h_functional(mu: ScenerySignedMeasure, f: KernelLike,
                    support: Optional[Tuple[float, float]] = None) -> Tensor:
    """``mu_h[f] = sum_k eta(k) h**(-1 + 1/alpha) int_{hk}^{h(k+1)} f``."""
    f = as_kernel(f)
    if isinstance(f, Tensor):
        raise ParameterError('mu_h_functional: expected a kernel or a callable, not cell values')
    k0, k1 = _cell_range(f, mu.h, support, 'mu_h_functional')
    edges = torch.arange(k0, k1 + 1, dtype=torch.float64) * mu.h
    integrals = f.cell_integrals(edges)
    if not bool(torch.isfinite(integrals).all()):
        raise NumericError('mu_h_functional: the integrand has non-finite cell integrals')
    eta = mu.scenery.window(k0, k1)
    return mu.h ** (-1.0 + 1.0 / mu.alpha) * (integrals * eta).sum(dim=-1)


@dataclass(frozen=True)
class DiagonalConvergenceReport:
    hs: Tuple[float, ...]
    thetas: Tuple[float, ...]
    distances: Tuple[float, ...]
    replicates: int

    @property
    def final_distance(self) -> float:
        return self.distances[-1]

    @property
    def decreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.distances, self.distances[1:]))

    def to_dict(self) -> dict:
        return {
            'hs': list(self.hs),
            'thetas': list(self.thetas),
            'distances': list(self.distances),
            'final_distance': self.final_distance,
            'decreasing': self.decreasing,
            'replicates': self.replicates,
        }


def verify_diagonal_convergence(fs: Sequence[KernelLike], f: KernelLike, alpha: float, hs: Sequence[float],
                                replicates: int, stream: RandomStream, thetas=None,
                                kind: Union[SceneryKind, str] = SceneryKind.EXACT_STABLE,
                                support: Optional[Tuple[float, float]] = None,
                                chunk: int = 1024) -> DiagonalConvergenceReport:
    """
    Compares the law of ``mu_{h_n}[f_n]`` with the law of ``int f dM`` through
    their empirical characteristic functions and reports the sup-distance
    over ``thetas`` for every ``n``.

    Convergence requires ``h_n -> 0`` and ``f_n -> f`` in L^1 on compacts and
    in L^alpha norm; the tail condition needed when ``alpha < 1`` is not
    checked and remains the caller's responsibility.
    """
    if len(fs) != len(hs):
        raise ParameterError('verify_diagonal_convergence: expected one h_n per f_n')
    check_alpha('verify_diagonal_convergence', alpha)
    thetas = torch.linspace(-3.0, 3.0, 25, dtype=torch.float64) if thetas is None \
        else torch.as_tensor(thetas, dtype=torch.float64)
    f = as_kernel(f)

    ref_support = support if support is not None else (f.support() if isinstance(f, Kernel) else None)
    if ref_support is None:
        raise ParameterError('verify_diagonal_convergence: pass support=(lo, hi) for kernels without one')
    h_ref = min(hs)
    half_width = max(abs(ref_support[0]), abs(ref_support[1])) + h_ref
    reference: List[Tensor] = []
    for c, start in enumerate(range(0, replicates, chunk)):
        size = min(chunk, replicates - start)
        grid = MeasureGrid1D.sample(alpha, h_ref, half_width, stream.child('reference', c), batch_shape=(size,))
        reference.append(stable_integral(f, grid))
    reference_ecf = ecf(torch.cat(reference), thetas)

    distances = []
    for i, (f_n, h_n) in enumerate(zip(fs, hs)):
        f_n = as_kernel(f_n)
        k0, k1 = _cell_range(f_n, h_n, support, 'verify_diagonal_convergence')
        edges = torch.arange(k0, k1 + 1, dtype=torch.float64) * h_n
        integrals = f_n.cell_integrals(edges)
        eta = sample_scenery_law(kind, alpha, (replicates, k1 - k0), stream.child('scenery', i))
        samples = h_n ** (-1.0 + 1.0 / alpha) * (eta * integrals).sum(dim=-1)
        distances.append(ecf_distance(ecf(samples, thetas), reference_ecf))
    return DiagonalConvergenceReport(tuple(float(h) for h in hs), tuple(thetas.tolist()),
                                     tuple(distances), replicates)
