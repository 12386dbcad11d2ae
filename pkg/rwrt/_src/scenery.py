# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import torch
from torch import Tensor

from .errors import ParameterError, UnsupportedError, check_alpha
from .paths import LatticePath, RealPath, RewardPath, interpolate, uniform_step
from .stable import SceneryKind, sample_scenery_law, scenery_moment
from .streams import RandomStream
from .walks import CollectingSpec, gen_walk


class Site(Enum):
    EDGE = 'edge'
    VERTEX = 'vertex'


class SceneryField(object):
    """
    Lazily generated i.i.d. rewards ``eta(i)``, ``i`` in Z, attached to the
    vertices or to the edges of Z (edge ``e`` is the interval ``[e, e + 1]``).

    Values are produced in blocks of ``block_size`` sites; block ``b`` is drawn
    from ``stream.child('block', b)``, so ``value(i)`` depends only on the
    stream and on ``i``, never on the order of queries.

        >>> eta = SceneryField(2.0, 'gaussian', 'edge', RandomStream(7))
        >>> eta.values(torch.tensor([-3, 0, 10**9]))
    """

    def __init__(self, alpha: float, kind: Union[SceneryKind, str], site: Union[Site, str],
                 stream: RandomStream, block_size: int = 4096):
        check_alpha('SceneryField', alpha)
        self.alpha = alpha
        self.kind = SceneryKind(kind)
        self.site = Site(site)
        self.stream = stream
        self.block_size = block_size
        # validates the kind/alpha combination eagerly
        sample_scenery_law(self.kind, alpha, 1, stream.child('validate'))
        self._blocks: Dict[int, Tensor] = {}
        self._transform: Optional[Callable[[Tensor], Tensor]] = None
        self._moment_fn: Optional[Callable[[int], float]] = self._law_moment

    def __repr__(self):
        suffix = '' if self._transform is None else ', transformed'
        return (f'SceneryField(alpha={self.alpha}, kind={self.kind.value}, site={self.site.value}, '
                f'stream={self.stream.describe()}{suffix})')

    def _law_moment(self, p: int) -> float:
        return scenery_moment(self.kind, self.alpha, p)

    def _block(self, b: int) -> Tensor:
        block = self._blocks.get(b)
        if block is None:
            block = sample_scenery_law(self.kind, self.alpha, self.block_size, self.stream.child('block', b))
            self._blocks[b] = block
        return block

    def _apply(self, raw: Tensor) -> Tensor:
        return raw if self._transform is None else self._transform(raw)

    def window(self, lo: int, hi: int) -> Tensor:
        """Values of sites ``lo, ..., hi - 1`` in ascending order."""
        if hi <= lo:
            return torch.zeros(0, dtype=torch.float64)
        first, last = lo // self.block_size, (hi - 1) // self.block_size
        table = torch.cat([self._block(b) for b in range(first, last + 1)])
        start = lo - first * self.block_size
        return self._apply(table[start:start + (hi - lo)])

    def values(self, index) -> Tensor:
        """Values at an arbitrary (possibly sparse) integer index tensor."""
        index = torch.as_tensor(index, dtype=torch.int64)
        if index.numel() == 0:
            return torch.zeros(index.shape, dtype=torch.float64)
        blocks = torch.div(index, self.block_size, rounding_mode='floor')
        unique, inverse = torch.unique(blocks, return_inverse=True)
        table = torch.stack([self._block(b) for b in unique.tolist()])
        raw = table[inverse, index - blocks * self.block_size]
        return self._apply(raw)

    def value(self, i: int) -> float:
        return self.values(torch.tensor([i]))[0].item()

    def prefix(self, lo: int, hi: int) -> Tensor:
        """``P[k] = sum_{lo <= i < lo + k} eta(i)`` for ``k = 0..hi - lo``, summed in ascending order."""
        window = self.window(lo, hi)
        return torch.cat([torch.zeros(1, dtype=torch.float64), window.cumsum(0)])

    def transformed(self, fn: Callable[[Tensor], Tensor]) -> 'SceneryField':
        """A view with values ``fn(eta(i))``, sharing this field's blocks."""
        view = object.__new__(SceneryField)
        view.__dict__.update(self.__dict__)
        inner = self._transform
        view._transform = fn if inner is None else (lambda v: fn(inner(v)))
        view._moment_fn = None
        return view

    def moment(self, p: int) -> float:
        if self._moment_fn is None:
            raise UnsupportedError(f'{self!r}.moment({p}): transformed sceneries have no closed-form moments')
        return self._moment_fn(p)


def _check_site(fn_name: str, scenery: SceneryField, site: Site) -> None:
    if scenery.site is not site:
        raise ParameterError(
            f'{fn_name}: expected a {site.value}-indexed scenery, got a {scenery.site.value}-indexed one')


def _prepend_zero(x: Tensor) -> Tensor:
    return torch.cat([torch.zeros(x.shape[:-1] + (1,), dtype=x.dtype), x], dim=-1)


class EdgeSignState(object):
    """
    Signs ``sigma_e`` of the edges of Z; every edge starts at +1.
    """

    def __init__(self, signs: Optional[Dict[int, int]] = None):
        self._signs: Dict[int, int] = dict(signs or {})

    def sign(self, edge: int) -> int:
        return self._signs.get(edge, 1)

    def collect_and_flip(self, edges: Iterable[int], rewards: Sequence[float]) -> float:
        """Collects ``sum sigma_e * eta(e)`` over ``edges`` with the current signs, then reverses them."""
        edges = list(edges)
        total = 0.0
        for e, r in zip(edges, rewards):
            total += self.sign(e) * r
        for e in edges:
            self._signs[e] = -self.sign(e)
        return total

    def negative_edges(self) -> List[int]:
        return sorted(e for e, s in self._signs.items() if s < 0)

    @classmethod
    def from_counts(cls, edges: Tensor, counts: Tensor) -> 'EdgeSignState':
        odd = counts % 2 == 1
        return cls({e: -1 for e in edges[odd].tolist()})

    def __repr__(self):
        return f'EdgeSignState(negative_edges={self.negative_edges()})'


def _traversed_edges(positions: Tensor) -> Tuple[Tensor, Tensor]:
    """Edge list of a single path and the step (0-based) that traverses each edge."""
    a, b = positions[:-1], positions[1:]
    lo = torch.minimum(a, b)
    m = (b - a).abs()
    total = int(m.sum().item())
    step = torch.repeat_interleave(torch.arange(m.shape[0]), m)
    starts = m.cumsum(0) - m
    offset = torch.arange(total) - starts[step]
    return lo[step] + offset, step


def _rwrt_signed_vectorized(scenery: SceneryField, positions: Tensor) -> Tuple[Tensor, EdgeSignState]:
    n = positions.shape[0] - 1
    edges, step = _traversed_edges(positions)
    if edges.numel() == 0:
        return torch.zeros(n + 1, dtype=torch.float64), EdgeSignState()
    sorted_edges, order = torch.sort(edges, stable=True)
    idx = torch.arange(edges.numel())
    is_start = torch.ones_like(sorted_edges, dtype=torch.bool)
    is_start[1:] = sorted_edges[1:] != sorted_edges[:-1]
    start = torch.cummax(torch.where(is_start, idx, torch.zeros_like(idx)), dim=0).values
    # number of earlier traversals of the same edge
    rank = torch.empty_like(idx)
    rank[order] = idx - start
    sign = 1.0 - 2.0 * (rank % 2).to(torch.float64)

    lo = int(sorted_edges[0].item())
    table = scenery.window(lo, int(sorted_edges[-1].item()) + 1)
    contrib = sign * table[edges - lo]
    incr = torch.zeros(n, dtype=torch.float64).index_add_(0, step, contrib)
    unique, counts = torch.unique_consecutive(sorted_edges, return_counts=True)
    return _prepend_zero(incr.cumsum(0)), EdgeSignState.from_counts(unique, counts)


def _rwrt_signed_stepwise(scenery: SceneryField, positions: Tensor) -> Tuple[Tensor, EdgeSignState]:
    state = EdgeSignState()
    pos = positions.tolist()
    lo, hi = min(pos), max(pos)
    table = scenery.window(lo, hi).tolist()
    out = [0.0]
    for prev, cur in zip(pos[:-1], pos[1:]):
        edges = range(min(prev, cur), max(prev, cur))
        out.append(out[-1] + state.collect_and_flip(edges, [table[e - lo] for e in edges]))
    return torch.tensor(out, dtype=torch.float64), state


def rwrs(scenery: SceneryField, walk: LatticePath, collect: str = 'vertex') -> RewardPath:
    """
    Random walk in random scenery: cumulative rewards collected along ``walk``.

    ``collect`` selects what a step from ``x`` to ``y`` collects:

    * ``vertex``: ``eta(y)`` (the classic ``Z_n``; vertex scenery),
    * ``edge``: the rewards of every edge between ``x`` and ``y`` (edge scenery),
    * ``path``: the rewards of every vertex between ``x`` (exclusive) and ``y``
      (inclusive), and ``eta(y)`` when the walk stays put (vertex scenery).
    """
    pos = walk.positions
    a, b = pos[..., :-1], pos[..., 1:]
    if collect == 'vertex':
        _check_site('rwrs', scenery, Site.VERTEX)
        incr = scenery.values(b)
    elif collect == 'edge':
        _check_site('rwrs', scenery, Site.EDGE)
        lo, hi = int(pos.min().item()), int(pos.max().item())
        p = scenery.prefix(lo, hi)
        incr = p[torch.maximum(a, b) - lo] - p[torch.minimum(a, b) - lo]
    elif collect == 'path':
        _check_site('rwrs', scenery, Site.VERTEX)
        lo, hi = int(pos.min().item()), int(pos.max().item())
        q = scenery.prefix(lo, hi + 1)
        up = q[b + 1 - lo] - q[a + 1 - lo]
        down = q[a - lo] - q[b - lo]
        incr = torch.where(b > a, up, torch.where(b < a, down, scenery.values(b)))
    else:
        raise ParameterError(f"rwrs(collect={collect!r}): expected 'vertex', 'edge' or 'path'")
    return RewardPath(_prepend_zero(incr.cumsum(dim=-1)))


def rwrt_signed(scenery: SceneryField, walk: LatticePath, stepwise: bool = False,
                return_signs: bool = False):
    """
    Random walk at random time through the alternating edge-sign rule: a step
    collects ``sigma_e * eta(e)`` over the edges it crosses, then reverses the
    sign of each of them.

    The default evaluation counts earlier traversals of every edge at once;
    ``stepwise=True`` runs the rule literally through an :class:`EdgeSignState`.
    With ``return_signs=True`` the final sign state is returned as well (one
    state per path for batched walks).
    """
    _check_site('rwrt_signed', scenery, Site.EDGE)
    run = _rwrt_signed_stepwise if stepwise else _rwrt_signed_vectorized
    flat = walk.positions.reshape(-1, walk.positions.shape[-1])
    results = [run(scenery, row) for row in flat]
    values = torch.stack([r[0] for r in results]).reshape(walk.positions.shape)
    path = RewardPath(values)
    if not return_signs:
        return path
    states = [r[1] for r in results]
    return path, (states[0] if walk.positions.dim() == 1 else states)


def rwrt_indicator(scenery: SceneryField, walk: LatticePath) -> RewardPath:
    """
    ``A_n = S(W(n))`` where ``S(x)`` sums the rewards of the edges between 0
    and ``x`` (``0 <= e < x`` for ``x > 0``, ``x <= e < 0`` for ``x < 0``).
    """
    _check_site('rwrt_indicator', scenery, Site.EDGE)
    pos = walk.positions
    lo = min(0, int(pos.min().item()))
    hi = max(0, int(pos.max().item()))
    p = scenery.prefix(lo, hi)
    s = torch.sign(pos).to(torch.float64) * (p[pos - lo] - p[-lo])
    return RewardPath(s)


def pth_variation(rewards: RewardPath, p: int) -> RewardPath:
    """Running sum of ``(A_i - A_{i-1})**p``."""
    if not isinstance(p, int) or p < 1:
        raise ParameterError(f'pth_variation: expected a positive integer p, got {p}')
    if p == 1:
        return RewardPath(rewards.values.clone())
    incr = rewards.values.diff(dim=-1).pow(p)
    return RewardPath(_prepend_zero(incr.cumsum(dim=-1)))


def relative_deviation(a: Tensor, b: Tensor) -> float:
    """``max |a - b| / max(max |b|, 1)`` per path, maximized over the batch."""
    a = a.reshape(-1, a.shape[-1])
    b = b.reshape(-1, b.shape[-1])
    scale = b.abs().amax(dim=-1).clamp(min=1.0)
    return ((a - b).abs().amax(dim=-1) / scale).max().item()


@dataclass(frozen=True)
class RantReport:
    p: int
    status: str
    max_deviation: float
    tolerance: float
    paths: int
    steps: int

    @property
    def passed(self) -> bool:
        return self.status == 'pass'

    def to_dict(self) -> dict:
        return {
            'p': self.p,
            'status': self.status,
            'max_deviation': self.max_deviation,
            'tolerance': self.tolerance,
            'paths': self.paths,
            'steps': self.steps,
        }


def rant_check(scenery: SceneryField, walk: LatticePath, p: int, tolerance: float = 1e-9) -> RantReport:
    """
    Checks, path by path, that the ``p``-th variation of a random walk at
    random time is again a random walk process in the centered scenery
    ``zeta(e) = eta(e)**p - E[eta**p]``:

    * odd ``p``: ``V^(p)_n`` equals the RWRT in ``zeta``;
    * even ``p``: ``V^(p)_n - n E[eta**p]`` equals the RWRS that collects
      ``zeta`` over the edges crossed at each step.

    The identity is established for walks with unit steps; for other walks
    the deviation is still reported but the status is ``unverified``.
    """
    _check_site('rant_check', scenery, Site.EDGE)
    if not isinstance(p, int) or p < 1:
        raise ParameterError(f'rant_check: expected a positive integer p, got {p}')
    moment = scenery.moment(p)
    zeta = scenery.transformed(lambda v: v.pow(p) - moment)

    variation = pth_variation(rwrt_indicator(scenery, walk), p).values
    if p % 2 == 1:
        lhs = variation
        rhs = rwrt_indicator(zeta, walk).values
    else:
        n = walk.n
        lhs = variation - torch.arange(n + 1, dtype=torch.float64) * moment
        rhs = rwrs(zeta, walk, collect='edge').values
    deviation = relative_deviation(lhs, rhs)

    steps = walk.increments().abs()
    unit_steps = bool((steps == 1).all()) if p % 2 == 0 else bool((steps <= 1).all())
    if p == 1 or unit_steps:
        status = 'pass' if deviation < tolerance else 'fail'
    else:
        warnings.warn(
            f'rant_check(p={p}): the walk has steps longer than one edge; the identity is only '
            f'established for unit steps, reporting the deviation without a verdict', RuntimeWarning)
        status = 'unverified'
    paths = 1
    for s in walk.batch_shape:
        paths *= s
    return RantReport(p, status, deviation, tolerance, paths, walk.n)


class SchemaMode(Enum):
    INDEPENDENT = 'independent'
    SINGLE_SCENERY = 'single-scenery'


def schema_hurst(alpha: float, hurst_prime: float, reward: str) -> float:
    if reward == 'rwrt':
        return hurst_prime / alpha
    return 1.0 - hurst_prime + hurst_prime / alpha


def schema(mode: Union[SchemaMode, str], alpha: float, spec: CollectingSpec, n: int, copies: int,
           times, stream: RandomStream, kind: Union[SceneryKind, str] = SceneryKind.EXACT_STABLE,
           reward: str = 'rwrt') -> RealPath:
    """
    Alternating random reward schema: ``copies`` walks collect rewards, each
    rescaled by ``n**(-H)`` and interpolated at ``n t``, and the copies are
    summed with weight ``copies**(-1/alpha)`` (independent sceneries) or
    ``1 / copies`` (one scenery shared by all walks).

    ``reward='rwrt'`` uses ``A_n`` with ``H = H'/alpha``; ``reward='rwrs'``
    uses the vertex RWRS ``Z_n`` with ``H = 1 - H' + H'/alpha``.
    """
    mode = SchemaMode(mode)
    check_alpha('schema', alpha)
    if mode is SchemaMode.SINGLE_SCENERY and alpha <= 1.0:
        raise ParameterError(f'schema(mode=single-scenery, alpha={alpha}): a shared scenery requires alpha > 1')
    if reward not in ('rwrt', 'rwrs'):
        raise ParameterError(f"schema(reward={reward!r}): expected 'rwrt' or 'rwrs'")
    if copies < 1:
        raise ParameterError(f'schema: expected at least one copy, got {copies}')
    dt = uniform_step(times, 'schema')
    times = torch.as_tensor(times, dtype=torch.float64)
    site = Site.EDGE if reward == 'rwrt' else Site.VERTEX
    collect = rwrt_indicator if reward == 'rwrt' else rwrs
    hurst = schema_hurst(alpha, spec.hurst_prime, reward)

    walks = gen_walk(spec, n, stream.child('walks'), batch_shape=(copies,))
    if mode is SchemaMode.SINGLE_SCENERY:
        shared = SceneryField(alpha, kind, site, stream.child('scenery'), block_size=1024)
        rewards = collect(shared, walks).values
        norm = 1.0 / copies
    else:
        rewards = torch.stack([
            collect(SceneryField(alpha, kind, site, stream.child('scenery', i), block_size=1024), walks[i]).values
            for i in range(copies)
        ])
        norm = copies ** (-1.0 / alpha)
    values = interpolate(RewardPath(rewards), times * n)
    return RealPath(dt, norm * float(n) ** (-hurst) * values.sum(dim=0))
