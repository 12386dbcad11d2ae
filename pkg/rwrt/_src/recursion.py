# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
import re
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Tuple

import torch
from torch import Tensor

from .errors import ParameterError, check_hurst
from .limits import DriverSpec
from .local_time import Bins, local_time
from .measures import MeasureGrid1D, ProductMeasureGrid
from .paths import RealPath, uniform_step
from .stats import mean_stderr
from .streams import RandomStream

# sampler(stream, count) -> (count, len(times)) paths of the current process
Sampler = Callable[[RandomStream, int], Tensor]

_CHUNK_VALUES = 1 << 23


class Symbol(Enum):
    PLUS = '+'
    MINUS = '-'
    STAR = '*'
    TIMES = 'x'

    @property
    def uses_local_time(self) -> bool:
        return self in (Symbol.PLUS, Symbol.STAR)

    @property
    def uses_product_measure(self) -> bool:
        return self in (Symbol.STAR, Symbol.TIMES)


_SYMBOL_ALIASES = {'+': Symbol.PLUS, 'plus': Symbol.PLUS, '-': Symbol.MINUS, 'minus': Symbol.MINUS,
                   '*': Symbol.STAR, 'star': Symbol.STAR, 'x': Symbol.TIMES, 'times': Symbol.TIMES}


@dataclass(frozen=True)
class RecursionWord:
    symbols: Tuple[Symbol, ...]

    @classmethod
    def parse(cls, text: str) -> 'RecursionWord':
        """Parses ``"x,x,*"``, ``"+ -"`` or ``"xx*"``; the empty string is the empty word."""
        text = text.strip()
        if not text:
            return cls(())
        tokens = [t for t in re.split(r'[,\s]+', text) if t]
        if len(tokens) == 1 and tokens[0].lower() not in _SYMBOL_ALIASES:
            tokens = list(tokens[0])
        symbols = []
        for token in tokens:
            symbol = _SYMBOL_ALIASES.get(token.lower())
            if symbol is None:
                raise ParameterError(f'RecursionWord.parse({text!r}): unknown symbol {token!r}, '
                                     f'expected one of + - * x')
            symbols.append(symbol)
        return cls(tuple(symbols))

    def __str__(self):
        return ','.join(s.value for s in self.symbols)

    def __len__(self):
        return len(self.symbols)


def _check_recursion_alpha(fn_name: str, alpha: float) -> None:
    if not (1.0 < alpha <= 2.0):
        raise ParameterError(f'{fn_name}: expected alpha in (1, 2], got {alpha}')


def phi(symbol, x: float, alpha: float) -> float:
    """``1 - x + x/alpha`` for ``+``/``*``, ``x/alpha`` for ``-``/``x``."""
    symbol = symbol if isinstance(symbol, Symbol) else _SYMBOL_ALIASES[str(symbol).lower()]
    check_hurst('phi', x)
    _check_recursion_alpha('phi', alpha)
    if symbol.uses_local_time:
        return 1.0 - x + x / alpha
    return x / alpha


def compose_hurst(word: RecursionWord, h0: float, alpha: float) -> float:
    """``phi_{v_n} o ... o phi_{v_1}(h0)``, applying the word left to right."""
    if isinstance(word, str):
        word = RecursionWord.parse(word)
    check_hurst('compose_hurst', h0)
    _check_recursion_alpha('compose_hurst', alpha)
    h = h0
    for symbol in word.symbols:
        h = phi(symbol, h, alpha)
    return h


@dataclass(frozen=True, eq=False)
class RecursionState:
    """
    A level of the recursive construction: i.i.d. paths of ``Y^v`` on the
    fixed grid ``times``, produced on demand by ``sampler``.
    """
    alpha: float
    hurst: float
    times: Tensor
    sampler: Sampler
    word: RecursionWord = RecursionWord(())

    def __post_init__(self):
        _check_recursion_alpha('RecursionState', self.alpha)
        check_hurst('RecursionState', self.hurst)

    @property
    def dt(self) -> float:
        return self.times[1].item() - self.times[0].item()

    def sample(self, stream: RandomStream, count: int) -> RealPath:
        return RealPath(self.dt, self.sampler(stream, count))

    @classmethod
    def from_driver(cls, driver: DriverSpec, alpha: float, times) -> 'RecursionState':
        """The starting level ``Y^{()}``: an fBm or stable Levy driver on ``times``."""
        times = torch.as_tensor(times, dtype=torch.float64)
        dt = uniform_step(times, 'RecursionState.from_driver')
        steps = times.numel() - 1

        def sampler(stream: RandomStream, count: int) -> Tensor:
            return driver.sample(steps * dt, stream, batch_shape=(count,), steps=steps).values

        return cls(alpha, driver.hurst_prime, times, sampler)


def _measure_resolution(y: Tensor, cells: int) -> Tuple[float, float]:
    sup = max(y.abs().max().item(), 1e-12)
    spread = y.max().item() - y.min().item()
    return (spread if spread > 0 else sup) / cells, 4.0 * sup


def _warn_degenerate(y: Tensor, symbol: Symbol) -> None:
    inc = y.diff(dim=-1)
    monotone = ((inc >= 0).all(dim=-1) | (inc <= 0).all(dim=-1)).to(torch.float64).mean().item()
    if monotone > 0.5:
        warnings.warn(
            f'recurse_step({symbol.value}): {monotone:.0%} of the previous paths are monotone, their '
            f'local times concentrate on the path range', RuntimeWarning)


def recurse_step(state: RecursionState, symbol, copies: int = 512, cells: int = 256) -> RecursionState:
    """
    One level of the construction. ``+`` and ``-`` integrate the local time
    or the indicator kernel of a single previous path against a fresh
    ``M_0``; ``*`` and ``x`` integrate the kernels of ``copies`` previous
    paths against a fresh product measure ``M_1``. The new Hurst index is
    ``phi(symbol, H, alpha)``.
    """
    if isinstance(symbol, str):
        symbol = RecursionWord.parse(symbol).symbols[0]
    if copies < 1:
        raise ParameterError(f'recurse_step: expected at least one copy, got {copies}')
    alpha, dt = state.alpha, state.dt
    inner = state.sampler
    width = 1 if not symbol.uses_product_measure else copies

    # the previous paths and the measure draws of one chunk stay below _CHUNK_VALUES
    per_chunk = max(1, _CHUNK_VALUES // (width * max(state.times.numel(), 8 * cells)))

    def sampler(stream: RandomStream, count: int) -> Tensor:
        if count > per_chunk:
            return torch.cat([sampler(stream.child('chunk', c), min(per_chunk, count - start))
                              for c, start in enumerate(range(0, count, per_chunk))])
        y = inner(stream.child('previous'), count * width).reshape(count, width, -1)
        if symbol.uses_local_time:
            _warn_degenerate(y, symbol)
        h, half_width = _measure_resolution(y, cells)
        if symbol.uses_product_measure:
            grid = ProductMeasureGrid.sample(alpha, h, half_width, copies, stream.child('measure'),
                                             batch_shape=(count,))
        else:
            grid = MeasureGrid1D.sample(alpha, h, half_width, stream.child('measure'), batch_shape=(count, 1))
        if symbol.uses_local_time:
            per_copy = grid.occupation_integral(RealPath(dt, y))
        else:
            per_copy = grid.levy_motion(y)
        return per_copy.sum(dim=1)

    word = RecursionWord(state.word.symbols + (symbol,))
    return RecursionState(alpha, phi(symbol, state.hurst, alpha), state.times, sampler, word)


def build_recursion(word: RecursionWord, driver: DriverSpec, alpha: float, times,
                    copies: int = 512, cells: int = 256) -> Tuple[RecursionState, ...]:
    """All levels of ``word`` starting from ``driver``, the driver level first."""
    state = RecursionState.from_driver(driver, alpha, times)
    levels = [state]
    for symbol in word.symbols:
        state = recurse_step(state, symbol, copies, cells)
        levels.append(state)
    return tuple(levels)


@dataclass(frozen=True)
class ConditionProxy:
    name: str
    values: Tuple[float, ...]
    stderr: Tuple[float, ...]
    stable: bool
    passed: bool
    soft: bool = False

    def to_dict(self) -> dict:
        return {'name': self.name, 'values': list(self.values), 'stderr': list(self.stderr),
                'stable': self.stable, 'passed': self.passed, 'soft': self.soft}


@dataclass(frozen=True)
class PPConditionReport:
    conditions: Tuple[ConditionProxy, ...]
    replicates: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions if not c.soft)

    def __getitem__(self, name: str) -> ConditionProxy:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {'conditions': [c.to_dict() for c in self.conditions], 'replicates': self.replicates,
                'passed': self.passed}


def _doubling_proxy(name: str, samples: Tensor, require_positive: bool = False) -> ConditionProxy:
    """Compares the means of the two halves of the samples; reports the first half and the whole."""
    half = samples.shape[0] // 2
    m1, s1 = mean_stderr(samples[:half])
    m2, s2 = mean_stderr(samples)
    finite = math.isfinite(m1) and math.isfinite(m2)
    # the second half is independent of the first
    m_rest, s_rest = mean_stderr(samples[half:])
    stable = finite and abs(m1 - m_rest) <= 3.0 * math.sqrt(s1 * s1 + s_rest * s_rest) + 1e-12
    passed = stable and (not require_positive or m2 > 3.0 * s2)
    return ConditionProxy(name, (m1, m2), (s1, s2), stable, passed)


def _relative_change(a: float, b: float) -> float:
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0:
        return math.inf
    return abs(b / a - 1.0)


def _kde_max(samples: Tensor, bandwidth: float, points: int = 512) -> float:
    if not bandwidth > 0:
        return math.inf
    grid = torch.linspace(samples.min().item() - 3 * bandwidth, samples.max().item() + 3 * bandwidth, points,
                          dtype=torch.float64)
    z = (grid[:, None] - samples[None, :]) / bandwidth
    density = torch.exp(-0.5 * z * z).mean(dim=1) / (bandwidth * math.sqrt(2 * math.pi))
    return density.max().item()


def check_pp_conditions(state: RecursionState, replicates: int, stream: RandomStream,
                        tolerance: float = 0.1, density_tolerance: float = 0.25) -> PPConditionReport:
    """
    Statistical proxies for the regularity conditions a random time process
    needs for the next level of the construction:

    * ``a``: ``E|Y_1|`` positive and stable when the replicates double,
    * ``b``: ``E int l(1, x)**2 dx`` stable when the bin width halves,
    * ``c``: the maximum of a Gaussian kernel density estimate of ``Y_1``
      stable when the bandwidth halves (soft: boundedness of a density
      cannot be decided from samples),
    * ``d``: ``E sup_t |Y_t|`` stable when the replicates double,

    plus the finite ``alpha``-moment proxy ``E|Y_1|**alpha``.
    """
    if replicates < 4:
        raise ParameterError(f'check_pp_conditions: expected at least 4 replicates, got {replicates}')
    paths = state.sample(stream.child('paths'), replicates)
    y = paths.values
    y1 = y[:, -1]
    conditions = [_doubling_proxy('a', y1.abs(), require_positive=True)]

    bins = Bins.for_values(y)
    fine = Bins.covering(y.min().item(), y.max().item(), bins.width / 2, origin=bins.lo)
    coarse_q = local_time(paths, bins).l2_norm_sq()
    fine_q = local_time(paths, fine).l2_norm_sq()
    (mc, sc), (mf, sf) = mean_stderr(coarse_q), mean_stderr(fine_q)
    stable_b = _relative_change(mc, mf) <= tolerance
    conditions.append(ConditionProxy('b', (mc, mf), (sc, sf), stable_b, stable_b))

    spread = y1.std().item()
    bandwidth = 1.06 * spread * replicates ** (-0.2)
    k1, k2 = _kde_max(y1, bandwidth), _kde_max(y1, bandwidth / 2)
    stable_c = _relative_change(k1, k2) <= density_tolerance
    conditions.append(ConditionProxy('c', (k1, k2), (0.0, 0.0), stable_c, stable_c, soft=True))

    conditions.append(_doubling_proxy('d', y.abs().amax(dim=-1)))
    conditions.append(_doubling_proxy('alpha_moment', y1.abs().pow(state.alpha)))
    return PPConditionReport(tuple(conditions), replicates)


def zero_state(alpha: float, times) -> RecursionState:
    """A degenerate level whose paths vanish identically; the proxies must flag it."""
    times = torch.as_tensor(times, dtype=torch.float64)

    def sampler(stream: RandomStream, count: int) -> Tensor:
        return torch.zeros(count, times.numel(), dtype=torch.float64)

    # the Hurst index of the zero process is meaningless; 1/2 keeps the state valid
    return RecursionState(alpha, 0.5, times, sampler)
