# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import dataclasses
import inspect
import json
import logging
import math
import random
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import torch
from scipy import integrate
from scipy import stats as scipy_stats

from .config import ExperimentConfig, config_hash
from .ensemble import ensemble_map
from .errors import ConfigError, ParameterError, error_context
from .limits import DriverSpec, Flavor, KernelKind, LimitSpec, localtime_scaling_check, simulate_limit
from .local_time import Bins, local_time
from .measures import Indicator, MeasureGrid1D, stable_integral
from .paths import LatticePath, RealPath
from .recursion import RecursionState, RecursionWord, Symbol, compose_hurst, recurse_step
from .scenery import SceneryField, relative_deviation, rant_check, rwrs, rwrt_indicator, rwrt_signed, schema
from .stable import StableParams, sample_sas
from .stats import cov_matrix, ecf, ecf_distance, ecf_zscore, estimate_hurst, ks_test, mean_stderr
from .streams import RandomStream
from .time_change import brownian_miss_probability, extract_bm_minus, extract_bm_times
from .walks import CollectingSpec, gen_walk

log = logging.getLogger(__name__)

# name -> check(config, stream, **params) -> details dict with a 'passed' entry
acceptance_checks: Dict[str, Callable[..., Dict[str, Any]]] = {}


def register_check(name: str, registry: Optional[Dict[str, Callable]] = None):
    def check_decorator(f):
        nonlocal registry
        if registry is None:
            registry = acceptance_checks
        if name in registry:
            raise RuntimeError(f'register_check: a check named {name!r} is already registered')
        registry[name] = f
        return f
    return check_decorator


def _max_cov_zscore(values: torch.Tensor, times: Sequence[float], target: torch.Tensor) -> Dict[str, Any]:
    report = cov_matrix(values, times)
    matrix, stderr = report.as_tensors()
    z = ((matrix - target).abs() / stderr.clamp(min=1e-12)).max().item()
    return {'covariance': report.to_dict(), 'target': target.tolist(), 'max_zscore': z}


@register_check('dual_definition')
def check_dual_definition(config: ExperimentConfig, stream: RandomStream, pairs: int = 1000, n: int = 10000,
                          tolerance: float = 1e-9) -> Dict[str, Any]:
    """The alternating edge-sign rule and ``S(W(n))`` agree on random walk/scenery pairs."""
    walks = gen_walk(CollectingSpec.simple(), n, stream.child('walks'), batch_shape=(pairs,))
    worst = 0.0
    for i in range(pairs):
        scenery = SceneryField(2.0, 'gaussian', 'edge', stream.child('scenery', i), block_size=1024)
        signed = rwrt_signed(scenery, walks[i]).values
        direct = rwrt_indicator(scenery, walks[i]).values
        worst = max(worst, relative_deviation(signed, direct))
    return {'pairs': pairs, 'n': n, 'max_deviation': worst, 'tolerance': tolerance, 'passed': worst < tolerance}


@register_check('rant')
def check_rant(config: ExperimentConfig, stream: RandomStream) -> Dict[str, Any]:
    """Per-path identity between the p-th variation and a walk process in the centered scenery."""
    rant = config.rant
    walks = gen_walk(CollectingSpec.simple(), rant.n, stream.child('walks'), batch_shape=(rant.paths,))
    scenery = SceneryField(2.0, 'gaussian', 'edge', stream.child('scenery'))
    reports = [rant_check(scenery, walks, p, rant.tolerance) for p in rant.p]
    return {'reports': [r.to_dict() for r in reports], 'passed': all(r.passed for r in reports)}


@register_check('stable_integral_law')
def check_stable_integral_law(config: ExperimentConfig, stream: RandomStream,
                              alphas: Sequence[float] = (1.2, 1.7, 2.0), samples: int = 10000,
                              h: float = 1.0 / 64, threshold: float = 0.01) -> Dict[str, Any]:
    """Grid integrals of ``1_[0,1] + 0.5 1_[1,3]`` against SaS draws of scale ``||f||_alpha``."""
    results = []
    for i, alpha in enumerate(alphas):
        grid = MeasureGrid1D.sample(alpha, h, 4.0, stream.child('grid', i), batch_shape=(samples,))
        values = stable_integral(Indicator.between(0.0, 1.0), grid) \
            + stable_integral(Indicator.between(1.0, 3.0, 0.5), grid)
        norm = (1.0 + 2.0 * 0.5 ** alpha) ** (1.0 / alpha)
        direct = sample_sas(StableParams(alpha, norm), samples, stream.child('direct', i))
        ks = ks_test(values, direct)
        results.append({'alpha': alpha, 'scale': norm, 'ks': ks.to_dict(), 'passed': ks.pvalue > threshold})
    return {'laws': results, 'passed': all(r['passed'] for r in results)}


def _linear_occupation(path: RealPath, a: float, b: float) -> torch.Tensor:
    """Time the piecewise-linear path spends in ``[a, b]``, segment by segment."""
    y0, y1 = path.values[..., :-1], path.values[..., 1:]
    lo, hi = torch.minimum(y0, y1), torch.maximum(y0, y1)
    overlap = (torch.clamp(hi, max=b) - torch.clamp(lo, min=a)).clamp(min=0)
    flat = hi == lo
    inside = ((lo >= a) & (lo <= b)).to(torch.float64)
    share = torch.where(flat, inside, overlap / torch.where(flat, torch.ones_like(hi), hi - lo))
    return path.dt * share.sum(dim=-1)


@register_check('occupation_formula')
def check_occupation_formula(config: ExperimentConfig, stream: RandomStream,
                             hursts: Sequence[float] = (0.5, 0.75), paths: int = 4, steps: int = 1 << 14,
                             intervals: int = 20, bins: int = 1024, tolerance: float = 0.02,
                             min_share: float = 0.05) -> Dict[str, Any]:
    """
    Occupation times of random intervals against the integral of the binned
    local time. Every interval is compared: occupations of at least
    ``min_share * horizon`` within ``tolerance`` relative error, shorter ones
    within the absolute error ``tolerance * min_share * horizon``.
    """
    results = []
    for i, hurst in enumerate(hursts):
        path = DriverSpec.fbm(hurst).sample(1.0, stream.child('paths', i), batch_shape=(paths,), steps=steps)
        profile = local_time(path, Bins.for_values(path.values, bins))
        g = stream.child('intervals', i).generator()
        floor = min_share * path.horizon
        worst, worst_short, relative, absolute = 0.0, 0.0, 0, 0
        for p in range(paths):
            lo, hi = path.values[p].min().item(), path.values[p].max().item()
            ends = lo + (hi - lo) * torch.rand(intervals, 2, generator=g, dtype=torch.float64)
            for a, b in ends.sort(dim=-1).values.tolist():
                direct = _linear_occupation(path[p], a, b).item()
                error = abs(profile.occupation(a, b)[p].item() - direct)
                if direct >= floor:
                    worst = max(worst, error / direct)
                    relative += 1
                else:
                    worst_short = max(worst_short, error / floor)
                    absolute += 1
        results.append({'hurst': hurst, 'relative_intervals': relative, 'absolute_intervals': absolute,
                        'max_relative_error': worst, 'max_short_error': worst_short,
                        'passed': worst < tolerance and worst_short < tolerance})
    return {'drivers': results, 'tolerance': tolerance, 'passed': all(r['passed'] for r in results)}


def _discrete_rwrt_marginals(n: int, replicates: int, stream: RandomStream, chunk: int = 500) -> torch.Tensor:
    """``n**(-1/4) A(n t)`` at ``t = 1/2, 1`` for simple walks in independent Gaussian edge sceneries."""
    out = []
    for c, start in enumerate(range(0, replicates, chunk)):
        size = min(chunk, replicates - start)
        walks = gen_walk(CollectingSpec.simple(), n, stream.child('walks', c), batch_shape=(size,))
        nodes = LatticePath(walks.positions[:, [0, n // 2, n]])
        for i in range(size):
            scenery = SceneryField(2.0, 'gaussian', 'edge', stream.child('scenery', start + i), block_size=1024)
            out.append(rwrt_indicator(scenery, nodes[i]).values[1:])
    return torch.stack(out) * float(n) ** -0.25


@register_check('rwrt_fdd_limit')
def check_rwrt_fdd_limit(config: ExperimentConfig, stream: RandomStream,
                         ns: Sequence[int] = (1 << 8, 1 << 11, 1 << 14), replicates: int = 10000,
                         tolerance: float = 0.05) -> Dict[str, Any]:
    """Marginals of the rescaled RWRT against the simulated indicator stable motion at times 1/2 and 1."""
    thetas = torch.linspace(-3.0, 3.0, 25, dtype=torch.float64)
    spec = LimitSpec(Flavor.DELTA, KernelKind.INDICATOR, 2.0, DriverSpec.brownian(config.sizes.steps_per_unit),
                     cells=config.sizes.cells)
    limit = simulate_limit(spec, [0.0, 0.5, 1.0], stream.child('limit'), replicates).values[:, 1:]
    targets = [ecf(limit[:, j], thetas) for j in range(2)]
    distances = []
    for k, n in enumerate(ns):
        discrete = _discrete_rwrt_marginals(n, replicates, stream.child('discrete', k))
        distances.append(max(ecf_distance(ecf(discrete[:, j], thetas), targets[j]) for j in range(2)))
    # two independent ecfs of this size differ by a few 1/sqrt(replicates) at most
    slack = 3.0 / math.sqrt(replicates)
    improving = all(b <= a + slack for a, b in zip(distances, distances[1:]))
    return {'ns': list(ns), 'distances': distances, 'tolerance': tolerance, 'improving': improving,
            'passed': distances[-1] < tolerance and improving}


@register_check('hurst_exponents')
def check_hurst_exponents(config: ExperimentConfig, stream: RandomStream, paths: int = 1000, n: int = 1 << 12,
                          steps: int = 256, scales: int = 6, tolerance: float = 0.05) -> Dict[str, Any]:
    """Self-similarity of the indicator stable motion (H = 1/4) and of the RWRS (H = 3/4)."""
    spec = LimitSpec(Flavor.DELTA, KernelKind.INDICATOR, 2.0, DriverSpec.brownian(steps), cells=1024)
    times = torch.arange(steps + 1, dtype=torch.float64) / steps
    limit = simulate_limit(spec, times, stream.child('limit'), paths)
    delta = estimate_hurst(limit, scales=scales)

    walks = gen_walk(CollectingSpec.simple(), n, stream.child('walks'), batch_shape=(paths,))
    rewards = torch.stack([
        rwrs(SceneryField(2.0, 'gaussian', 'vertex', stream.child('scenery', i), block_size=1024), walks[i]).values
        for i in range(paths)])
    z = estimate_hurst(RealPath(1.0 / n, rewards), scales=scales)
    return {
        'delta': {'report': delta.to_dict(), 'target': spec.hurst},
        'rwrs': {'report': z.to_dict(), 'target': 0.75},
        'tolerance': tolerance,
        'passed': abs(delta.estimate - spec.hurst) <= tolerance and abs(z.estimate - 0.75) <= tolerance,
    }


def _reference_phi(symbol: Symbol, x: float, alpha: float) -> float:
    return 1.0 - x + x / alpha if symbol in (Symbol.PLUS, Symbol.STAR) else x / alpha


@register_check('recursion')
def check_recursion(config: ExperimentConfig, stream: RandomStream, replicates: int = 2000, copies: int = 256,
                    cells: int = 256, chunk: int = 16, words: int = 10000) -> Dict[str, Any]:
    """Covariance of the level-one (x) process built on Brownian motion, and exactness of compose_hurst."""
    times = torch.arange(6, dtype=torch.float64) / 5
    state = recurse_step(RecursionState.from_driver(DriverSpec.brownian(), 2.0, times), Symbol.TIMES,
                         copies, cells)
    values = torch.cat([state.sample(stream.child('chunk', c), min(chunk, replicates - start)).values
                        for c, start in enumerate(range(0, replicates, chunk))])[:, 1:]
    s, t = times[1:, None], times[None, 1:]
    target = math.sqrt(2.0 / math.pi) * (s.sqrt() + t.sqrt() - (t - s).abs().sqrt())
    covariance = _max_cov_zscore(values, times[1:].tolist(), target)

    rng = random.Random(stream.child('words').seed)
    symbols = list(Symbol)
    worst = 0.0
    for _ in range(words):
        word = RecursionWord(tuple(rng.choice(symbols) for _ in range(rng.randint(0, 8))))
        h0, alpha = rng.uniform(0.01, 0.99), rng.uniform(1.01, 2.0)
        expected = h0
        for symbol in word.symbols:
            expected = _reference_phi(symbol, expected, alpha)
        worst = max(worst, abs(compose_hurst(word, h0, alpha) - expected))
    return {
        'covariance': covariance,
        'hurst': state.hurst,
        'compose_hurst': {'words': words, 'max_deviation': worst},
        'passed': covariance['max_zscore'] <= 3.0 and worst == 0.0,
    }


def _lambda_indicator_scale(copies: int) -> float:
    """``int k**2`` for the average of ``copies`` indicators ``1_[0, B_1]``, averaged over the walks."""
    tail = scipy_stats.norm.sf
    sq, _ = integrate.quad(lambda x: tail(x) ** 2, 0.0, math.inf)
    mixed, _ = integrate.quad(lambda x: tail(x) * (1.0 - tail(x)), 0.0, math.inf)
    return 2.0 * (sq + mixed / copies)


@register_check('schema_limits')
def check_schema_limits(config: ExperimentConfig, stream: RandomStream, replicates: int = 10000,
                        copies: int = 64, n: int = 1 << 12, tolerance: float = 0.05) -> Dict[str, Any]:
    """Random reward schemas at t = 1: variance of the independent one, ecf of the single-scenery one."""
    spec = CollectingSpec.simple()

    def run(mode):
        def one(s):
            return schema(mode, 2.0, spec, n, copies, [0.0, 1.0], s, kind='gaussian').values[-1]
        return ensemble_map(one)(stream.child(mode), replicates)

    independent = run('independent')
    square = independent * independent
    variance, stderr = mean_stderr(square)
    target = 2.0 * math.sqrt(2.0 / math.pi)
    relative = abs(variance / target - 1.0)

    single = run('single-scenery')
    thetas = [0.5, 1.0, 1.5, 2.0]
    scale = _lambda_indicator_scale(copies)
    z = ecf_zscore(ecf(single, thetas), torch.exp(-scale * torch.tensor(thetas, dtype=torch.float64) ** 2))
    return {
        'independent': {'variance': variance, 'stderr': stderr, 'target': target, 'relative_error': relative},
        'single_scenery': {'thetas': thetas, 'kernel_norm': scale, 'max_zscore': z},
        'passed': relative <= tolerance and z <= 3.0,
    }


@register_check('time_change')
def check_time_change(config: ExperimentConfig, stream: RandomStream, replicates: int = 2000,
                      times_replicates: int = 1000, pair: Sequence[float] = (1.0, 2.0),
                      threshold: float = 0.01, horizon: Optional[float] = None, steps_per_unit: int = 64,
                      max_drop_rate: Optional[float] = None) -> Dict[str, Any]:
    """
    Brownian motions recovered by undoing the random time, for the process and
    for the kernel. ``horizon`` overrides ``extract.horizon``; with
    ``max_drop_rate`` the drop rates of both extractions are part of the verdict.
    """
    extract = config.extract
    levels = list(extract.levels)
    horizon = extract.horizon if horizon is None else horizon
    minus = extract_bm_minus(extract.hurst, levels, replicates, stream.child('minus'), horizon=horizon,
                             steps_per_unit=steps_per_unit)
    pair = [float(s) for s in pair]
    times = extract_bm_times(extract.hurst, pair, extract.copies, times_replicates, stream.child('times'),
                             horizon=horizon)
    drops = {'minus': minus.drop_rate, 'times': times.drop_rate, 'max_drop_rate': max_drop_rate,
             'horizon': minus.horizon}
    if extract.hurst == 0.5:
        drops['expected_minus'] = brownian_miss_probability(levels[-1], minus.horizon, dt=1.0 / steps_per_unit)
    drop_ok = max_drop_rate is None or max(minus.drop_rate, times.drop_rate) <= max_drop_rate
    if minus.values.shape[0] < 2 or times.values.shape[0] < 2:
        return {'drop_rates': drops, 'kept': [minus.values.shape[0], times.values.shape[0]], 'passed': False}

    lv = torch.tensor(levels, dtype=torch.float64)
    covariance = _max_cov_zscore(minus.values, levels, 2.0 * torch.minimum(lv[:, None], lv[None, :]))
    pvalues = [ks_test(minus.values[:, j] / math.sqrt(2.0 * s), 'norm').pvalue for j, s in enumerate(levels)]
    total = times.values.sum(dim=-1)
    mean, stderr = mean_stderr(total * total)
    target = 2.0 * (3.0 * pair[0] + pair[1])
    z = abs(mean - target) / max(stderr, 1e-12)
    return {
        'minus': {'covariance': covariance, 'ks_pvalues': pvalues, 'dropped': minus.dropped,
                  'max_level_error': minus.max_level_error},
        'times': {'levels': pair, 'mean_square_sum': mean, 'stderr': stderr, 'target': target, 'zscore': z,
                  'dropped_copies': times.dropped_copies},
        'drop_rates': drops,
        # Bonferroni over the levels
        'passed': (covariance['max_zscore'] <= 3.0 and min(pvalues) > threshold / len(levels) and z <= 3.0
                   and drop_ok),
    }


@register_check('localtime_scaling')
def check_localtime_scaling(config: ExperimentConfig, stream: RandomStream,
                            replicates: int = 2000, steps: int = 1024) -> Dict[str, Any]:
    """The local time scaling identity for (BM, c = 4) and (fBm 0.75, c = 2)."""
    cases = [(DriverSpec.brownian(), 4.0), (DriverSpec.fbm(0.75), 2.0)]
    reports = [localtime_scaling_check(driver, c, replicates, stream.child('case', i), steps=steps)
               for i, (driver, c) in enumerate(cases)]
    return {'reports': [r.to_dict() for r in reports], 'passed': all(r.passed for r in reports)}


@register_check('determinism')
def check_determinism(config: ExperimentConfig, stream: RandomStream,
                      checks: Sequence[str] = ('dual_definition', 'stable_integral_law'),
                      scale_down: bool = True) -> Dict[str, Any]:
    """Reruns other checks with the same seed and compares their JSON byte for byte."""
    small = {'dual_definition': {'pairs': 50, 'n': 2000}, 'stable_integral_law': {'samples': 2000}}
    identical = {}
    for name in checks:
        if name == 'determinism':
            raise ConfigError('check_determinism: cannot rerun itself')
        params = small.get(name, {}) if scale_down else {}
        first, second = (json.dumps(run_check(name, config, params), sort_keys=True) for _ in range(2))
        identical[name] = first == second
    return {'identical': identical, 'passed': all(identical.values())}


def resolve_checks(config: ExperimentConfig, names: Optional[Sequence[str]] = None) -> List[str]:
    """Names of the checks to run; validates names and parameters before anything runs."""
    selected = list(names) if names else [name for name, _ in config.checks] or list(acceptance_checks)
    for name in selected:
        if name not in acceptance_checks:
            raise ConfigError(f'unknown acceptance check {name!r}; known checks: {sorted(acceptance_checks)}')
        try:
            inspect.signature(acceptance_checks[name]).bind(config, None, **config.check_params(name))
        except TypeError as e:
            raise ConfigError(f'invalid parameters for check {name!r}: {e}') from e
    return selected


def override_replicates(config: ExperimentConfig, names: Sequence[str],
                        replicates: Optional[int]) -> ExperimentConfig:
    """
    Routes a replicate count to the selected checks: the ``replicates``
    parameter of every check that takes one, and ``rant.paths`` for ``rant``.
    """
    if replicates is None:
        return config
    takers = [name for name in names if 'replicates' in inspect.signature(acceptance_checks[name]).parameters]
    if not takers and 'rant' not in names:
        raise ParameterError(f'--replicates: none of the checks {list(names)} takes a replicate count')
    checks = dict(config.checks)
    for name in takers:
        checks[name] = tuple(sorted(dict(checks.get(name, ()), replicates=replicates).items()))
    changes: Dict[str, Any] = {'checks': tuple(sorted(checks.items()))}
    if 'rant' in names:
        changes['rant'] = dataclasses.replace(config.rant, paths=replicates)
    return dataclasses.replace(config, **changes)


def run_check(name: str, config: ExperimentConfig, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Runs one check on its own stream ``seed/check:<name>`` and wraps the details into a verdict."""
    check = acceptance_checks[name]
    params = config.check_params(name) if params is None else params
    start = time.perf_counter()
    log.info('running check %s', name)
    with error_context(lambda: f'while running acceptance check {name}'):
        details = check(config, config.stream.child('check:' + name), **params)
    log.info('check %s %s in %.1fs', name, 'passed' if details['passed'] else 'FAILED',
             time.perf_counter() - start)
    return {'check': name, 'passed': bool(details['passed']), 'seed': config.seed,
            'config_hash': config_hash(config), 'details': details}
