# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import argparse
import dataclasses
import glob
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import torch

from .acceptance import override_replicates, resolve_checks, run_check
from .config import ExperimentConfig, apply_overrides, config_hash, load_config
from .ensemble import ensemble_map
from .errors import ParameterError, RwrtError
from .limits import DriverSpec, LimitSpec, simulate_limit
from .measures import MeasureGrid1D
from .paths import RealPath, RewardPath, write_csv, write_path_csv
from .recursion import RecursionWord, build_recursion, check_pp_conditions, compose_hurst
from .scenery import SceneryField, rant_check, rwrs, rwrt_indicator, schema
from .stats import cov_matrix, estimate_hurst, mean_stderr
from .time_change import extract_bm_minus, extract_bm_times
from .walks import CollectingSpec, gen_walk

log = logging.getLogger(__name__)

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs',
                              'acceptance.yaml')

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_NUMERIC = 3

SIMULATE_MODELS = ('walk', 'rwrs', 'rwrt', 'schema', 'limit', 'grid')


def _write_json(path: str, data: Dict[str, Any]) -> None:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, sort_keys=True, indent=2)
        f.write('\n')


def _provenance(config: ExperimentConfig) -> Dict[str, Any]:
    return {'seed': config.seed, 'config_hash': config_hash(config)}


def _verdict(config: ExperimentConfig, name: str, passed: bool, details: Dict[str, Any]) -> Dict[str, Any]:
    return dict(check=name, passed=bool(passed), details=details, **_provenance(config))


def _simulate(config: ExperimentConfig, model: str):
    m, sizes = config.model, config.sizes
    stream = config.stream.child('simulate:' + model)
    spec = m.collecting_spec()
    if model == 'walk':
        return gen_walk(spec, sizes.n, stream, batch_shape=(config.replicates,))
    if model in ('rwrs', 'rwrt'):
        site = 'vertex' if model == 'rwrs' else 'edge'
        collect = rwrs if model == 'rwrs' else rwrt_indicator

        def one(s):
            walk = gen_walk(spec, sizes.n, s.child('walk'))
            return collect(SceneryField(m.alpha, m.scenery, site, s.child('scenery')), walk).values

        return RewardPath(ensemble_map(one)(stream, config.replicates))
    if model == 'schema':
        def one(s):
            return schema(m.schema_mode, m.alpha, spec, sizes.n, sizes.c_n, config.times, s, kind=m.scenery,
                          reward=m.reward).values

        values = ensemble_map(one)(stream, config.replicates)
        return RealPath(config.times[1] - config.times[0], values)
    if model == 'limit':
        limit = LimitSpec(m.flavor, m.kernel, m.alpha, m.driver(sizes.steps_per_unit), copies=sizes.copies,
                          cells=sizes.cells)
        return simulate_limit(limit, config.times, stream, config.replicates)
    h = 8.0 / sizes.cells
    return MeasureGrid1D.sample(m.alpha, h, 4.0, stream, batch_shape=(config.replicates,))


def _with_replicates(config: ExperimentConfig, args, section: str, field: str) -> ExperimentConfig:
    if args.replicates is None:
        return config
    part = dataclasses.replace(getattr(config, section), **{field: args.replicates})
    return dataclasses.replace(config, **{section: part})


def cmd_simulate(config: ExperimentConfig, args) -> int:
    result = _simulate(config, args.model)
    path = os.path.join(config.output, f'{args.model}.csv')
    os.makedirs(config.output, exist_ok=True)
    with open(path, 'w', newline='') as f:
        if isinstance(result, MeasureGrid1D):
            result.to_csv(f)
        else:
            write_path_csv(f, result)
    log.info('wrote %s', path)
    _write_json(os.path.join(config.output, f'{args.model}.json'),
                dict(model=args.model, replicates=config.replicates, **_provenance(config)))
    return EXIT_PASS


def cmd_verify(config: ExperimentConfig, args) -> int:
    names = resolve_checks(config, args.check)
    config = override_replicates(config, names, args.replicates)
    verdicts = [run_check(name, config) for name in names]
    for v in verdicts:
        _write_json(os.path.join(config.output, 'verdicts', f"{v['check']}.json"), v)
    summary = dict(checks={v['check']: v['passed'] for v in verdicts},
                   passed=all(v['passed'] for v in verdicts), **_provenance(config))
    _write_json(os.path.join(config.output, 'verify.json'), summary)
    for v in verdicts:
        print(f"{v['check']:<24} {'pass' if v['passed'] else 'FAIL'}")
    return EXIT_PASS if summary['passed'] else EXIT_FAIL


def cmd_rant(config: ExperimentConfig, args) -> int:
    config = _with_replicates(config, args, 'rant', 'paths')
    rant = config.rant
    stream = config.stream.child('rant')
    walks = gen_walk(CollectingSpec.simple(), rant.n, stream.child('walks'), batch_shape=(rant.paths,))
    scenery = SceneryField(config.model.alpha, config.model.scenery, 'edge', stream.child('scenery'))
    reports = [rant_check(scenery, walks, p, rant.tolerance) for p in rant.p]
    verdict = _verdict(config, 'rant', all(r.status != 'fail' for r in reports),
                       {'reports': [r.to_dict() for r in reports]})
    _write_json(os.path.join(config.output, 'verdicts', 'rant.json'), verdict)
    for r in reports:
        print(f'p={r.p} {r.status} max_deviation={r.max_deviation:.3e}')
    return EXIT_PASS if verdict['passed'] else EXIT_FAIL


def cmd_recurse(config: ExperimentConfig, args) -> int:
    config = _with_replicates(config, args, 'recurse', 'replicates')
    rec = config.recurse
    word = RecursionWord.parse(rec.word)
    times = torch.arange(rec.steps + 1, dtype=torch.float64) / rec.steps
    levels = build_recursion(word, DriverSpec.fbm(rec.hurst), config.model.alpha, times, rec.copies,
                             config.sizes.cells)
    stream = config.stream.child('recurse')
    reports: List[Dict[str, Any]] = []
    for i, state in enumerate(levels):
        target = compose_hurst(state.word, rec.hurst, state.alpha)
        conditions = check_pp_conditions(state, rec.replicates, stream.child('conditions', i))
        hurst = estimate_hurst(state.sample(stream.child('hurst', i), max(rec.replicates, 100)))
        reports.append({'word': str(state.word), 'hurst_target': target, 'hurst': hurst.to_dict(),
                        'conditions': conditions.to_dict()})
        log.info('level %d (%s): target H %.4f, estimate %.4f +- %.4f', i, state.word, target,
                 hurst.estimate, hurst.stderr)
    passed = all(r['conditions']['passed'] for r in reports)
    _write_json(os.path.join(config.output, 'verdicts', 'recurse.json'),
                _verdict(config, 'recurse', passed, {'levels': reports}))
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_extract(config: ExperimentConfig, args) -> int:
    ex = config.extract
    stream = config.stream.child('extract')
    minus = extract_bm_minus(ex.hurst, ex.levels, config.replicates, stream.child('minus'), horizon=ex.horizon)
    times = extract_bm_times(ex.hurst, ex.levels, ex.copies, config.replicates, stream.child('times'),
                             horizon=ex.horizon)
    details = {}
    os.makedirs(config.output, exist_ok=True)
    for name, ensemble in (('minus', minus), ('times', times)):
        total = ensemble.values.sum(dim=-1)
        mean_square, stderr = mean_stderr(total * total) if total.numel() > 1 else (float('nan'), float('nan'))
        details[name] = {
            'levels': list(ensemble.levels),
            'kept': ensemble.values.shape[0],
            'dropped': ensemble.dropped,
            'drop_rate': ensemble.drop_rate,
            'dropped_copies': ensemble.dropped_copies,
            'max_level_error': ensemble.max_level_error,
            'covariance': cov_matrix(ensemble.values, ensemble.levels).to_dict()
            if ensemble.values.shape[0] > 1 else None,
            'mean_square_sum': mean_square,
            'mean_square_sum_stderr': stderr,
        }
        with open(os.path.join(config.output, f'extract_{name}.csv'), 'w', newline='') as f:
            write_csv(f, torch.tensor(ensemble.levels, dtype=torch.float64), ensemble.values, 's')
    # the extraction is a report, not a pass/fail check
    _write_json(os.path.join(config.output, 'verdicts', 'extract.json'),
                _verdict(config, 'extract', True, details))
    return EXIT_PASS


def cmd_report(config: ExperimentConfig, args) -> int:
    if args.replicates is not None:
        raise ParameterError('report: --replicates does not apply when aggregating verdicts')
    paths = sorted(glob.glob(os.path.join(config.output, 'verdicts', '*.json')))
    if not paths:
        raise ParameterError(f'report: no verdicts under {os.path.join(config.output, "verdicts")}')
    verdicts = {}
    for path in paths:
        with open(path) as f:
            v = json.load(f)
        verdicts[v['check']] = {'passed': v['passed'], 'seed': v['seed'], 'config_hash': v['config_hash']}
    summary = dict(verdicts=verdicts, passed=all(v['passed'] for v in verdicts.values()), **_provenance(config))
    _write_json(os.path.join(config.output, 'summary.json'), summary)
    print(f"{sum(v['passed'] for v in verdicts.values())}/{len(verdicts)} verdicts passed")
    return EXIT_PASS if summary['passed'] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rwrt', description='Random walks at random times: simulation and '
                                                              'acceptance checks.')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=DEFAULT_CONFIG, help='experiment YAML (default: acceptance config)')
    common.add_argument('--seed', type=int, default=None, help='override the master seed')
    common.add_argument('--replicates', type=int, default=None, help='replicate count: simulate and extract paths, rant paths, '
                        'recurse replicates, or the replicates of the selected verify checks')
    common.add_argument('--out', default=None, help='override the output directory')
    common.add_argument('--verbose', '-v', action='store_true', help='log progress')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='write simulated paths as CSV')
    p.add_argument('model', choices=SIMULATE_MODELS)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser('verify', parents=[common], help='run acceptance checks')
    p.add_argument('--check', action='append', default=None, help='run only this check (repeatable)')
    p.set_defaults(func=cmd_verify)
    sub.add_parser('rant', parents=[common], help='p-th variation identities').set_defaults(func=cmd_rant)
    sub.add_parser('recurse', parents=[common], help='recursive construction reports').set_defaults(func=cmd_recurse)
    sub.add_parser('extract', parents=[common], help='Brownian motions by time change').set_defaults(func=cmd_extract)
    sub.add_parser('report', parents=[common], help='aggregate verdicts').set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    logging.captureWarnings(True)
    try:
        config = apply_overrides(load_config(args.config), seed=args.seed, replicates=args.replicates,
                                 output=args.out)
        return args.func(config, args)
    except RwrtError as e:
        log.error('%s: %s', type(e).__name__, e)
        return e.exit_code
    except (MemoryError, ArithmeticError) as e:
        log.error('%s: %s', type(e).__name__, e)
        return EXIT_NUMERIC


if __name__ == '__main__':
    sys.exit(main())
