# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import yaml

from .errors import ConfigError, ParameterError, RwrtError, check_alpha, check_hurst
from .limits import DriverSpec, Flavor, KernelKind
from .paths import uniform_step
from .recursion import RecursionWord
from .scenery import SchemaMode
from .stable import SceneryKind
from .streams import RandomStream
from .walks import CollectingSpec, WalkKind

SCHEMA_VERSION = 1

# Safely load fast C Yaml loader if it is available
try:
    from yaml import CSafeLoader as Loader
except ImportError:
    from yaml import SafeLoader as Loader  # type: ignore[misc]


# A custom loader for YAML that errors on duplicate keys.
# This doesn't happen by default: see https://github.com/yaml/pyyaml/issues/165
class YamlLoader(Loader):
    def construct_mapping(self, node, deep=False):  # type: ignore[no-untyped-def]
        keys = []
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)  # type: ignore[no-untyped-call]
            if key in keys:
                raise ConfigError(f'duplicate key {key!r} in the configuration, line {key_node.start_mark.line + 1}')
            keys.append(key)
        return super().construct_mapping(node, deep=deep)  # type: ignore[no-untyped-call]


@dataclass(frozen=True)
class ModelConfig:
    """Model selection: collecting walk, scenery law, stable index and limit flavor."""
    walk: str = 'simple'
    beta: Optional[float] = None
    hurst_prime: Optional[float] = None
    scenery: str = 'gaussian'
    alpha: float = 2.0
    flavor: str = 'delta'
    kernel: str = 'indicator'
    schema_mode: str = 'independent'
    reward: str = 'rwrt'

    def __post_init__(self):
        self.collecting_spec()
        SceneryKind(self.scenery)
        check_alpha('ModelConfig', self.alpha)
        flavor = Flavor(self.flavor)
        KernelKind(self.kernel)
        mode = SchemaMode(self.schema_mode)
        if self.reward not in ('rwrt', 'rwrs'):
            raise ParameterError(f"ModelConfig: expected reward 'rwrt' or 'rwrs', got {self.reward!r}")
        if mode is SchemaMode.SINGLE_SCENERY and self.alpha <= 1.0:
            raise ParameterError(f'ModelConfig(schema_mode=single-scenery, alpha={self.alpha}): '
                                 f'a shared scenery requires alpha > 1')
        if flavor is Flavor.LAMBDA and self.alpha <= 1.0:
            raise ParameterError(f'ModelConfig(flavor=lambda, alpha={self.alpha}): lambda requires alpha in (1, 2]')

    def collecting_spec(self) -> CollectingSpec:
        return CollectingSpec(WalkKind(self.walk), beta=self.beta, hurst=self.hurst_prime)

    def driver(self, steps_per_unit: int) -> DriverSpec:
        """The continuous random time process the collecting walk scales to."""
        kind = WalkKind(self.walk)
        if kind is WalkKind.BETA_STABLE:
            return DriverSpec.stable_levy(self.beta)
        if kind is WalkKind.GAUSSIAN_DEPENDENT:
            return DriverSpec.fbm(self.hurst_prime, steps_per_unit)
        return DriverSpec.brownian(steps_per_unit)


@dataclass(frozen=True)
class SizeConfig:
    n: int = 4096
    c_n: int = 64
    copies: int = 256
    steps_per_unit: int = 1024
    cells: int = 256

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ParameterError(f'SizeConfig: expected {f.name} >= 1, got {getattr(self, f.name)}')


@dataclass(frozen=True)
class RantConfig:
    p: Tuple[int, ...] = (1, 2, 3, 4)
    paths: int = 100
    n: int = 10000
    tolerance: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, 'p', tuple(self.p))
        if not self.p or any(not isinstance(p, int) or p < 1 for p in self.p):
            raise ParameterError(f'RantConfig: expected positive integer powers, got {list(self.p)}')
        if self.paths < 1 or self.n < 1 or not self.tolerance > 0:
            raise ParameterError('RantConfig: paths, n and tolerance must be positive')


@dataclass(frozen=True)
class RecurseConfig:
    word: str = 'x'
    hurst: float = 0.5
    replicates: int = 400
    copies: int = 256
    steps: int = 256

    def __post_init__(self):
        RecursionWord.parse(self.word)
        check_hurst('RecurseConfig', self.hurst)
        if self.replicates < 4 or self.copies < 1 or self.steps < 2:
            raise ParameterError('RecurseConfig: expected replicates >= 4, copies >= 1 and steps >= 2')


@dataclass(frozen=True)
class ExtractConfig:
    hurst: float = 0.5
    levels: Tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    copies: int = 64
    horizon: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'levels', tuple(float(s) for s in self.levels))
        check_hurst('ExtractConfig', self.hurst)
        if not self.levels or any(s <= 0 for s in self.levels) or list(self.levels) != sorted(set(self.levels)):
            raise ParameterError(f'ExtractConfig: expected increasing positive levels, got {list(self.levels)}')
        if self.copies < 1:
            raise ParameterError(f'ExtractConfig: expected copies >= 1, got {self.copies}')


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A complete experiment. ``checks`` maps acceptance check names to their
    parameter overrides; an empty mapping selects every registered check.
    """
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    replicates: int = 1000
    output: str = 'out'
    times: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    model: ModelConfig = field(default_factory=ModelConfig)
    sizes: SizeConfig = field(default_factory=SizeConfig)
    rant: RantConfig = field(default_factory=RantConfig)
    recurse: RecurseConfig = field(default_factory=RecurseConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    checks: Tuple[Tuple[str, Tuple[Tuple[str, Any], ...]], ...] = ()

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f'ExperimentConfig: unsupported schema_version {self.schema_version}, '
                              f'expected {SCHEMA_VERSION}')
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ParameterError(f'ExperimentConfig: expected a non-negative integer seed, got {self.seed!r}')
        if self.replicates < 1:
            raise ParameterError(f'ExperimentConfig: expected replicates >= 1, got {self.replicates}')
        times = tuple(float(t) for t in self.times)
        uniform_step(times, 'ExperimentConfig')
        object.__setattr__(self, 'times', times)

    @property
    def stream(self) -> RandomStream:
        return RandomStream(self.seed)

    def check_params(self, name: str) -> Dict[str, Any]:
        return dict(dict(self.checks).get(name, ()))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out['checks'] = {name: dict(params) for name, params in self.checks}
        return json.loads(json.dumps(out))


_SECTIONS = {'model': ModelConfig, 'sizes': SizeConfig, 'rant': RantConfig, 'recurse': RecurseConfig,
             'extract': ExtractConfig}


def _freeze(value: Any) -> Any:
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f'expected a mapping at the top level of the configuration, got {type(data).__name__}')
    if 'schema_version' not in data:
        raise ConfigError('the configuration has no schema_version')
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f'unknown configuration keys {unknown}')
    kwargs = dict(data)
    try:
        for name, cls in _SECTIONS.items():
            if name in kwargs:
                section = kwargs[name] or {}
                fields = {f.name for f in dataclasses.fields(cls)}
                extra = sorted(set(section) - fields)
                if extra:
                    raise ConfigError(f'unknown keys {extra} in section {name!r}')
                kwargs[name] = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in section.items()})
        if 'times' in kwargs:
            kwargs['times'] = tuple(kwargs['times'])
        if 'checks' in kwargs:
            checks = kwargs['checks'] or {}
            if isinstance(checks, list):
                checks = {name: {} for name in checks}
            kwargs['checks'] = tuple(sorted((name, _freeze(params or {})) for name, params in checks.items()))
        return ExperimentConfig(**kwargs)
    except RwrtError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid configuration: {e}') from e


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = yaml.load(f, Loader=YamlLoader)
    except OSError as e:
        raise ConfigError(f'cannot read configuration {path!r}: {e.strerror}') from e
    except yaml.YAMLError as e:
        raise ConfigError(f'cannot parse configuration {path!r}: {e}') from e
    return config_from_dict(data)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON of ``config``; the output directory does not enter it."""
    data = config.to_dict()
    data.pop('output')
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, replicates: Optional[int] = None,
                    output: Optional[str] = None) -> ExperimentConfig:
    changes: Dict[str, Any] = {}
    if seed is not None:
        changes['seed'] = seed
    if replicates is not None:
        changes['replicates'] = replicates
    if output is not None:
        changes['output'] = output
    return dataclasses.replace(config, **changes)
