# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import json

from torch.testing._internal.common_utils import (
    TestCase, run_tests, parametrize, instantiate_parametrized_tests, subtest,
)

from common_utils import write_config
from rwrt import ConfigError, ParameterError
from rwrt._src.cli import DEFAULT_CONFIG
from rwrt.verify import (
    ExperimentConfig, ModelConfig, RantConfig, apply_overrides, config_from_dict, config_hash, load_config,
)

SMALL = """\
schema_version: 1
seed: 3
replicates: 10
times: [0.0, 0.5, 1.0]
rant: {paths: 5, n: 200}
checks:
  dual_definition: {pairs: 20, n: 200}
"""


class TestLoadConfig(TestCase):
    def test_default_config(self):
        config = load_config(DEFAULT_CONFIG)
        self.assertEqual(config.schema_version, 1)
        self.assertEqual(config.rant.p, (1, 2, 3, 4))
        self.assertEqual(config.extract.levels, (0.5, 1.0, 1.5, 2.0))
        self.assertEqual(config.check_params('dual_definition'), {'pairs': 1000, 'n': 10000})
        self.assertEqual(config.check_params('determinism'), {})

    def test_small_config(self):
        config = load_config(write_config(SMALL))
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.times, (0.0, 0.5, 1.0))
        self.assertEqual(config.rant, RantConfig(paths=5, n=200))
        # sections that are not given keep their defaults
        self.assertEqual(config.model, ModelConfig())

    def test_duplicate_key(self):
        path = write_config('schema_version: 1\nseed: 1\nseed: 2\n')
        with self.assertRaisesRegex(ConfigError, "duplicate key 'seed'"):
            load_config(path)

    def test_missing_file(self):
        with self.assertRaisesRegex(ConfigError, 'cannot read'):
            load_config('/nonexistent/rwrt/config.yaml')

    def test_malformed_yaml(self):
        with self.assertRaisesRegex(ConfigError, 'cannot parse'):
            load_config(write_config('schema_version: [1\n'))


class TestConfigFromDict(TestCase):
    def test_missing_schema_version(self):
        with self.assertRaisesRegex(ConfigError, 'no schema_version'):
            config_from_dict({'seed': 1})

    def test_wrong_schema_version(self):
        with self.assertRaisesRegex(ConfigError, 'unsupported schema_version'):
            config_from_dict({'schema_version': 2})

    def test_not_a_mapping(self):
        with self.assertRaises(ConfigError):
            config_from_dict([1, 2])

    def test_unknown_top_level_key(self):
        with self.assertRaisesRegex(ConfigError, 'unknown configuration keys'):
            config_from_dict({'schema_version': 1, 'sede': 1})

    def test_unknown_section_key(self):
        with self.assertRaisesRegex(ConfigError, "section 'model'"):
            config_from_dict({'schema_version': 1, 'model': {'alpah': 1.5}})

    def test_single_scenery_needs_alpha_above_one(self):
        data = {'schema_version': 1, 'model': {'schema_mode': 'single-scenery', 'alpha': 0.5}}
        with self.assertRaises(ParameterError) as ctx:
            config_from_dict(data)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_lambda_needs_alpha_above_one(self):
        with self.assertRaises(ParameterError):
            config_from_dict({'schema_version': 1, 'model': {'flavor': 'lambda', 'alpha': 0.8}})

    def test_non_uniform_times(self):
        with self.assertRaises(ParameterError):
            config_from_dict({'schema_version': 1, 'times': [0.0, 0.5, 2.0]})

    @parametrize('checks', [subtest(['dual_definition', 'rant'], name='list'),
                            subtest({'dual_definition': None, 'rant': {}}, name='mapping')])
    def test_checks_list_or_mapping(self, checks):
        config = config_from_dict({'schema_version': 1, 'checks': checks})
        self.assertEqual([name for name, _ in config.checks], ['dual_definition', 'rant'])
        self.assertEqual(config.check_params('rant'), {})

    def test_to_dict_is_json(self):
        config = config_from_dict({'schema_version': 1, 'checks': {'dual_definition': {'pairs': 5}}})
        data = json.loads(json.dumps(config.to_dict()))
        self.assertEqual(data['checks'], {'dual_definition': {'pairs': 5}})
        self.assertEqual(data['rant']['p'], [1, 2, 3, 4])


class TestConfigHash(TestCase):
    def test_stable(self):
        a = load_config(write_config(SMALL))
        b = load_config(write_config(SMALL))
        self.assertEqual(config_hash(a), config_hash(b))
        self.assertEqual(len(config_hash(a)), 64)

    def test_output_does_not_enter(self):
        config = load_config(write_config(SMALL))
        self.assertEqual(config_hash(config), config_hash(apply_overrides(config, output='elsewhere')))

    def test_seed_enters(self):
        config = load_config(write_config(SMALL))
        self.assertNotEqual(config_hash(config), config_hash(apply_overrides(config, seed=4)))

    def test_overrides(self):
        config = apply_overrides(ExperimentConfig(), seed=9, replicates=7, output='o')
        self.assertEqual((config.seed, config.replicates, config.output), (9, 7, 'o'))
        self.assertEqual(apply_overrides(config), config)

    def test_override_validates(self):
        with self.assertRaises(ParameterError):
            apply_overrides(ExperimentConfig(), replicates=0)


instantiate_parametrized_tests(TestConfigFromDict)

if __name__ == '__main__':
    run_tests()
