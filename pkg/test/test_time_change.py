# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math

import torch
from scipy import stats as scipy_stats
from torch.testing._internal.common_utils import TestCase, run_tests

from common_utils import stream
from rwrt import ParameterError, RealPath
from rwrt.experimental import (
    CONVENTION_FACTOR, brownian_miss_probability, default_horizon, extract_bm_minus, extract_bm_times,
    hitting_time, hitting_times,
)
from rwrt.verify import mean_stderr


class TestHittingTimes(TestCase):
    def _path(self):
        return RealPath(1.0, torch.tensor([0.0, 1.0, 0.5, 2.0], dtype=torch.float64))

    def test_linear_crossings(self):
        taus = hitting_times(self._path(), [0.5, 1.5, 3.0])
        self.assertEqual(taus.taus[:2], torch.tensor([0.5, 2.0 + 1.0 / 1.5], dtype=torch.float64))
        self.assertTrue(math.isnan(taus.taus[2].item()))
        self.assertEqual(taus.reached, torch.tensor([True, True, False]))
        at = taus.values_at_taus()
        self.assertEqual(at[:2], torch.tensor([0.5, 1.5], dtype=torch.float64))
        self.assertTrue(math.isnan(at[2].item()))

    def test_level_on_a_node(self):
        self.assertEqual(hitting_time(self._path(), 1.0), 1.0)
        self.assertEqual(hitting_time(self._path(), 2.0), 3.0)

    def test_batched(self):
        path = RealPath(0.5, torch.tensor([[0.0, 1.0, 0.5, 2.0], [0.0, 2.0, 0.0, 0.0]], dtype=torch.float64))
        taus = hitting_times(path, [0.5, 1.5])
        self.assertEqual(taus.taus, torch.tensor([[0.25, 1.0 + 0.5 / 1.5], [0.125, 0.375]], dtype=torch.float64))

    def test_invalid(self):
        with self.assertRaisesRegex(ParameterError, 'positive'):
            hitting_times(self._path(), [0.0, 1.0])
        with self.assertRaisesRegex(ParameterError, 'single path'):
            hitting_time(RealPath(1.0, torch.zeros(2, 3, dtype=torch.float64)), 1.0)


class TestMissProbability(TestCase):
    def test_continuous_monitoring(self):
        self.assertEqual(brownian_miss_probability(1.0, 64.0), 2 * scipy_stats.norm.cdf(0.125) - 1)

    def test_grid_correction_increases_misses(self):
        self.assertGreater(brownian_miss_probability(1.0, 64.0, dt=1 / 64), brownian_miss_probability(1.0, 64.0))

    def test_default_horizon(self):
        self.assertEqual(default_horizon(0.5), 64.0)
        self.assertEqual(default_horizon(0.3), 256.0)


class TestExtraction(TestCase):
    def test_minus(self):
        with self.assertWarnsRegex(RuntimeWarning, 'dropped'):
            ensemble = extract_bm_minus(0.5, [0.5, 1.0], 400, stream(0), horizon=16.0, steps_per_unit=16,
                                        cells=128, chunk=100)
        self.assertEqual(ensemble.levels, (0.5, 1.0))
        self.assertEqual(ensemble.values.shape[1], 2)
        self.assertEqual(ensemble.values.shape[0] + ensemble.dropped, 400)
        self.assertLess(ensemble.max_level_error, 1e-9)
        self.assertEqual(ensemble.convention_factor, CONVENTION_FACTOR)
        expected_drop = brownian_miss_probability(1.0, 16.0, dt=1 / 16)
        self.assertEqual(ensemble.drop_rate, expected_drop, atol=0.1, rtol=0)
        # Brownian motion with covariance 2 min(s, t)
        v = ensemble.values
        self.assertEqual(v[:, 1].var().item(), 2.0, atol=0.6, rtol=0)
        self.assertEqual((v[:, 0] * v[:, 1]).mean().item(), 1.0, atol=0.5, rtol=0)

    def test_times(self):
        ensemble = extract_bm_times(0.5, [1.0, 2.0], 8, 400, stream(1), horizon=16.0, steps_per_unit=16, cells=64)
        self.assertEqual(ensemble.values.shape[0] + ensemble.dropped, 400)
        self.assertEqual(ensemble.values.shape[1], 2)
        self.assertGreaterEqual(ensemble.dropped_copies, 0)
        self.assertLess(ensemble.max_level_error, 1e-9)
        self.assertEqual(ensemble.horizon, 16.0)
        x1, x2 = ensemble.values[:, 0], ensemble.values[:, 1]
        # E(X_s + X_t)**2 = 2 (3s + t) and Var X_t = 2t
        for samples, target in (((x1 + x2) ** 2, 10.0), (x1 ** 2, 2.0), (x2 ** 2, 4.0)):
            mean, stderr = mean_stderr(samples)
            self.assertLessEqual(abs(mean - target), 4 * stderr)

    def test_invalid_levels(self):
        with self.assertRaisesRegex(ParameterError, 'increasing positive levels'):
            extract_bm_minus(0.5, [1.0, 0.5], 10, stream())
        with self.assertRaisesRegex(ParameterError, 'increasing positive levels'):
            extract_bm_times(0.5, [], 2, 10, stream())
        with self.assertRaisesRegex(ParameterError, 'copy'):
            extract_bm_times(0.5, [1.0], 0, 10, stream())
        with self.assertRaisesRegex(ParameterError, 'Hurst'):
            extract_bm_minus(1.5, [1.0], 10, stream())


if __name__ == '__main__':
    run_tests()
