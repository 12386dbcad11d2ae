# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import io
import math

import torch
from torch.testing._internal.common_utils import (
    TestCase, run_tests, parametrize, instantiate_parametrized_tests, subtest,
)

from common_utils import stream
from rwrt import (
    Bins, DriverKind, DriverSpec, LimitSpec, ParameterError, RealPath, gen_fbm_path, hurst_target, local_time,
    local_time_profiles, localtime_scaling_check, normalized_copy_sum, simulate_limit,
)
from rwrt.verify import estimate_hurst, ks_test

# int_0^inf P(Z > x)^2 dx for Z ~ N(0, 1)
GAUSSIAN_TAIL_L2 = (math.sqrt(2.0) - 1.0) / (2.0 * math.sqrt(math.pi))


class TestBins(TestCase):
    def test_covering(self):
        self.assertEqual(Bins.covering(0.3, 1.3, 0.5), Bins(0.0, 0.5, 3))
        self.assertEqual(Bins.covering(0.3, 1.3, 0.5, origin=0.25), Bins(0.25, 0.5, 3))
        self.assertEqual(Bins(0.0, 0.5, 3).hi, 1.5)

    def test_for_constant_values(self):
        bins = Bins.for_values(torch.zeros(5, dtype=torch.float64))
        self.assertEqual(bins.count, 1)
        self.assertEqual(bins.width, 1.0 / 256)

    def test_extended_to(self):
        bins = Bins(0.0, 0.25, 2).extended_to(-0.1, 1.0)
        self.assertEqual(bins, Bins(-0.25, 0.25, 6))

    def test_invalid(self):
        with self.assertRaises(ParameterError):
            Bins(0.0, 0.0, 3)
        with self.assertRaises(ParameterError):
            Bins(0.0, 1.0, 0)


class TestLocalTime(TestCase):
    def test_tent_path(self):
        path = RealPath(1.0, torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64))
        profile = local_time(path, Bins(0.0, 0.25, 4))
        self.assertEqual(profile.values, torch.full((4,), 2.0, dtype=torch.float64), atol=0, rtol=0)
        self.assertEqual(profile.occupation(0.25, 0.75).item(), 1.0)
        self.assertEqual(profile.l2_norm_sq().item(), 4.0)
        self.assertEqual(profile(torch.tensor([0.5, 1.5], dtype=torch.float64)),
                         torch.tensor([2.0, 0.0], dtype=torch.float64))
        self.assertEqual(profile.horizon, 2.0)

    def test_mass_is_horizon(self):
        times = torch.linspace(0, 2, 2049, dtype=torch.float64)
        path = gen_fbm_path(0.6, times, stream(0), batch_shape=(3,))
        profile = local_time(path)
        self.assertEqual(profile.values.shape, (3, profile.bins.count))
        self.assertEqual(profile.mass(), torch.full((3,), 2.0, dtype=torch.float64), atol=1e-10, rtol=0)

    def test_bins_are_extended(self):
        path = RealPath(1.0, torch.tensor([0.0, 1.0], dtype=torch.float64))
        with self.assertWarnsRegex(RuntimeWarning, 'leaves the bins'):
            profile = local_time(path, Bins(0.0, 0.25, 2))
        self.assertEqual(profile.bins, Bins(0.0, 0.25, 5))
        self.assertEqual(profile.mass().item(), 1.0)

    def test_profiles(self):
        times = torch.linspace(0, 1, 257, dtype=torch.float64)
        path = gen_fbm_path(0.5, times, stream(1), batch_shape=(2,))
        bins = Bins.for_values(path.values)
        profiles = local_time_profiles(path, [0.0, 0.5, 1.0], bins)
        self.assertEqual(profiles.values.shape, (2, 3, bins.count))
        self.assertEqual(profiles.mass(), torch.tensor([[0.0, 0.5, 1.0]] * 2, dtype=torch.float64),
                         atol=1e-10, rtol=0)
        self.assertEqual(profiles.values[:, -1], local_time(path, bins).values, atol=1e-10, rtol=0)
        with self.assertRaisesRegex(ParameterError, 'increasing'):
            local_time_profiles(path, [0.5, 0.25], bins)

    def test_csv(self):
        profile = local_time(RealPath(1.0, torch.tensor([0.0, 1.0], dtype=torch.float64)), Bins(0.0, 0.5, 2))
        f = io.StringIO()
        profile.to_csv(f)
        self.assertEqual(f.getvalue(), 'x,value\n0.25,1.0\n0.75,1.0\n')


class TestDrivers(TestCase):
    def test_specs(self):
        self.assertEqual(DriverSpec.brownian().hurst_prime, 0.5)
        self.assertEqual(DriverSpec.stable_levy(1.6).hurst_prime, 1 / 1.6)
        self.assertIs(DriverSpec('fbm', hurst=0.3).kind, DriverKind.FBM)
        with self.assertRaisesRegex(ParameterError, 'Hurst'):
            DriverSpec(DriverKind.FBM)
        with self.assertRaisesRegex(ParameterError, 'beta'):
            DriverSpec.stable_levy(1.0)
        with self.assertRaises(ParameterError):
            DriverSpec.fbm(0.5, steps_per_unit=0)

    def test_sample(self):
        path = DriverSpec.brownian(64).sample(2.0, stream(2), batch_shape=(3,))
        self.assertEqual(path.values.shape, (3, 129))
        self.assertEqual(path.dt, 1.0 / 64)
        coarse = DriverSpec.brownian(64).sample(2.0, stream(2), steps=8)
        self.assertEqual(coarse.values.shape, (9,))
        self.assertEqual(coarse.dt, 0.25)
        with self.assertRaises(ParameterError):
            DriverSpec.brownian().sample(0.0, stream())

    def test_stable_levy_sample(self):
        path = DriverSpec.stable_levy(1.5, steps_per_unit=256).sample(1.0, stream(3), batch_shape=(2,))
        self.assertEqual(path.values.shape, (2, 257))
        scaled = path.values * 256 ** (1 / 1.5)
        self.assertEqual(scaled, scaled.round(), atol=1e-9, rtol=0)


class TestLimitSpec(TestCase):
    def test_hurst_target(self):
        self.assertEqual(hurst_target(2.0, 0.5, 'indicator'), 0.25)
        self.assertEqual(hurst_target(2.0, 0.5, 'localtime'), 0.75)
        self.assertEqual(LimitSpec('gamma', 'localtime', 1.5, DriverSpec.fbm(0.6)).hurst, 1.0 - 0.6 + 0.4)
        with self.assertRaises(ValueError):
            hurst_target(2.0, 0.5, 'kernel')

    def test_invalid(self):
        with self.assertRaisesRegex(ParameterError, 'lambda'):
            LimitSpec('lambda', 'indicator', 1.0, DriverSpec.brownian())
        with self.assertRaisesRegex(ParameterError, 'exact_mean_kernel'):
            LimitSpec('gamma', 'indicator', 1.5, DriverSpec.brownian(), exact_mean_kernel=True)
        with self.assertRaisesRegex(ParameterError, 'exact_mean_kernel'):
            LimitSpec('lambda', 'indicator', 1.5, DriverSpec.stable_levy(1.5), exact_mean_kernel=True)
        with self.assertRaises(ParameterError):
            LimitSpec('delta', 'indicator', 1.5, DriverSpec.brownian(), domain_factor=0.5)


class TestSimulateLimit(TestCase):
    times = (0.0, 0.5, 1.0)

    @parametrize('flavor', ['delta', 'gamma', 'lambda'])
    @parametrize('kernel', ['indicator', 'localtime'])
    def test_shapes(self, flavor, kernel):
        spec = LimitSpec(flavor, kernel, 1.5, DriverSpec.brownian(64), copies=8, cells=64)
        path = simulate_limit(spec, self.times, stream(4), replicates=5)
        self.assertEqual(path.values.shape, (5, 3))
        self.assertEqual(path.dt, 0.5)
        self.assertEqual(path.values[:, 0], torch.zeros(5, dtype=torch.float64), atol=0, rtol=0)
        self.assertTrue(bool(torch.isfinite(path.values).all()))
        single = simulate_limit(spec, self.times, stream(4))
        self.assertEqual(single.values.shape, (3,))

    def test_reproducible(self):
        spec = LimitSpec('gamma', 'indicator', 1.2, DriverSpec.fbm(0.7, 64), copies=4, cells=32)
        a = simulate_limit(spec, self.times, stream(5), replicates=3)
        b = simulate_limit(spec, self.times, stream(5), replicates=3)
        self.assertEqual(a.values, b.values, atol=0, rtol=0)

    def test_invalid_grid(self):
        spec = LimitSpec('delta', 'indicator', 1.5, DriverSpec.brownian(64))
        with self.assertRaises(ParameterError):
            simulate_limit(spec, (0.0, 0.3, 0.5), stream())
        with self.assertRaises(ParameterError):
            simulate_limit(spec, self.times, stream(), replicates=0)

    @parametrize('flavor', ['delta', 'gamma', 'lambda'])
    @parametrize('kernel', ['indicator', 'localtime'])
    def test_hurst_exponent(self, flavor, kernel):
        spec = LimitSpec(flavor, kernel, 2.0, DriverSpec.brownian(256), copies=8, cells=256)
        times = torch.arange(9, dtype=torch.float64) / 8
        path = simulate_limit(spec, times, stream(10, flavor, kernel), replicates=1500)
        report = estimate_hurst(path, scales=4)
        self.assertEqual(report.estimate, spec.hurst, atol=0.07, rtol=0)

    @parametrize('flavor', ['delta', 'gamma'])
    @parametrize('kernel', ['indicator', 'localtime'])
    def test_stationary_increments(self, flavor, kernel):
        spec = LimitSpec(flavor, kernel, 1.5, DriverSpec.brownian(256), copies=8, cells=256)
        values = simulate_limit(spec, self.times, stream(11, flavor, kernel), replicates=2000).values
        # X(1) - X(1/2) and X(1/2) from disjoint replicates
        increments = values[:1000, 2] - values[:1000, 1]
        self.assertGreater(ks_test(increments, values[1000:, 1]).pvalue, 1e-3)

    def test_delta_indicator_variance(self):
        # X(y) has variance 2|y|, so Var X(B_1) = 2 E|B_1|
        spec = LimitSpec('delta', 'indicator', 2.0, DriverSpec.brownian(256), cells=256)
        values = simulate_limit(spec, self.times, stream(6), replicates=2000).values
        self.assertEqual(values[:, -1].var().item(), 2.0 * math.sqrt(2.0 / math.pi), atol=0.3, rtol=0)

    def test_lambda_exact_mean_kernel_variance(self):
        spec = LimitSpec('lambda', 'indicator', 2.0, DriverSpec.brownian(64), exact_mean_kernel=True)
        values = simulate_limit(spec, self.times, stream(7), replicates=4000).values
        self.assertEqual(values[:, 0], torch.zeros(4000, dtype=torch.float64), atol=0, rtol=0)
        self.assertEqual(values[:, -1].var().item(), 4.0 * GAUSSIAN_TAIL_L2, atol=0.05, rtol=0)
        self.assertEqual(values[:, 1].var().item(), 4.0 * GAUSSIAN_TAIL_L2 * math.sqrt(0.5), atol=0.05, rtol=0)


class TestScaling(TestCase):
    def test_normalized_copy_sum(self):
        samples = torch.ones(4, 2, dtype=torch.float64)
        self.assertEqual(normalized_copy_sum(samples, 2.0), torch.full((2,), 2.0, dtype=torch.float64))
        self.assertEqual(normalized_copy_sum(samples, 2.0, shared_measure=True),
                         torch.ones(2, dtype=torch.float64))
        self.assertEqual(normalized_copy_sum(samples, 1.0, dim=1), torch.full((4,), 1.0, dtype=torch.float64))

    def test_localtime_scaling_unit(self):
        report = localtime_scaling_check(DriverSpec.brownian(), 1.0, 50, stream(8), steps=256)
        self.assertEqual(report.ratio, 1.0)
        self.assertEqual(report.zscore, 0.0)
        self.assertTrue(report.passed)
        self.assertEqual(report.to_dict()['replicates'], 50)

    @parametrize('case', [subtest((DriverSpec.brownian(), 2.0), name='brownian'),
                          subtest((DriverSpec.fbm(0.75), 2.0), name='fbm')])
    def test_localtime_scaling_target(self, case):
        driver, c = case
        report = localtime_scaling_check(driver, c, 400, stream(9), steps=256)
        self.assertEqual(report.target_ratio, c ** (2.0 - driver.hurst_prime))
        self.assertLessEqual(abs(report.zscore), 4.0)

    def test_localtime_scaling_invalid(self):
        with self.assertRaises(ParameterError):
            localtime_scaling_check(DriverSpec.brownian(), 0.0, 10, stream())


instantiate_parametrized_tests(TestSimulateLimit)
instantiate_parametrized_tests(TestScaling)

if __name__ == '__main__':
    run_tests()
