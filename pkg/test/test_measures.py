# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import io
import math

import torch
from torch.testing._internal.common_utils import (
    TestCase, run_tests, parametrize, instantiate_parametrized_tests,
)

from common_utils import gaussian_scenery, simple_walks, stream
from rwrt import (
    Bins, FunctionKernel, GaussianTail, Indicator, MeasureGrid1D, NumericError, ParameterError, PiecewiseLinear,
    ProductMeasureGrid, ScenerySignedMeasure, TruncationError, gen_fbm_path, local_time, mu_h_functional,
    product_integral, rwrt_indicator, stable_integral, verify_diagonal_convergence,
)
from rwrt.verify import ecf, ks_test


class TestKernels(TestCase):
    def test_indicator(self):
        f = Indicator.between(1.0, -1.0, weight=2.0)
        self.assertEqual(f.lo.item(), -1.0)
        self.assertEqual(f(torch.tensor([-2.0, 0.0, 1.0, 1.5], dtype=torch.float64)),
                         torch.tensor([0.0, 2.0, 2.0, 0.0], dtype=torch.float64))
        edges = torch.tensor([-2.0, -0.5, 0.5, 2.0], dtype=torch.float64)
        self.assertEqual(f.cell_integrals(edges), torch.tensor([1.0, 2.0, 1.0], dtype=torch.float64))
        self.assertEqual(f.support(), (-1.0, 1.0))

    def test_indicator_origin_to(self):
        f = Indicator.origin_to(torch.tensor([2.0, -3.0]))
        self.assertEqual(f.lo, torch.tensor([0.0, -3.0], dtype=torch.float64))
        self.assertEqual(f.hi, torch.tensor([2.0, 0.0], dtype=torch.float64))
        self.assertEqual(f.outside_mass(-1.0, 1.0, 0.1, 1.5), torch.tensor([1.0, 2.0], dtype=torch.float64))

    def test_piecewise_linear(self):
        f = PiecewiseLinear([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        x = torch.tensor([-1.0, 0.5, 1.0, 1.75, 3.0], dtype=torch.float64)
        self.assertEqual(f(x), torch.tensor([0.0, 0.5, 1.0, 0.25, 0.0], dtype=torch.float64))
        edges = torch.tensor([-1.0, 0.0, 0.5, 1.0, 2.0, 3.0], dtype=torch.float64)
        self.assertEqual(f.cell_integrals(edges), torch.tensor([0.0, 0.125, 0.375, 0.5, 0.0], dtype=torch.float64))

    def test_piecewise_linear_batched(self):
        f = PiecewiseLinear([0.0, 1.0], [[1.0, 1.0], [0.0, 2.0]])
        edges = torch.tensor([0.0, 0.5, 1.0], dtype=torch.float64)
        self.assertEqual(f.cell_integrals(edges), torch.tensor([[0.5, 0.5], [0.25, 0.75]], dtype=torch.float64))

    def test_piecewise_linear_knots(self):
        with self.assertRaisesRegex(ParameterError, 'increasing'):
            PiecewiseLinear([0.0, 0.0], [1.0, 1.0])

    def test_gaussian_tail(self):
        f = GaussianTail(2.0)
        self.assertEqual(f(torch.zeros(1, dtype=torch.float64)).item(), 0.5)
        x = torch.tensor([-1.5, 0.3, 2.0], dtype=torch.float64)
        d = 1e-5
        slope = (f.antiderivative(x + d) - f.antiderivative(x - d)) / (2 * d)
        self.assertEqual(slope, f(x), atol=1e-7, rtol=0)
        # int_0^inf P(|Y| > x) / 2 dx = E|Y| / 2
        far = f.antiderivative(torch.tensor([60.0], dtype=torch.float64)).item()
        self.assertEqual(far, 2.0 / math.sqrt(2 * math.pi), atol=1e-12, rtol=0)

    def test_function_kernel(self):
        f = FunctionKernel(lambda x: x * x, support=(0.0, 1.0))
        edges = torch.linspace(0, 1, 1001, dtype=torch.float64)
        self.assertEqual(f.cell_integrals(edges).sum().item(), 1.0 / 3.0, atol=1e-6, rtol=0)


class TestMeasureGrid(TestCase):
    def _grid(self, alpha=1.5, batch=()):
        return MeasureGrid1D.sample(alpha, 0.25, 2.0, stream(0), batch_shape=batch)

    def test_layout(self):
        grid = self._grid()
        self.assertEqual(grid.cells, 16)
        self.assertEqual(grid.lo, -2.0)
        self.assertEqual(grid.hi, 2.0)
        self.assertEqual(grid.half_width, 2.0)
        self.assertEqual(grid.edges[0].item(), -2.0)
        self.assertEqual(grid.midpoints[0].item(), -1.875)
        self.assertEqual(self._grid(batch=(3, 2)).draws.shape, (3, 2, 16))

    def test_non_finite_integrand(self):
        f = FunctionKernel(lambda x: torch.full_like(x, math.nan), support=(-1.0, 1.0))
        with self.assertRaises(NumericError):
            stable_integral(f, MeasureGrid1D.sample(2.0, 0.5, 2.0, stream()))

    def test_domain_rounds_out(self):
        grid = MeasureGrid1D.sample(2.0, 0.3, 1.0, stream())
        self.assertEqual(grid.cells, 8)
        self.assertLessEqual(grid.lo, -1.0)

    def test_primitive(self):
        grid = self._grid()
        cum = grid.cumulative()
        self.assertEqual(grid.primitive(torch.tensor(-2.0)).item(), 0.0)
        self.assertEqual(grid.primitive(torch.tensor(2.0)).item(), cum[-1].item())
        self.assertEqual(grid.primitive(torch.tensor(-1.875)).item(), 0.5 * grid.draws[0].item())

    @parametrize('y', [0.0, 0.6, -1.3, 2.0, -2.0])
    def test_levy_motion_is_indicator_integral(self, y):
        grid = self._grid(batch=(4,))
        lm = grid.levy_motion(torch.tensor(y, dtype=torch.float64))
        ind = stable_integral(Indicator.origin_to(y), grid)
        self.assertEqual(lm, ind, atol=1e-12, rtol=0)

    def test_levy_motion_batched_times(self):
        grid = self._grid()
        y = torch.tensor([0.5, -1.0, 1.75], dtype=torch.float64)
        lm = grid.levy_motion(y)
        self.assertEqual(lm.shape, (3,))
        self.assertEqual(lm[0].item(), grid.draws[8:10].sum().item())
        self.assertEqual(lm[1].item(), grid.draws[4:8].sum().item())
        self.assertEqual(grid.levy_motion(torch.tensor(0.0)).item(), 0.0)

    def test_levy_motion_outside_domain(self):
        with self.assertRaises(TruncationError):
            self._grid().levy_motion(torch.tensor(2.5))

    def test_truncation(self):
        grid = self._grid()
        with self.assertRaisesRegex(TruncationError, 'outside the measure domain'):
            stable_integral(Indicator(0.0, 3.0), grid)
        with self.assertRaises(TruncationError):
            stable_integral(lambda x: 1.0 / (1.0 + x * x), grid)

    def test_cell_values(self):
        grid = self._grid()
        values = torch.arange(16, dtype=torch.float64)
        self.assertEqual(stable_integral(values, grid), (values * grid.draws).sum())
        with self.assertRaisesRegex(ParameterError, '16 cell values'):
            stable_integral(torch.ones(5), grid)

    @parametrize('alpha', [1.2, 1.5, 2.0])
    def test_indicator_integral_law(self, alpha):
        grid = MeasureGrid1D.sample(alpha, 1.0 / 16, 2.0, stream(1), batch_shape=(20000,))
        x = stable_integral(Indicator(0.0, 1.0), grid)
        for theta in (0.5, 1.0):
            c = torch.cos(theta * x)
            stderr = c.std().item() / math.sqrt(x.numel())
            self.assertLessEqual(abs(c.mean().item() - math.exp(-theta ** alpha)), 5 * stderr)

    def test_csv(self):
        f = io.StringIO()
        MeasureGrid1D.sample(2.0, 0.5, 0.5, stream()).to_csv(f)
        lines = f.getvalue().splitlines()
        self.assertEqual(lines[0], 'cell,value')
        self.assertEqual([line.split(',')[0] for line in lines[1:]], ['-1', '0'])


class TestOccupationIntegral(TestCase):
    def test_constant_path(self):
        from rwrt import RealPath
        grid = MeasureGrid1D.sample(1.5, 0.25, 1.0, stream(2))
        path = RealPath(0.1, torch.zeros(11, dtype=torch.float64))
        out = grid.occupation_integral(path)
        expected = torch.arange(11, dtype=torch.float64) * 0.1 * grid.draws[4] / 0.25
        self.assertEqual(out, expected)

    def test_matches_local_time_integral(self):
        times = torch.linspace(0, 1, 513, dtype=torch.float64)
        path = gen_fbm_path(0.5, times, stream(3))
        y = path.values
        sup = y.abs().max().item()
        grid = MeasureGrid1D.sample(1.5, (y.max() - y.min()).item() / 64, 4 * sup, stream(4))
        profile = local_time(path, Bins(grid.lo, grid.h, grid.cells))
        self.assertEqual(grid.occupation_integral(path)[-1], stable_integral(profile, grid), atol=1e-9, rtol=0)

    def test_path_outside_domain(self):
        from rwrt import RealPath
        grid = MeasureGrid1D.sample(1.5, 0.25, 1.0, stream(2))
        with self.assertRaises(TruncationError):
            grid.occupation_integral(RealPath(0.5, torch.tensor([0.0, 0.5, 1.5], dtype=torch.float64)))


class TestProductMeasure(TestCase):
    def test_layout(self):
        grid = ProductMeasureGrid.sample(1.5, 0.25, 2.0, 3, stream(5), batch_shape=(2,))
        self.assertEqual(grid.draws.shape, (2, 3, 16))
        self.assertEqual(grid.copies, 3)
        self.assertEqual(grid.cell_mass, 0.25 / 3)
        with self.assertRaises(ParameterError):
            ProductMeasureGrid.sample(1.5, 0.25, 2.0, 0, stream())

    def test_indicator_kernels_per_copy(self):
        grid = ProductMeasureGrid.sample(1.5, 0.25, 2.0, 3, stream(6))
        y = torch.tensor([0.5, -1.0, 1.75], dtype=torch.float64)
        total = product_integral(Indicator.origin_to(y), grid)
        per_copy = grid.levy_motion(y[:, None])[:, 0]
        self.assertEqual(total, per_copy.sum(), atol=1e-12, rtol=0)
        self.assertEqual(per_copy[0].item(), grid.draws[0, 8:10].sum().item())

    def test_cell_values_need_copies(self):
        grid = ProductMeasureGrid.sample(1.5, 0.25, 2.0, 3, stream(6))
        with self.assertRaisesRegex(ParameterError, 'copies'):
            product_integral(torch.ones(16), grid)
        self.assertEqual(product_integral(torch.ones(3, 16), grid), grid.draws.sum())

    def test_copy_mass_scaling(self):
        # sum over copies of SaS((h / m)^(1/alpha)) is SaS(h^(1/alpha))
        grid = ProductMeasureGrid.sample(2.0, 1.0, 1.0, 8, stream(7), batch_shape=(20000,))
        total = grid.draws[..., 1].sum(dim=-1)
        self.assertEqual(total.var().item(), 2.0, atol=0.1, rtol=0)


class TestStableMeasureLaws(TestCase):
    def test_additive_over_disjoint_sets(self):
        grid = MeasureGrid1D.sample(1.5, 1.0 / 16, 4.0, stream(10), batch_shape=(100,))
        f, g = Indicator(0.0, 1.0), Indicator(2.0, 3.0, weight=0.5)
        union = (f.cell_integrals(grid.edges) + g.cell_integrals(grid.edges)) / grid.h
        self.assertEqual(stable_integral(union, grid), stable_integral(f, grid) + stable_integral(g, grid),
                         atol=1e-12, rtol=1e-9)
        # M([0, 1]) + M([1, 3]) = M([0, 3])
        self.assertEqual(stable_integral(Indicator(0.0, 1.0), grid) + stable_integral(Indicator(1.0, 3.0), grid),
                         stable_integral(Indicator(0.0, 3.0), grid), atol=1e-12, rtol=1e-9)

    def test_linear_in_the_integrand(self):
        grid = MeasureGrid1D.sample(1.2, 1.0 / 16, 2.0, stream(11), batch_shape=(50,))
        self.assertEqual(stable_integral(Indicator(0.0, 1.0, weight=-3.0), grid),
                         -3.0 * stable_integral(Indicator(0.0, 1.0), grid), atol=1e-12, rtol=1e-9)

    def test_disjoint_sets_are_independent(self):
        replicates = 20000
        grid = MeasureGrid1D.sample(2.0, 1.0 / 16, 3.0, stream(12), batch_shape=(replicates,))
        x = stable_integral(Indicator(0.0, 1.0), grid)
        y = stable_integral(Indicator(2.0, 3.0), grid)
        z = stable_integral(Indicator(0.0, 2.0), grid)
        self.assertLessEqual(abs(torch.corrcoef(torch.stack([x, y]))[0, 1].item()), 4.0 / math.sqrt(replicates))
        # overlapping sets: correlation 1 / sqrt(2)
        self.assertEqual(torch.corrcoef(torch.stack([x, z]))[0, 1].item(), 1.0 / math.sqrt(2.0), atol=0.03, rtol=0)

    @parametrize('alpha', [1.5, 2.0])
    def test_scale_law(self, alpha):
        # M([0, c]) has the law of c**(1/alpha) M([0, 1])
        c, replicates = 2.0, 5000
        wide = MeasureGrid1D.sample(alpha, 1.0 / 16, 3.0, stream(13, 'wide'), batch_shape=(replicates,))
        unit = MeasureGrid1D.sample(alpha, 1.0 / 16, 3.0, stream(13, 'unit'), batch_shape=(replicates,))
        x = stable_integral(Indicator(0.0, c), wide)
        y = c ** (1.0 / alpha) * stable_integral(Indicator(0.0, 1.0), unit)
        self.assertGreater(ks_test(x, y).pvalue, 1e-3)
        thetas = [0.25, 0.5, 1.0]
        got = ecf(x, thetas)
        for theta, value, stderr in zip(thetas, got.values, got.stderr):
            self.assertLessEqual(abs(value - math.exp(-c * theta ** alpha)), 5 * stderr + 1e-3)


class TestSceneryMeasure(TestCase):
    def test_unravels_to_the_rwrt(self):
        # mu_h[1_[0, h W(k)]] = n**(-1/4) S(W(k)) with h = n**(-1/2)
        n = 1024
        h = n ** -0.5
        eta = gaussian_scenery(seed=14)
        walk = simple_walks(n, seed=14)
        direct = mu_h_functional(ScenerySignedMeasure(eta, h), Indicator.origin_to(walk.positions.double() * h))
        self.assertEqual(direct, n ** -0.25 * rwrt_indicator(eta, walk).values, atol=1e-10, rtol=0)

    def test_mu_h_of_indicator(self):
        eta = gaussian_scenery(seed=8)
        mu = ScenerySignedMeasure(eta, 0.25)
        value = mu_h_functional(mu, Indicator(0.0, 1.0))
        self.assertEqual(value.item(), 0.5 * eta.window(0, 4).sum().item())
        self.assertEqual(mu.alpha, 2.0)

    def test_support_is_required(self):
        mu = ScenerySignedMeasure(gaussian_scenery(), 0.5)
        with self.assertRaisesRegex(ParameterError, 'unbounded support'):
            mu_h_functional(mu, lambda x: torch.exp(-x * x))
        value = mu_h_functional(mu, lambda x: torch.exp(-x * x), support=(-4.0, 4.0))
        self.assertTrue(math.isfinite(value.item()))
        with self.assertRaises(ParameterError):
            mu_h_functional(mu, torch.ones(3))
        with self.assertRaises(ParameterError):
            ScenerySignedMeasure(gaussian_scenery(), 0.0)

    def test_diagonal_convergence(self):
        f = Indicator(0.0, 1.0)
        report = verify_diagonal_convergence([f, f], f, 2.0, [0.5, 0.25], 2000, stream(9), kind='gaussian',
                                             chunk=500)
        self.assertEqual(len(report.distances), 2)
        self.assertEqual(report.hs, (0.5, 0.25))
        self.assertEqual(len(report.thetas), 25)
        self.assertLess(report.final_distance, 0.15)
        self.assertEqual(report.to_dict()['replicates'], 2000)

    def test_diagonal_convergence_arguments(self):
        f = Indicator(0.0, 1.0)
        with self.assertRaisesRegex(ParameterError, 'one h_n per f_n'):
            verify_diagonal_convergence([f], f, 2.0, [0.5, 0.25], 10, stream())
        with self.assertRaisesRegex(ParameterError, 'support'):
            verify_diagonal_convergence([f], lambda x: x, 2.0, [0.5], 10, stream())


instantiate_parametrized_tests(TestMeasureGrid)
instantiate_parametrized_tests(TestStableMeasureLaws)

if __name__ == '__main__':
    run_tests()
