import time
import unittest

import numpy as np

from typing import Dict, Union

from Models.Tensors import Tensor, set_defaultDtype
from Models.Fields import MotionField, BilateralPair, DisplacementWindow, FeatureMap, Endpoint
from Methods.CostVolumeOps import bilateral_correlation, bbcv, get_blockCoverage, get_equivalentPixelRadius, memory_report, \
    get_memoryComparison
from Methods.BenchmarkOps import run_benchmark, get_coverageLines
from Methods.GradCheckOps import run_gradientChecks
from Utilities.Numeric import isWithin, get_maxRelativeError
from Utilities.Exceptions import InvalidBlockIndexError, InvalidScaleError, SymmetryViolationError, ShapeMismatchError
from Tests import Oracles


def random_pair(rng: np.random.Generator, H: int, W: int, magnitude: float = 2.5) -> BilateralPair:
    return BilateralPair.from_toOne(MotionField(Tensor(rng.uniform(-magnitude, magnitude, size=(2, H, W))), 1))


class TestCostVolumes(unittest.TestCase):

    def setUp(self):
        set_defaultDtype('float64')

    def tearDown(self):
        set_defaultDtype('float32')

    def CompareResults(self, received: Dict, expected: Dict, ptolerance: Union[float, int]):
        print('\n')
        for parameter in expected:
            print('{0} - Expected: {1}'.format(parameter, expected[parameter]))
            print('{0} - Received: {1}'.format(parameter, received[parameter]))
            self.assertTrue(isWithin(received[parameter], ptolerance, '%', expected[parameter]))

    def test_costvol_window_order(self):
        window = DisplacementWindow(1)
        self.assertEqual(window.offsets.tolist(), [[-1, -1], [0, -1], [1, -1], [-1, 0], [0, 0], [1, 0], [-1, 1], [0, 1], [1, 1]])
        self.assertEqual(window.index(0, 0), 4)
        self.assertEqual(window.side, 3)
        self.assertEqual(window.mirrored().offsets.tolist()[0], [1, 1])
        with self.assertRaises(KeyError):
            window.index(2, 0)

    def test_costvol_correlation_oracle(self):
        rng = np.random.default_rng(20)
        started = time.time()
        for instance in range(20):
            H, W = rng.integers(3, 9, size=2)
            C, radius = int(rng.integers(1, 5)), int(rng.integers(0, 3))
            F0, F1 = rng.standard_normal((C, H, W)), rng.standard_normal((C, H, W))
            volume = bilateral_correlation(Tensor(F0), Tensor(F1), radius)
            self.assertEqual(volume.numpy().shape, (H, W, (2 * radius + 1) ** 2))
            self.assertLess(get_maxRelativeError(volume.numpy(), Oracles.correlation(F0, F1, radius)), 1e-6)
        self.assertLess(time.time() - started, 5.0)

    def test_costvol_correlation_zeroDisplacement(self):
        # At d = 0 the cost is the channel-wise inner product at x
        rng = np.random.default_rng(1)
        F0, F1 = rng.standard_normal((3, 5, 5)), rng.standard_normal((3, 5, 5))
        volume = bilateral_correlation(FeatureMap(Tensor(F0), 8), FeatureMap(Tensor(F1), 8), 2)
        np.testing.assert_allclose(volume.numpy()[:, :, DisplacementWindow(2).index(0, 0)], (F0 * F1).sum(axis=0), atol=1e-12)

    def test_costvol_correlation_swapSymmetry(self):
        # corr(F1, F0)[d] = corr(F0, F1)[-d]; the window lists -d in reverse order of d
        rng = np.random.default_rng(3)
        F0, F1 = rng.standard_normal((4, 7, 6)), rng.standard_normal((4, 7, 6))
        forward = bilateral_correlation(Tensor(F0), Tensor(F1), 2).numpy()
        swapped = bilateral_correlation(Tensor(F1), Tensor(F0), 2).numpy()
        window = DisplacementWindow(2)
        for index, (dx, dy) in enumerate(window.offsets):
            np.testing.assert_allclose(swapped[:, :, index], forward[:, :, window.index(-dx, -dy)], atol=1e-12)
        np.testing.assert_allclose(swapped, forward[:, :, ::-1], atol=1e-12)

    def test_costvol_correlation_translation(self):
        # Rolling both inputs rolls the volume wherever no read crosses the frame border
        rng = np.random.default_rng(4)
        radius, sy, sx = 1, 2, -1
        F0, F1 = rng.standard_normal((3, 12, 12)), rng.standard_normal((3, 12, 12))
        volume = bilateral_correlation(Tensor(F0), Tensor(F1), radius).numpy()
        rolled = bilateral_correlation(Tensor(np.roll(F0, (sy, sx), axis=(1, 2))), Tensor(np.roll(F1, (sy, sx), axis=(1, 2))),
                                       radius).numpy()
        expected = np.roll(volume, (sy, sx), axis=(0, 1))
        margin = radius + max(abs(sy), abs(sx))
        interior = (slice(margin, -margin), slice(margin, -margin))
        np.testing.assert_allclose(rolled[interior], expected[interior], atol=1e-12)

    def test_costvol_correlation_workedExamples(self):
        C, radius = 3, 2
        ones = bilateral_correlation(Tensor(np.ones((C, 9, 9))), Tensor(np.ones((C, 9, 9))), radius).numpy()
        self.CompareResults({'ones': float(ones[radius:-radius, radius:-radius].min()),
                             'onesMax': float(ones.max())}, {'ones': float(C), 'onesMax': float(C)}, 1e-9)
        silent = bilateral_correlation(Tensor(np.random.default_rng(5).standard_normal((C, 9, 9))), Tensor(np.zeros((C, 9, 9))), radius)
        np.testing.assert_array_equal(silent.numpy(), 0.0)

    def test_costvol_correlation_shapeMismatch(self):
        with self.assertRaises(ShapeMismatchError):
            bilateral_correlation(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((3, 4, 5))), 1)

    def test_costvol_bbcv_oracle(self):
        rng = np.random.default_rng(21)
        started = time.time()
        for instance in range(21):
            k = instance % 3
            H, W = 8, 4 * int(rng.integers(1, 3))
            radius = int(rng.integers(1, 3))
            C = int(rng.integers(1, 4))
            S0 = rng.standard_normal((C, H // 2 ** k, W // 2 ** k))
            S1 = rng.standard_normal((C, H // 2 ** k, W // 2 ** k))
            pair = random_pair(rng, H, W)
            volume = bbcv(Tensor(S0), Tensor(S1), pair, k, radius)
            self.assertEqual(volume.numpy().shape, (H, W, (2 * radius + 1) ** 2))
            expected = Oracles.bbcv(S0, S1, pair.toOne.numpy(), k, radius)
            self.assertLess(get_maxRelativeError(volume.numpy(), expected), 1e-6)
        self.assertLess(time.time() - started, 5.0)

    def test_costvol_bbcv_reducesToCorrelation(self):
        # With k = 0 and a zero field the block volume is the bilateral correlation
        rng = np.random.default_rng(2)
        S0, S1 = rng.standard_normal((2, 6, 6)), rng.standard_normal((2, 6, 6))
        zero = BilateralPair.from_toOne(MotionField(Tensor(np.zeros((2, 6, 6))), 1))
        np.testing.assert_allclose(bbcv(Tensor(S0), Tensor(S1), zero, 0, 2).numpy(),
                                   bilateral_correlation(Tensor(S0), Tensor(S1), 2).numpy(), atol=1e-12)

    def test_costvol_bbcv_errors(self):
        rng = np.random.default_rng(3)
        S = Tensor(rng.standard_normal((2, 4, 4)))
        pair = random_pair(rng, 8, 8)
        with self.assertRaises(InvalidBlockIndexError):
            bbcv(S, S, pair, 3)
        with self.assertRaises(InvalidScaleError):
            bbcv(S, S, pair, 2)
        broken = BilateralPair(MotionField(Tensor(np.ones((2, 8, 8))), 1, Endpoint.T_TO_0), pair.toOne)
        with self.assertRaises(SymmetryViolationError):
            bbcv(S, S, broken, 1)

    def test_costvol_coverage(self):
        self.assertEqual([get_blockCoverage(2, k) for k in (0, 1, 2)], [25, 100, 400])
        self.assertEqual(get_equivalentPixelRadius(2, 2), 10)
        self.assertIn('k=2: ((2*2+1) x 2^2)^2 = 400 px', get_coverageLines(2))

    def test_costvol_memoryClaim(self):
        comparison = get_memoryComparison(128, 128, 2, scalarSize=4)
        self.CompareResults({'full': comparison['full'], 'blockwise': comparison['blockwise']},
                            {'full': 128 * 128 * 441 * 4, 'blockwise': 3 * 128 * 128 * 25 * 4}, 1e-9)
        self.assertLess(comparison['ratio'], 0.3)
        self.assertEqual(memory_report(0, 5, 2, 'full'), 0)
        with self.assertRaises(ValueError):
            memory_report(4, 4, 2, 'tiled')

    def test_costvol_benchmark(self):
        table = run_benchmark('costvol', [32])
        self.assertEqual(list(table.columns), ['size', 'mode', 'bytes', 'ms'])
        full = table.query('mode == "full"')['bytes'].iloc[0]
        blockwise = table.query('mode == "blockwise"')['bytes'].iloc[0]
        self.assertLess(blockwise / full, 0.3)
        with self.assertRaises(ValueError):
            run_benchmark('tiled', [32])

    def test_costvol_gradientSuite(self):
        table = run_gradientChecks('costvol', seeds=(0, 1, 2))
        print('\n', table.to_string())
        self.assertTrue(table['passed'].all())


if __name__ == '__main__':
    unittest.main()
