import unittest

import numpy as np

from typing import Dict, Union

from Models.Tensors import Tensor, ParamStore, set_defaultDtype, defaultDtype, gradientsDisabled, get_defaultDtype
from Methods import TensorOps as ops
from Methods.GradCheckOps import run_gradientChecks, finite_difference_check, raise_onFailure, get_checkRng, GRADIENT_CHECKS
from Utilities.Numeric import isWithin, get_maxRelativeError
from Utilities.Exceptions import ShapeMismatchError, NonFiniteError, GradientCheckError
from Tests import Oracles


class TestTensors(unittest.TestCase):

    def setUp(self):
        set_defaultDtype('float64')

    def tearDown(self):
        set_defaultDtype('float32')

    def CompareResults(self, received: Dict, expected: Dict, ptolerance: Union[float, int]):
        print('\n')
        for parameter in expected:
            assert parameter in received
            print('Expected: {0}'.format(expected[parameter]))
            print('Received: {0}'.format(received[parameter]))
            self.assertTrue(isWithin(received[parameter], ptolerance, '%', expected[parameter]))

    def test_tensors_backward_01(self):
        # d/dx sum(x * x + 3x) = 2x + 3
        x = Tensor(np.array([[1.0, -2.0], [0.5, 4.0]]), requires_grad=True)
        y = ops.sum(ops.add(ops.mul(x, x), ops.mul(x, 3.0)))
        y.backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 3)

    def test_tensors_backward_02(self):
        # A tensor used on two paths accumulates both contributions
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = ops.sum(ops.mul(ops.exp(x), x))
        y.backward()
        self.CompareResults({'grad': float(x.grad[0])}, {'grad': float(np.exp(2.0) * 3.0)}, 1e-9)

    def test_tensors_conv2d_oracle(self):
        rng = np.random.default_rng(3)
        for stride, padding, kernel in ((1, 1, 3), (2, 1, 3), (2, 0, 2), (1, 0, 1)):
            x = rng.standard_normal((3, 7, 6))
            weight = rng.standard_normal((4, 3, kernel, kernel))
            bias = rng.standard_normal(4)
            received = ops.conv2d(Tensor(x), Tensor(weight), Tensor(bias), stride=stride, padding=padding).data
            expected = Oracles.conv2d(x, weight, bias, stride, padding)
            self.assertEqual(received.shape, expected.shape)
            self.assertLess(get_maxRelativeError(received, expected), 1e-10)

    def test_tensors_bilinearSample_oracle(self):
        rng = np.random.default_rng(5)
        source = rng.standard_normal((2, 5, 6))
        px = rng.uniform(-1.5, 7.0, size=(4, 4))
        py = rng.uniform(-1.5, 6.0, size=(4, 4))
        received = ops.bilinear_sample(Tensor(source), Tensor(px), Tensor(py)).data
        for i in range(4):
            for j in range(4):
                np.testing.assert_allclose(received[:, i, j], Oracles.bilinear_read(source, px[i, j], py[i, j]), atol=1e-12)

    def test_tensors_bilinearSample_integer(self):
        # Integer coordinates read the pixel itself
        source = np.arange(12, dtype=np.float64).reshape(1, 3, 4)
        px = Tensor(np.array([[0.0, 3.0], [1.0, 2.0]]))
        py = Tensor(np.array([[0.0, 2.0], [1.0, 0.0]]))
        received = ops.bilinear_sample(Tensor(source), px, py).data[0]
        np.testing.assert_array_equal(received, np.array([[0.0, 11.0], [5.0, 2.0]]))

    def test_tensors_softmax_masked(self):
        logits = Tensor(np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]]))
        mask = np.array([[True, False, True], [False, False, False]])
        weights = ops.softmax(logits, axis=-1, mask=mask).data
        self.CompareResults({'rowSum': weights[0].sum()}, {'rowSum': 1.0}, 1e-9)
        self.assertEqual(weights[0, 1], 0.0)
        np.testing.assert_array_equal(weights[1], np.zeros(3))

    def test_tensors_gather_repeated(self):
        table = Tensor(np.arange(6, dtype=np.float64).reshape(3, 2), requires_grad=True)
        ops.sum(ops.gather(table, [0, 2, 2])).backward()
        np.testing.assert_array_equal(table.grad, np.array([[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]))
        with self.assertRaises(ShapeMismatchError):
            ops.gather(table, [3])

    def test_tensors_pixelShuffle(self):
        x = Tensor(np.arange(8, dtype=np.float64).reshape(4, 1, 2))
        y = ops.pixel_shuffle(x, 2).data
        self.assertEqual(y.shape, (1, 2, 4))
        np.testing.assert_array_equal(y[0], np.array([[0.0, 2.0, 1.0, 3.0], [4.0, 6.0, 5.0, 7.0]]))

    def test_tensors_areaDownsample(self):
        x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
        np.testing.assert_array_equal(ops.area_downsample(x, 2).data[0], np.array([[2.5, 4.5], [10.5, 12.5]]))
        with self.assertRaises(ShapeMismatchError):
            ops.area_downsample(Tensor(np.zeros((1, 5, 4))), 2)

    def test_tensors_bilinearResize_constant(self):
        x = Tensor(np.full((2, 3, 5), 0.7))
        np.testing.assert_allclose(ops.bilinear_resize(x, 6, 10).data, 0.7, atol=1e-12)

    def test_tensors_windowDot_definition(self):
        rng = np.random.default_rng(11)
        a, b = rng.standard_normal((2, 4, 4)), rng.standard_normal((2, 4, 4))
        offsets = np.array([[1, 0], [0, -1], [-1, 1]])
        out = ops.window_dot(Tensor(a), Tensor(b), offsets, -1, 1).data
        for index, (dx, dy) in enumerate(offsets):
            for y in range(4):
                for x in range(4):
                    ya, xa, yb, xb = y - dy, x - dx, y + dy, x + dx
                    inside = all(0 <= v < 4 for v in (ya, xa, yb, xb))
                    expected = np.dot(a[:, ya, xa], b[:, yb, xb]) if inside else 0.0
                    self.assertAlmostEqual(out[index, y, x], expected, places=12)

    def test_tensors_shapeErrors(self):
        with self.assertRaises(ShapeMismatchError):
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
        with self.assertRaises(ShapeMismatchError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        with self.assertRaises(ShapeMismatchError):
            ops.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_tensors_nonFinite(self):
        with np.errstate(divide='ignore'):
            with self.assertRaises(NonFiniteError):
                ops.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))

    def test_tensors_item(self):
        self.assertEqual(Tensor(np.array([[2.5]])).item(), 2.5)
        self.assertEqual(ops.sum(Tensor(np.ones((2, 3)))).item(), 6.0)
        with self.assertRaises(ShapeMismatchError):
            Tensor(np.ones(3)).item()
        with self.assertRaises(ShapeMismatchError):
            Tensor(np.zeros((0,))).item()

    def test_tensors_gradientsDisabled(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with gradientsDisabled():
            y = ops.mul(x, 2.0)
        self.assertFalse(y.requires_grad)
        self.assertTrue(ops.mul(x, 2.0).requires_grad)

    def test_tensors_defaultDtype(self):
        with defaultDtype('float32'):
            self.assertEqual(Tensor([1.0, 2.0]).dtype, np.float32)
        self.assertEqual(get_defaultDtype(), np.float64)
        with self.assertRaises(ValueError):
            set_defaultDtype('int32')

    def test_tensors_paramStore(self):
        store = ParamStore(0)
        store.add('block.weight', np.ones((2, 3)))
        store.add('block.bias', np.zeros(3))
        store.add('other.weight', np.ones(4))
        self.assertEqual(store.count('block.'), 9)
        self.assertEqual(store.names('other.'), ['other.weight'])
        with self.assertRaises(KeyError):
            store.add('block.bias', np.zeros(3))
        with self.assertRaises(ShapeMismatchError):
            store.assign('block.bias', np.zeros(4))
        missing = store.load_fromDict({'block.bias': np.full(3, 2.0)}, strict=False)
        self.assertEqual(missing, ['block.weight', 'other.weight'])
        np.testing.assert_array_equal(store['block.bias'].data, np.full(3, 2.0))
        with self.assertRaises(KeyError):
            store.load_fromDict({'block.bias': np.zeros(3)}, strict=True)

    def test_tensors_finiteDifference_detectsWrongGradient(self):
        # relu's backward is correct away from 0; a check on a correct op returns a small error
        x = Tensor(np.array([0.5, -0.7, 1.3]))
        self.assertLess(finite_difference_check(lambda t: ops.sum(ops.mul(ops.relu(t), t)), x), 1e-6)

    def test_tensors_gradientCheckStreams(self):
        # matmul and conv2d share a name length; every registered check still draws its own inputs
        names = [check.name for check in GRADIENT_CHECKS]
        self.assertEqual(len(names[names.index('matmul')]), len(names[names.index('conv2d')]))
        firstDraws = [get_checkRng(0, index).random() for index in range(len(names))]
        self.assertEqual(len(set(firstDraws)), len(names))
        self.assertEqual(get_checkRng(1, 2).random(), get_checkRng(1, 2).random())
        self.assertNotEqual(get_checkRng(0, 2).random(), get_checkRng(1, 2).random())

    def test_tensors_gradientSuite_core(self):
        table = run_gradientChecks('core', seeds=(0, 1, 2))
        print('\n', table.to_string())
        self.assertTrue(table['passed'].all())

    def test_tensors_gradientSuite_faultInjected(self):
        table = run_gradientChecks('core', seeds=(0,), faultOp='conv2d')
        self.assertFalse(table.query('check == "conv2d"')['passed'].any())
        self.assertTrue(table.query('check == "matmul"')['passed'].all())
        with self.assertRaises(GradientCheckError):
            raise_onFailure(table)
        raise_onFailure(table.query('check == "matmul"'))


if __name__ == '__main__':
    unittest.main()
