import time
import unittest

import numpy as np

from Models.Tensors import Tensor, ParamStore, set_defaultDtype
from Models.Fields import DisplacementWindow
from Models.Configs import AttentionConfig
from Models.Attentions import BCANoAnchorBlock, BCAAnchorBlock, SwinBlock
from Methods.AttentionOps import sliding_cross_attention, anchor_attention, window_partition, window_reverse, \
    get_relativePositionIndex, get_shiftMask
from Methods.GradCheckOps import run_gradientChecks
from Utilities.Numeric import get_maxRelativeError
from Tests import Oracles


def randomize(store: ParamStore, rng: np.random.Generator, std: float = 0.3):
    for name, tensor in store.items():
        store.assign(name, tensor.data + rng.normal(0, std, size=tensor.shape))


def get_params(store: ParamStore, prefix: str) -> dict:
    return {name[len(prefix):]: tensor.data for name, tensor in store.items() if name.startswith(prefix)}


def project(x: np.ndarray, params: dict, name: str) -> np.ndarray:
    tokens = x.transpose(1, 2, 0) @ params[name + '.weight'] + params[name + '.bias']
    return tokens.transpose(2, 0, 1)


def merge(fromZero: np.ndarray, fromOne: np.ndarray, params: dict) -> np.ndarray:
    tokens = np.concatenate([fromZero, fromOne]).transpose(1, 2, 0)
    y = Oracles.layer_norm(tokens @ params['merge.reduce.weight'] + params['merge.reduce.bias'],
                           params['merge.norm1.weight'], params['merge.norm1.bias'])
    hidden = Oracles.gelu(Oracles.layer_norm(y, params['merge.norm2.weight'], params['merge.norm2.bias']) @ params['merge.mlp.fc1.weight']
                          + params['merge.mlp.fc1.bias'])
    y = y + hidden @ params['merge.mlp.fc2.weight'] + params['merge.mlp.fc2.bias']
    return y.transpose(2, 0, 1)


class TestAttention(unittest.TestCase):

    def setUp(self):
        set_defaultDtype('float64')
        self.rng = np.random.default_rng(7)
        self.cfg = AttentionConfig(channels=8, heads=2, radius=2, windowSize=4)

    def tearDown(self):
        set_defaultDtype('float32')

    def CompareResults(self, received: np.ndarray, expected: np.ndarray, tolerance: float):
        error = get_maxRelativeError(received, expected)
        print('\nMax relative error: {0:.3e} (tolerance {1:.1e})'.format(error, tolerance))
        self.assertEqual(received.shape, expected.shape)
        self.assertLess(error, tolerance)

    def test_attention_sliding_oracle(self):
        q, k, v = (self.rng.standard_normal((4, 8, 8)) for _ in range(3))
        window = DisplacementWindow(2)
        bias = self.rng.standard_normal((2, window.size))
        for mode, sign in (('symmetric', 1), ('anchor', 1), ('anchor', -1)):
            result = sliding_cross_attention(Tensor(q), Tensor(k), Tensor(v), window, mode=mode, sign=sign, heads=2,
                                             positionBias=Tensor(bias), scale=0.5)
            expected = Oracles.sliding_attention(q, k, v, 2, 2, 0.5, bias, mode, sign)
            self.CompareResults(result.attended.data, expected, 1e-5)

    def test_attention_anchor_oracle(self):
        q, k0, k1, v0, v1 = (self.rng.standard_normal((4, 8, 8)) for _ in range(5))
        window = DisplacementWindow(2)
        bias = self.rng.standard_normal((2, window.size))
        fromZero, fromOne, result = anchor_attention(*(Tensor(a) for a in (q, k0, k1, v0, v1)), window, heads=2,
                                                     positionBias=Tensor(bias), scale=0.5)
        expectedZero, expectedOne = Oracles.anchor_attention(q, k0, k1, v0, v1, 2, 2, 0.5, bias)
        self.CompareResults(fromZero.data, expectedZero, 1e-5)
        self.CompareResults(fromOne.data, expectedOne, 1e-5)
        self.assertIsNone(result.attended)

    def test_attention_bcaNoAnchor_oracle(self):
        started = time.time()
        store = ParamStore(1)
        block = BCANoAnchorBlock(store, 'bca', self.cfg)
        randomize(store, self.rng)
        params = get_params(store, 'bca.')
        F0, F1 = self.rng.standard_normal((8, 8, 8)), self.rng.standard_normal((8, 8, 8))
        received = block(Tensor(F0), Tensor(F1)).data

        scale = 1 / np.sqrt(self.cfg.headChannels)
        bias = params['positionBias']
        fromOne = Oracles.sliding_attention(project(F0, params, 'query'), project(F1, params, 'key'), project(F1, params, 'value'),
                                            2, 2, scale, bias)
        fromZero = Oracles.sliding_attention(project(F1, params, 'query'), project(F0, params, 'key'), project(F0, params, 'value'),
                                             2, 2, scale, bias)
        self.CompareResults(received, merge(fromZero, fromOne, params), 1e-5)
        self.assertLess(time.time() - started, 30.0)

    def test_attention_bcaAnchor_oracle(self):
        store = ParamStore(2)
        block = BCAAnchorBlock(store, 'bca', self.cfg)
        randomize(store, self.rng)
        params = get_params(store, 'bca.')
        Z, F0, F1 = (self.rng.standard_normal((8, 8, 8)) for _ in range(3))
        received = block(Tensor(Z), Tensor(F0), Tensor(F1)).data

        fromZero, fromOne = Oracles.anchor_attention(project(Z, params, 'query'), project(F0, params, 'key'), project(F1, params, 'key'),
                                                     project(F0, params, 'value'), project(F1, params, 'value'),
                                                     2, 2, 1 / np.sqrt(self.cfg.headChannels), params['positionBias'])
        self.CompareResults(received, merge(fromZero, fromOne, params), 1e-5)

    def test_attention_swinSingleWindow_oracle(self):
        store = ParamStore(3)
        block = SwinBlock(store, 'swin', 8, 2, 8, shifted=True)
        randomize(store, self.rng)
        Z = self.rng.standard_normal((8, 8, 8))
        self.assertEqual(block.get_shift(8, 8), 0)
        expected = Oracles.window_self_attention(Z, get_params(store, 'swin.'), 2, 8)
        self.CompareResults(block(Tensor(Z)).data, expected, 1e-5)

    def test_attention_normalization(self):
        # Every row over unmasked displacements sums to one
        for blockClass, inputs in ((BCANoAnchorBlock, 2), (BCAAnchorBlock, 3)):
            store = ParamStore(4)
            block = blockClass(store, 'bca', self.cfg)
            randomize(store, self.rng)
            block(*(Tensor(self.rng.standard_normal((8, 8, 8))) for _ in range(inputs)))
            for weights in block.lastWeights:
                sums = weights.data.sum(axis=1)
                np.testing.assert_allclose(sums, 1.0, atol=1e-5)
                self.assertTrue(np.all(weights.data >= 0))

    def test_attention_displacementOrder(self):
        # Softmax and aggregation run over the set of displacements, so relisting d (with P relisted alike) leaves both blocks unchanged
        order = self.rng.permutation(DisplacementWindow(self.cfg.radius).size)
        for blockClass, inputs in ((BCANoAnchorBlock, 2), (BCAAnchorBlock, 3)):
            store = ParamStore(8)
            block = blockClass(store, 'bca', self.cfg)
            randomize(store, self.rng)
            maps = [Tensor(self.rng.standard_normal((8, 8, 8))) for _ in range(inputs)]
            listed = block(*maps).data

            block.window = block.window.permuted(order)
            store.assign('bca.positionBias', store['bca.positionBias'].data[:, order])
            relisted = block(*maps).data
            self.assertEqual(block.window.offsets.tolist(), DisplacementWindow(self.cfg.radius).offsets[order].tolist())
            np.testing.assert_allclose(relisted, listed, atol=1e-10)

    def test_attention_shiftDisabledNotice(self):
        store = ParamStore(9)
        block = SwinBlock(store, 'swin', 8, 2, 4, shifted=True)
        with self.assertLogs('Models.Attentions', level='DEBUG') as logs:
            self.assertEqual(block.get_shift(4, 6), 0)
        self.assertIn('shift disabled', logs.output[0])
        self.assertEqual(block.get_shift(8, 8), 2)

    def test_attention_shiftedWindows(self):
        store = ParamStore(5)
        shifted = SwinBlock(store, 'shifted', 8, 2, 4, shifted=True)
        plain = SwinBlock(store, 'plain', 8, 2, 4, shifted=False)
        randomize(store, self.rng)
        store.load_fromDict({name.replace('shifted.', 'plain.'): store[name].data for name in store.names('shifted.')}, strict=False)
        Z = Tensor(self.rng.standard_normal((8, 8, 8)))
        self.assertEqual(shifted.get_shift(8, 8), 2)
        self.assertFalse(np.allclose(shifted(Z).data, plain(Z).data))

        mask = get_shiftMask(8, 8, 4, 2)
        self.assertTrue(mask[0].all())
        self.assertFalse(mask[-1].all())
        self.assertTrue(get_shiftMask(8, 8, 4, 0).all())

    def test_attention_padding(self):
        store = ParamStore(6)
        block = SwinBlock(store, 'swin', 8, 2, 4, shifted=True)
        self.assertEqual(block(Tensor(self.rng.standard_normal((8, 6, 5)))).shape, (8, 6, 5))

    def test_attention_windowPartition(self):
        x = Tensor(self.rng.standard_normal((3, 4, 6)))
        windows = window_partition(x, 2)
        self.assertEqual(windows.shape, (6, 4, 3))
        np.testing.assert_array_equal(windows.data[1, 0], x.data[:, 0, 2])
        np.testing.assert_array_equal(window_reverse(windows, 2, 4, 6).data, x.data)

    def test_attention_relativePositionIndex(self):
        index = get_relativePositionIndex(2)
        self.assertEqual(index.shape, (4, 4))
        np.testing.assert_array_equal(np.diag(index), 4)
        self.assertEqual(index.max(), 8)

    def test_attention_gradientSuite(self):
        table = run_gradientChecks('attention', seeds=(0, 1, 2))
        print('\n', table.to_string())
        self.assertTrue(table['passed'].all())


if __name__ == '__main__':
    unittest.main()
