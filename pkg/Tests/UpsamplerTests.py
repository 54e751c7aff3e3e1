import unittest

import numpy as np

from Models.Tensors import Tensor, ParamStore, set_defaultDtype
from Models.Fields import MotionField, BilateralPair
from Models.Configs import UpsamplerConfig
from Models.Upsamplers import MotionUpsampler
from Methods.WarpOps import rescale_field
from Methods.GradCheckOps import run_gradientChecks
from Utilities.Numeric import isWithin
from Utilities.Exceptions import ResolutionMismatchError, ShapeMismatchError


class TestUpsampler(unittest.TestCase):

    def setUp(self):
        set_defaultDtype('float64')
        self.rng = np.random.default_rng(17)
        self.cfg = UpsamplerConfig(shallowChannels=8, matchingChannels=8, decoderWidths=[16, 16, 8])

    def tearDown(self):
        set_defaultDtype('float32')

    def CompareResults(self, received: dict, expected: dict, ptolerance: float):
        print('\n')
        for parameter in expected:
            print('Expected: {0}'.format(expected[parameter]))
            print('Received: {0}'.format(received[parameter]))
            self.assertTrue(isWithin(received[parameter], ptolerance, 'units', expected[parameter]))

    def make_inputs(self, H: int = 8, W: int = 8, scale: int = 4):
        pair = BilateralPair.from_toOne(MotionField(Tensor(self.rng.uniform(-1.5, 1.5, size=(2, H, W))), scale))
        I0 = Tensor(self.rng.uniform(0, 1, size=(3, 2 * H, 2 * W)))
        I1 = Tensor(self.rng.uniform(0, 1, size=(3, 2 * H, 2 * W)))
        return pair, I0, I1

    def test_upsampler_shapes(self):
        upsampler = MotionUpsampler(ParamStore(0), 'upsampler', self.cfg)
        pair, I0, I1 = self.make_inputs(8, 12)
        output = upsampler.refine_pass(pair, I0, I1)
        self.assertEqual(output.pair.toOne.data.shape, (2, 16, 24))
        self.assertEqual(output.pair.scale, 2)
        self.assertEqual(len(output.costVolumes), 3)
        self.assertEqual([volume.blockIndex for volume in output.costVolumes], [0, 1, 2])
        for volume in output.costVolumes:
            self.assertEqual(volume.numpy().shape, (16, 24, 25))
        self.assertTrue(output.pair.isSymmetric())

    def test_upsampler_zeroDecoder(self):
        # A vanishing residual leaves exactly the x2-rescaled incoming field
        upsampler = MotionUpsampler(ParamStore(1), 'upsampler', self.cfg)
        upsampler.zero_decoder()
        pair, I0, I1 = self.make_inputs()
        output = upsampler.refine_pass(pair, I0, I1)
        expected = rescale_field(pair.toOne, 2).numpy()
        self.CompareResults({'maxDeviation': float(np.abs(output.pair.toOne.numpy() - expected).max())}, {'maxDeviation': 0.0}, 1e-6)
        np.testing.assert_array_equal(output.residual.data, 0.0)

    def test_upsampler_sharedWeights(self):
        # Two passes reuse one parameter set
        store = ParamStore(2)
        upsampler = MotionUpsampler(store, 'upsampler', self.cfg)
        count = len(store)
        pair, I0, I1 = self.make_inputs(4, 4, 8)
        first = upsampler.refine_pass(pair, I0, I1).pair
        I0b, I1b = Tensor(self.rng.uniform(0, 1, size=(3, 16, 16))), Tensor(self.rng.uniform(0, 1, size=(3, 16, 16)))
        second = upsampler.refine_pass(first, I0b, I1b).pair
        self.assertEqual(len(store), count)
        self.assertEqual((second.scale, tuple(second.resolution)), (2, (16, 16)))

    def test_upsampler_resolutionMismatch(self):
        upsampler = MotionUpsampler(ParamStore(3), 'upsampler', self.cfg)
        pair, I0, I1 = self.make_inputs()
        with self.assertRaises(ResolutionMismatchError):
            upsampler.refine_pass(pair, Tensor(np.zeros((3, 8, 8))), Tensor(np.zeros((3, 8, 8))))
        with self.assertRaises(ShapeMismatchError):
            upsampler.block_embed(Tensor(np.zeros((8, 6, 6))))

    def test_upsampler_gradientSuite(self):
        table = run_gradientChecks('upsampler', seeds=(0, 1, 2))
        print('\n', table.to_string())
        self.assertTrue(table['passed'].all())


if __name__ == '__main__':
    unittest.main()
