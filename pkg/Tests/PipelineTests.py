import io
import os
import tempfile
import unittest

import numpy as np

from contextlib import redirect_stdout, redirect_stderr
from matplotlib.colors import rgb_to_hsv

from Models.Tensors import Tensor, set_defaultDtype, get_defaultDtype
from Models.Fields import MotionField, BilateralPair
from Models.Configs import get_toyConfig
from Models.Pipelines import BiMotionPipeline, pad_frame, PAD_MULTIPLE
from Methods.SyntheticOps import SyntheticDataset
from Methods.EvaluationOps import evaluate_interpolation, psnr, ssim, epe
from Methods.FlowOps import flow_colorize
from Methods.BenchmarkOps import run_benchmark
from Utilities.StageTracker import StageTracker
from Utilities.FileOps import write_image, read_flow
from Utilities.Exceptions import ShapeMismatchError, SymmetryViolationError
import bimotion


class TestPipeline(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(31)
        self.pipeline = BiMotionPipeline(get_toyConfig())

    def tearDown(self):
        set_defaultDtype('float32')

    def frames(self, H: int, W: int):
        return self.rng.uniform(0, 1, size=(3, H, W)), self.rng.uniform(0, 1, size=(3, H, W))

    def CompareResults(self, received: dict, expected: dict):
        print('\n')
        for parameter in expected:
            print('{0} - Expected: {1}, Received: {2}'.format(parameter, expected[parameter], received[parameter]))
            self.assertEqual(received[parameter], expected[parameter])

    def test_pipeline_oddSizes(self):
        result = self.pipeline.interpolate(*self.frames(33, 40))
        self.CompareResults({'frame': result.frame.shape, 'pair': tuple(result.pair.resolution), 'pairScale': result.pair.scale,
                             'global': tuple(result.globalPair.resolution), 'globalScale': result.globalPair.scale},
                            {'frame': (3, 33, 40), 'pair': (17, 20), 'pairScale': 2, 'global': (6, 6), 'globalScale': 8})

    def test_pipeline_symmetryAtEveryStage(self):
        I0, I1 = self.frames(32, 48)
        for _ in range(2):
            result = self.pipeline.interpolate(I0, I1)
            self.assertEqual(result.tracker.stages, ['global_1/8', 'refine_1/4', 'refine_1/2'])
            for stage in result.tracker.stages:
                self.assertTrue(result.tracker[stage].isSymmetric())
            self.assertTrue(result.pair.isSymmetric())
            self.assertTrue((result.tracker.to_DF()['maxAsymmetry'] == 0).all())

    def test_pipeline_deterministic(self):
        I0, I1 = self.frames(32, 32)
        first = BiMotionPipeline(get_toyConfig(seed=3)).interpolate(I0, I1).frame.numpy()
        second = BiMotionPipeline(get_toyConfig(seed=3)).interpolate(I0, I1).frame.numpy()
        np.testing.assert_array_equal(first, second)

    def test_pipeline_acceptsTensors(self):
        I0, I1 = self.frames(32, 32)
        fromArrays = self.pipeline.interpolate(I0, I1).frame.numpy()
        fromTensors = self.pipeline.interpolate(Tensor(I0), Tensor(I1)).frame.numpy()
        np.testing.assert_array_equal(fromArrays, fromTensors)

    def test_pipeline_defaultDtype(self):
        result = self.pipeline.interpolate(*self.frames(32, 32))
        self.assertEqual(get_defaultDtype(), np.float32)
        self.assertEqual(result.frame.dtype, np.float32)
        self.assertEqual(result.pair.toOne.data.dtype, np.float32)

    def test_pipeline_padFrame(self):
        frame = self.rng.uniform(0, 1, size=(3, 33, 40))
        padded = pad_frame(frame)
        self.assertEqual(padded.shape, (3, 48, 48))
        self.assertEqual(padded.shape[1] % PAD_MULTIPLE, 0)
        np.testing.assert_array_equal(padded[:, :33, :40], frame)
        np.testing.assert_array_equal(padded[:, 47, :40], frame[:, 32])
        np.testing.assert_array_equal(padded[:, :33, 45], frame[:, :, 39])
        self.assertEqual(pad_frame(np.zeros((3, 32, 64))).shape, (3, 32, 64))

    def test_pipeline_inputErrors(self):
        with self.assertRaises(ShapeMismatchError):
            self.pipeline.interpolate(*self.frames(24, 40))
        with self.assertRaises(ShapeMismatchError):
            self.pipeline.interpolate(np.zeros((3, 32, 32)), np.zeros((3, 32, 48)))

    def test_pipeline_stageTracker(self):
        symmetric = BilateralPair.from_toOne(MotionField(Tensor(np.ones((2, 4, 4))), 8))
        broken = BilateralPair(MotionField(Tensor(np.zeros((2, 4, 4))), 8), MotionField(Tensor(np.ones((2, 4, 4))), 8))
        with self.assertRaises(SymmetryViolationError):
            StageTracker().trackStage('broken', broken)
        tracker = StageTracker(strict=False)
        tracker.trackStage('fine', symmetric)
        with self.assertLogs(level='WARNING'):
            tracker.trackStage('broken', broken)
        table = tracker.to_DF()
        self.assertEqual(list(table['stage']), ['fine', 'broken'])
        self.assertEqual(list(table['maxAsymmetry']), [0.0, 1.0])

    def test_pipeline_evaluation(self):
        dataset = SyntheticDataset(seed=1, size=32, maxShift=4.0)
        table = evaluate_interpolation(self.pipeline, dataset, 2)
        self.assertEqual(list(table.columns), ['sample', 'psnr', 'ssim', 'baselinePsnr', 'epeRefined', 'epeGlobal'])
        self.assertEqual(list(table['sample']), [0, 1])
        self.assertTrue(np.isfinite(table[['psnr', 'ssim', 'epeRefined', 'epeGlobal']].to_numpy()).all())

    def test_pipeline_metrics(self):
        image = self.rng.uniform(0, 1, size=(3, 16, 16))
        self.assertAlmostEqual(ssim(image, image), 1.0, places=9)
        self.assertTrue(np.isinf(psnr(image, image)))
        self.assertAlmostEqual(epe(np.full((2, 4, 4), 3.0), np.stack([np.full((4, 4), 0.0), np.full((4, 4), -1.0)])), 5.0)

    def test_pipeline_flowColorize(self):
        np.testing.assert_array_equal(flow_colorize(np.zeros((2, 3, 5))), 1.0)
        rightward = flow_colorize(np.stack([np.ones((2, 2)), np.zeros((2, 2))]))
        self.assertEqual(rightward.shape, (2, 2, 3))
        np.testing.assert_allclose(rightward[0, 0], [1.0, 0.0, 0.0], atol=1e-12)

    def test_pipeline_flowColorize_reversed(self):
        # -V keeps saturation and turns the hue half way round
        flow = self.rng.uniform(-3, 3, size=(2, 12, 10))
        forward = rgb_to_hsv(flow_colorize(flow))
        reversed_ = rgb_to_hsv(flow_colorize(-flow))
        np.testing.assert_allclose(reversed_[..., 1], forward[..., 1], atol=1e-9)
        colored = forward[..., 1] > 0.05
        turn = np.mod(reversed_[..., 0] - forward[..., 0], 1.0)[colored]
        self.assertGreater(colored.sum(), 100)
        np.testing.assert_allclose(turn, 0.5, atol=1e-6)

    def test_pipeline_benchmark(self):
        table = run_benchmark('pipeline', [32], get_toyConfig())
        self.assertEqual(list(table['mode']), ['pipeline'])
        self.assertGreater(table['bytes'].iloc[0], 0)
        with self.assertRaises(ValueError):
            run_benchmark('everything', [32])


class TestCommandLine(unittest.TestCase):

    def tearDown(self):
        set_defaultDtype('float32')

    def run_main(self, argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = bimotion.main(argv)
        return code, out.getvalue(), err.getvalue()

    def test_cli_gradcheck(self):
        code, out, _ = self.run_main(['gradcheck', '--module', 'core', '--seeds', '1'])
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith('check,module,seed,error,tolerance,passed'))

        code, _, err = self.run_main(['gradcheck', '--module', 'core', '--seeds', '1', '--inject-fault', 'conv2d'])
        self.assertEqual(code, bimotion.EXIT_GRADIENT_FAILURE)
        self.assertIn('GradientError', err)

        code, _, err = self.run_main(['gradcheck', '--inject-fault', 'no_such_op'])
        self.assertEqual(code, bimotion.EXIT_INPUT_ERROR)
        self.assertTrue(err.strip().splitlines()[-1].startswith('InputError: '))

    def test_cli_flowAndInterpolate(self):
        rng = np.random.default_rng(2)
        with tempfile.TemporaryDirectory() as folder:
            frame0, frame1 = os.path.join(folder, 'a.ppm'), os.path.join(folder, 'b.ppm')
            write_image(frame0, rng.uniform(0, 1, size=(3, 32, 48)))
            write_image(frame1, rng.uniform(0, 1, size=(3, 32, 48)))
            flowPath, framePath = os.path.join(folder, 'mid.flo'), os.path.join(folder, 'mid.ppm')

            code, _, _ = self.run_main(['flow', '--toy', '--frame0', frame0, '--frame1', frame1, '--out', flowPath])
            self.assertEqual(code, 0)
            self.assertEqual(read_flow(flowPath, 2).numpy().shape, (2, 16, 24))

            code, _, _ = self.run_main(['interpolate', '--toy', '--frame0', frame0, '--frame1', frame1, '--out', framePath])
            self.assertEqual(code, 0)
            self.assertTrue(os.path.getsize(framePath) > 32 * 48 * 3)

    def test_cli_badImage(self):
        with tempfile.TemporaryDirectory() as folder:
            missing = os.path.join(folder, 'missing.png')
            code, _, err = self.run_main(['interpolate', '--toy', '--frame0', missing, '--frame1', missing,
                                          '--out', os.path.join(folder, 'out.png')])
        self.assertEqual(code, bimotion.EXIT_INPUT_ERROR)
        self.assertTrue(err.strip().splitlines()[-1].startswith('InputError: '))


if __name__ == '__main__':
    unittest.main()
