import argparse
import logging
import sys

from Models.Configs import PipelineConfig, get_toyConfig
from Models.Pipelines import BiMotionPipeline
from Methods.FlowOps import flow_colorize
from Methods.GradCheckOps import run_gradientChecks, raise_onFailure, MODULES
from Methods.BenchmarkOps import run_benchmark, get_coverageLines
from Methods.SyntheticOps import SyntheticDataset
from Methods.TrainingOps import train_biformer, train_refinement
from Methods.EvaluationOps import evaluate_interpolation
from Methods import TensorOps
from Utilities.FileOps import read_image, write_image, write_flow, load_weights, write_weights, load_config
from Utilities.Logs import configure_logging
from Utilities.Exceptions import (ShapeMismatchError, NonFiniteError, ResolutionMismatchError, InvalidTimeError, InvalidScaleError,
                                  InvalidBlockIndexError, AblationConfigError, ConfigError, FlowFileError, WeightFileError,
                                  ImageFileError, DivergenceError, SymmetryViolationError, GradientCheckError)

log = logging.getLogger('bimotion')

DOMAIN_ERRORS = (ShapeMismatchError, NonFiniteError, ResolutionMismatchError, InvalidTimeError, InvalidScaleError, InvalidBlockIndexError,
                 AblationConfigError, ConfigError, FlowFileError, WeightFileError, ImageFileError, DivergenceError,
                 SymmetryViolationError, ValueError, OSError)

EXIT_GRADIENT_FAILURE = 1
EXIT_INPUT_ERROR = 2


def get_config(args) -> PipelineConfig:
    base = get_toyConfig() if args.toy else PipelineConfig()
    return load_config(args.config, base)


def get_pipeline(args) -> BiMotionPipeline:
    pipeline = BiMotionPipeline(get_config(args))
    if getattr(args, 'weights', None):
        load_weights(pipeline.store, args.weights)
    if args.verbose:
        for prefix, count in pipeline.get_parameterCounts().items():
            log.debug('TrainingNotification: %s holds %d parameters', prefix, count)
    return pipeline


def _interpolate(args):
    pipeline = get_pipeline(args)
    return pipeline.interpolate(read_image(args.frame0), read_image(args.frame1))


def cmd_interpolate(args) -> int:
    result = _interpolate(args)
    write_image(args.out, result.frame)
    if args.dump_flow:
        write_flow(args.dump_flow, result.pair.toOne)
    if args.dump_flow_vis:
        write_image(args.dump_flow_vis, flow_colorize(result.pair.toOne))
    return 0


def cmd_flow(args) -> int:
    result = _interpolate(args)
    write_flow(args.out, result.pair.toOne)
    if args.dump_global:
        write_flow(args.dump_global, result.globalPair.toOne)
    if args.vis:
        write_image(args.vis, flow_colorize(result.pair.toOne))
    return 0


def cmd_train_toy(args) -> int:
    pipeline = get_pipeline(args)
    training = pipeline.cfg.training
    dataset = SyntheticDataset(seed=args.seed, size=training.imageSize, maxShift=training.maxShift, augment=training.augment)
    if args.phase == 'global':
        result = train_biformer(pipeline, dataset, args.iters, logEvery=args.log_every)
    else:
        result = train_refinement(pipeline, dataset, args.iters, freezeGlobal=not args.unfreeze, logEvery=args.log_every)
    write_weights(args.out, result.store)
    logDF = result.logbook.to_DF()
    if args.log:
        logDF.to_csv(args.log, index=False)
    log.info('TrainingNotification: %s phase loss %.6f -> %.6f (best at iteration %d), weights written to %s',
             args.phase, logDF.bm.initialLoss, logDF.bm.finalLoss, logDF.bm.bestIteration, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    if args.inject_fault and not hasattr(TensorOps, args.inject_fault):
        raise ValueError('InputError: No op named "{0}" to inject a gradient fault into'.format(args.inject_fault))
    table = run_gradientChecks(args.module, seeds=range(args.seeds), faultOp=args.inject_fault)
    table.to_csv(sys.stdout, index=False)
    try:
        raise_onFailure(table)
    except GradientCheckError as error:
        print('{0} ({1} of {2} checks failed)'.format(error, int((~table['passed']).sum()), len(table)), file=sys.stderr)
        return EXIT_GRADIENT_FAILURE
    return 0


def cmd_bench(args) -> int:
    cfg = get_config(args)
    if args.mode == 'costvol':
        for line in get_coverageLines(cfg.bbcvRadius):
            print(line, file=sys.stderr)
    table = run_benchmark(args.mode, args.sizes, cfg, args.seed)
    table.to_csv(sys.stdout, index=False)
    return 0


def cmd_evaluate(args) -> int:
    pipeline = get_pipeline(args)
    training = pipeline.cfg.training
    dataset = SyntheticDataset(seed=args.seed, size=training.imageSize, maxShift=training.maxShift)
    table = evaluate_interpolation(pipeline, dataset, args.samples)
    table.to_csv(sys.stdout, index=False)
    print('mean psnr {0:.3f} dB (baseline {1:.3f} dB), mean EPE refined {2:.4f} px, global {3:.4f} px'.format(
        table['psnr'].mean(), table['baselinePsnr'].mean(), table['epeRefined'].mean(), table['epeGlobal'].mean()), file=sys.stderr)
    return 0


def get_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument('--verbose', action='store_true', help='debug logging')
    shared.add_argument('--config', help='flat "dotted.key = value" configuration file')
    shared.add_argument('--toy', action='store_true', help='start from the small unit-test widths instead of the defaults')

    parser = argparse.ArgumentParser(prog='bimotion', description='Bilateral motion estimation and frame interpolation.')
    commands = parser.add_subparsers(dest='command', required=True)

    interpolate = commands.add_parser('interpolate', parents=[shared], help='synthesize the middle frame')
    interpolate.add_argument('--frame0', required=True)
    interpolate.add_argument('--frame1', required=True)
    interpolate.add_argument('--out', required=True)
    interpolate.add_argument('--dump-flow', dest='dump_flow')
    interpolate.add_argument('--dump-flow-vis', dest='dump_flow_vis')
    interpolate.add_argument('--weights')
    interpolate.set_defaults(handler=cmd_interpolate)

    flow = commands.add_parser('flow', parents=[shared], help='estimate the 1/2-scale motion field V_t->1 only')
    flow.add_argument('--frame0', required=True)
    flow.add_argument('--frame1', required=True)
    flow.add_argument('--out', required=True, help='.flo output')
    flow.add_argument('--dump-global', dest='dump_global', help='.flo output of the 1/8-scale global field')
    flow.add_argument('--vis', help='color-coded PNG of the field')
    flow.add_argument('--weights')
    flow.set_defaults(handler=cmd_flow)

    train = commands.add_parser('train-toy', parents=[shared], help='train on synthetic translations')
    train.add_argument('--phase', choices=['global', 'refine'], required=True)
    train.add_argument('--iters', type=int, default=2000)
    train.add_argument('--seed', type=int, default=0)
    train.add_argument('--out', required=True, help='.bimw weight output')
    train.add_argument('--weights', help='starting weights (phase 2 needs the trained global stage)')
    train.add_argument('--unfreeze', action='store_true', help='also update the global stage in phase 2')
    train.add_argument('--log', help='CSV of the training logbook')
    train.add_argument('--log-every', dest='log_every', type=int, default=50)
    train.set_defaults(handler=cmd_train_toy)

    gradcheck = commands.add_parser('gradcheck', parents=[shared], help='finite-difference gradient suite')
    gradcheck.add_argument('--module', choices=MODULES)
    gradcheck.add_argument('--seeds', type=int, default=3)
    gradcheck.add_argument('--inject-fault', dest='inject_fault', help='op whose backward gradients get a +10%% bias')
    gradcheck.set_defaults(handler=cmd_gradcheck)

    bench = commands.add_parser('bench', parents=[shared], help='cost-volume storage or pipeline timing')
    bench.add_argument('--mode', choices=['costvol', 'pipeline'], required=True)
    bench.add_argument('--sizes', type=int, nargs='+', default=[128])
    bench.add_argument('--seed', type=int, default=0)
    bench.set_defaults(handler=cmd_bench)

    evaluate = commands.add_parser('evaluate', parents=[shared], help='PSNR, SSIM and EPE on held-out synthetic samples')
    evaluate.add_argument('--weights')
    evaluate.add_argument('--samples', type=int, default=50)
    evaluate.add_argument('--seed', type=int, default=1)
    evaluate.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = get_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except DOMAIN_ERRORS as error:
        message = str(error)
        if not message.startswith('InputError:'):
            message = 'InputError: ' + message
        print(message, file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == '__main__':
    sys.exit(main())
