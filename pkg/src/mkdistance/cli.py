"""
Command line front end.

    mkdistance experiment --config <path> [--seed N] [--workers N] [--out DIR]
    mkdistance distance --metric {euclidean|tangent|kantorovich} A B [--no-normalize]
    mkdistance verify [--seed N] [--instances N] [--triples N]

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""
import argparse
import logging
import sys

from mkdistance.distances import DistanceKind
from mkdistance.distances import TangentConfig
from mkdistance.distances import euclidean
from mkdistance.distances import kantorovich
from mkdistance.distances import tangent_distance
from mkdistance.exceptions import ConfigError
from mkdistance.exceptions import MKDistanceError
from mkdistance.experiment import ExperimentConfig
from mkdistance.experiment import format_table
from mkdistance.experiment import run_experiment
from mkdistance.experiment import summary_frame
from mkdistance.measures import normalize_image
from mkdistance.mnist_io import read_image
from mkdistance.transport import PivotRule
from mkdistance.transport import SolverOptions
from mkdistance.transport import verify_optimality
from mkdistance.verification import run_verification

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFICATION = 3


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='mkdistance',
                             description='Monge-Kantorovich transport distance between images and a 1-NN benchmark.')
    parser.add_argument('-v', '--verbose', action='store_true', help='log at DEBUG level')
    commands = parser.add_subparsers(dest='command', required=True)

    experiment = commands.add_parser('experiment', help='run the nearest neighbour accuracy experiment')
    experiment.add_argument('--config', required=True, help='flat key = value configuration file')
    experiment.add_argument('--seed', type=int)
    experiment.add_argument('--workers', type=int)
    experiment.add_argument('--out', dest='output_dir', help='output directory')
    experiment.set_defaults(handler=cmd_experiment)

    distance = commands.add_parser('distance', help='distance between two images')
    distance.add_argument('--metric', required=True, choices=[kind.value for kind in DistanceKind])
    distance.add_argument('image_a', help='PGM file, or IDX image file with --index-a')
    distance.add_argument('image_b', help='PGM file, or IDX image file with --index-b')
    distance.add_argument('--index-a', type=int, default=0, help='image index within an IDX file')
    distance.add_argument('--index-b', type=int, default=0, help='image index within an IDX file')
    distance.add_argument('--no-normalize', action='store_true', help='compare raw intensities')
    distance.add_argument('--pivot-rule', choices=[rule.value for rule in PivotRule], default='most_negative')
    distance.add_argument('--smoothing-sigma', type=float, default=1.0, help='tangent distance smoothing')
    distance.set_defaults(handler=cmd_distance)

    verify = commands.add_parser('verify', help='check the transport solver against an exhaustive oracle')
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--instances', type=int, default=500, help='random problems for the oracle check')
    verify.add_argument('--triples', type=int, default=200, help='random triples for the metric axioms')
    verify.set_defaults(handler=cmd_verify)
    return parser


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_file(args.config, seed=args.seed, workers=args.workers, output_dir=args.output_dir)
    _, summary = run_experiment(cfg)
    print(format_table(summary_frame(summary)), end='')
    print(f"Results written to {cfg.output_dir}")
    return EXIT_OK


def cmd_distance(args) -> int:
    """
    Prints the distance with 12 significant digits, and the optimality certificate for Kantorovich
    """
    a = read_image(args.image_a, args.index_a)
    b = read_image(args.image_b, args.index_b)
    kind = DistanceKind(args.metric)
    if kind is DistanceKind.KANTOROVICH:
        opts = SolverOptions(pivot_rule=PivotRule(args.pivot_rule))
        result = kantorovich(a, b, opts, normalize=not args.no_normalize)
    else:
        if not args.no_normalize:
            a, b = normalize_image(a), normalize_image(b)
        if kind is DistanceKind.EUCLIDEAN:
            result = euclidean(a, b)
        else:
            result = tangent_distance(a, b, TangentConfig(smoothing_sigma=args.smoothing_sigma))
    print(f"{kind.value}: {result.value:.12g}")
    if result.plan is not None:
        report = verify_optimality(result.plan, result.cost)
        print(f"iterations: {result.plan.iterations}")
        print(f"status: {result.plan.status.value}")
        print(f"max_dual_violation: {report.max_dual_violation:.3e}")
        print(f"max_slackness_residual: {report.max_slackness_residual:.3e}")
        print(f"max_marginal_residual: {report.max_marginal_residual:.3e}")
        print(f"duality_gap: {report.duality_gap:.3e}")
        print(f"certificate: {'passed' if report.passed else 'FAILED'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_verification(seed=args.seed, instances=args.instances, triples=args.triples)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    return EXIT_OK if all(result.passed for result in results) else EXIT_VERIFICATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"mkdistance: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MKDistanceError, OSError) as e:
        print(f"mkdistance: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
