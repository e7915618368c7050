"""Command-line interface for the source separation toolkit."""

import argparse
import logging
import sys
from pathlib import Path
from app.config import settings
from app.errors import ConfigError, SeparationError
from app.services.experiment import dump_model, experiment_runner
from app.storage.report_store import comparison_table, scores_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

logger = logging.getLogger(__name__)


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def _fail(error: Exception) -> None:
    if isinstance(error, ConfigError):
        print(f"❌ Config error: {error}")
        sys.exit(EXIT_CONFIG)
    print(f"❌ Error: {error}")
    sys.exit(EXIT_RUNTIME)


def _load(args):
    return experiment_runner.load_config(
        args.config, preset=args.preset, seed=args.seed, out=args.out
    )


def synth_command(args):
    """Handle synth command."""
    try:
        out_dir = args.out or settings.output_dir
        paths = experiment_runner.synth(args.config, out_dir)
        print(f"✅ Wrote {len(paths)} sources to {out_dir}")
        for path in paths:
            print(f"   {path}")
    except (SeparationError, OSError) as e:
        _fail(e)


def run_command(args):
    """Handle run command."""
    try:
        cfg = _load(args)
        report, run_dir = experiment_runner.run(cfg)
    except (SeparationError, OSError) as e:
        _fail(e)

    print(f"✅ {report.mode} run finished: {run_dir}")
    print(scores_table(report.scores, report.average).to_string(index=False))
    for j, tuned in enumerate(report.tuned):
        print(f"   source {j}: gamma*={tuned.gamma:g} mu*={tuned.mu:g}")


def compare_command(args):
    """Handle compare command."""
    try:
        cfg = _load(args)
        comparison, out_dir = experiment_runner.compare(cfg)
    except (SeparationError, OSError) as e:
        _fail(e)

    table = comparison_table(comparison)
    print(f"✅ Comparison written to {out_dir}")
    print(table.to_string(index=False))
    sir_gap = comparison.df_dnn.average.sir_db - comparison.joint.average.sir_db
    print(f"   |SIR difference| = {abs(sir_gap):.3f} dB")


def eval_command(args):
    """Handle eval command."""
    try:
        summary = experiment_runner.evaluate(args.estimates, args.references)
    except (SeparationError, OSError) as e:
        _fail(e)

    table = scores_table(summary.per_source, summary.average)
    print(table.to_string(index=False))
    if args.out:
        path = Path(args.out) / "scores.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format=settings.float_format)
        print(f"✅ Scores written to {path}")


def inspect_trace_command(args):
    """Handle inspect-trace command."""
    try:
        trace, table, checks = experiment_runner.inspect_trace(
            args.trace, num_sources=args.sources, rs_min=args.rs_min
        )
    except (SeparationError, OSError) as e:
        _fail(e)

    print(dump_model(trace) if args.yaml else table.to_string(index=False))
    print(f"chosen gamma: {trace.chosen_gamma}  chosen mu: {trace.chosen_mu}"
          f"{'  (mu set exhausted)' if trace.mu_exhausted else ''}")
    for name, passed in checks.items():
        print(f"{'✅' if passed else '❌'} {name}")
    if not all(checks.values()):
        sys.exit(EXIT_RUNTIME)


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', required=True, help='Experiment YAML file')
    parser.add_argument('--seed', type=int, help='Override base_seed')
    parser.add_argument('--out', help='Override output_dir')
    parser.add_argument('--preset', choices=['desk', 'timit-like', 'tsp-like'],
                        help='Preset providing STFT/architecture/training defaults')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dfdnn',
        description="One-source-at-a-time source separation CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --config configs/synth_two_source.yaml --out data
  %(prog)s run --config configs/desk_two_source.yaml --seed 42
  %(prog)s compare --config configs/desk_two_source.yaml
  %(prog)s eval --estimates est0.wav est1.wav --references ref0.wav ref1.wav
  %(prog)s inspect-trace runs/df-dnn-seed42-*/trace_0.yaml --sources 2
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    synth_parser = subparsers.add_parser('synth', help='Write synthetic source WAVs')
    synth_parser.add_argument('--config', required=True, help='Synth spec YAML file')
    synth_parser.add_argument('--out', help='Output directory')
    synth_parser.set_defaults(func=synth_command)

    run_parser = subparsers.add_parser('run', help='Train, separate and score')
    _add_experiment_flags(run_parser)
    run_parser.set_defaults(func=run_command)

    compare_parser = subparsers.add_parser('compare', help='DF-DNN vs joint masking')
    _add_experiment_flags(compare_parser)
    compare_parser.set_defaults(func=compare_command)

    eval_parser = subparsers.add_parser('eval', help='Score existing estimate WAVs')
    eval_parser.add_argument('--estimates', nargs='+', required=True)
    eval_parser.add_argument('--references', nargs='+', required=True)
    eval_parser.add_argument('--out', help='Directory for scores.csv')
    eval_parser.set_defaults(func=eval_command)

    trace_parser = subparsers.add_parser('inspect-trace', help='Pretty-print a tuning trace')
    trace_parser.add_argument('trace', help='trace_<j>.yaml file')
    trace_parser.add_argument('--sources', type=int, help='L, to re-check the mu stop rule')
    trace_parser.add_argument('--rs-min', type=float, default=8.0)
    trace_parser.add_argument('--yaml', action='store_true', help='Print the raw YAML')
    trace_parser.set_defaults(func=inspect_trace_command)

    return parser


def main(argv=None):
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_CONFIG)

    _configure_logging()
    args.func(args)
    return EXIT_OK


if __name__ == "__main__":
    main()
