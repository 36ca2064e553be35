"""
modcomb CLI - Run, list and validate model-combination experiments
"""
import argparse
import json
import logging
import sys
import time
import uuid
from typing import List, Optional

from dotenv import load_dotenv

from modcomb import __version__
from modcomb.errors import ConfigError, ModcombError
from modcomb.experiments import EXPERIMENTS
from modcomb.experiments.config import ExperimentConfig, apply_overrides, dump_config, load_config
from modcomb.utils.exporters import emit_summary
from modcomb.utils.report_generator import generate_report
from modcomb.utils.run_logger import log_event

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _fail(code: int, error: str, details: str) -> int:
    """Error payload on stderr, same shape as the service error responses"""
    print(json.dumps({'error': error, 'details': details}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='modcomb', description='Non-intrusive iterative model combination')
    parser.add_argument('--version', action='version', version=f"modcomb {__version__}")
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run an experiment from a YAML config')
    run.add_argument('config')
    run.add_argument('--seed', type=int, default=None)
    run.add_argument('--out', default=None, help='output directory')

    sub.add_parser('list-experiments', help='list experiment ids')

    validate = sub.add_parser('validate', help='validate a config and print it normalized')
    validate.add_argument('config')
    return parser


def run_experiment(config: ExperimentConfig) -> int:
    """Run one configured experiment, write its artifacts and return the exit status"""
    run_id = uuid.uuid4().hex[:12]
    runner, _ = EXPERIMENTS[config.experiment]
    log_event(run_id, 'run_started', {'experiment': config.experiment, 'seed': config.seed,
                                       'output_dir': config.output_dir})
    started = time.perf_counter()
    try:
        results = runner(config)
        written = emit_summary(results, config.output_dir)
        if config.report_pdf:
            written.append(generate_report(results, config.output_dir))
    except ModcombError as e:
        log_event(run_id, 'run_failed', {'error': type(e).__name__, 'details': str(e)})
        return _fail(EXIT_RUNTIME, 'Experiment failed', str(e))
    except OSError as e:
        log_event(run_id, 'run_failed', {'error': type(e).__name__, 'details': str(e)})
        return _fail(EXIT_RUNTIME, 'Cannot write artifacts', str(e))
    except Exception as e:
        logger.exception("Unexpected failure in %s", config.experiment)
        log_event(run_id, 'run_failed', {'error': type(e).__name__, 'details': str(e)})
        return _fail(EXIT_RUNTIME, 'Experiment failed', f"{type(e).__name__}: {e}")

    duration = time.perf_counter() - started
    log_event(run_id, 'run_finished', {'files': written, 'duration_s': round(duration, 3)})
    print(f"{config.experiment}: wrote {len(written)} files to {config.output_dir} ({duration:.1f} s)")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = apply_overrides(load_config(args.config), seed=args.seed, output_dir=args.out)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, 'Invalid configuration', str(e))
    return run_experiment(config)


def cmd_list() -> int:
    for name in sorted(EXPERIMENTS):
        print(f"{name:<20} {EXPERIMENTS[name][1]}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        config = apply_overrides(load_config(args.config))
    except ConfigError as e:
        return _fail(EXIT_CONFIG, 'Invalid configuration', str(e))
    print(dump_config(config), end='')
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )

    if args.command == 'run':
        return cmd_run(args)
    if args.command == 'list-experiments':
        return cmd_list()
    return cmd_validate(args)


if __name__ == '__main__':
    sys.exit(main())
