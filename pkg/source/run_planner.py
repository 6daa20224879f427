#!/usr/bin/env python3
"""
Closed-loop planner runs from the command line.

Exit codes:
    0 = every run finished without collision and all reports were written
    1 = collision, EV left the route, or invalid configuration/scenario
    2 = unexpected error (including unwritable output)
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from source.config.loader import CONFIG_PATH, apply_overrides, load_config, parse_lattice  # noqa: E402
from source.config.validator import validate_config, validate_schema  # noqa: E402
from source.evaluation import evaluate_batch, summary_from_log  # noqa: E402
from source.reporting.reports import emit_reports, write_batch_summary  # noqa: E402
from source.simulation.engine import STATUS_COLLISION, STATUS_OFF_ROUTE, RunLog, run_closed_loop  # noqa: E402
from source.simulation.scenario import ScenarioParseError, discover_scenarios, parse_scenario  # noqa: E402
from source.storage.manager import ResultsDatabase  # noqa: E402
from source.utils.logging import run_context, setup_logging  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_ERROR = 2


def parse_steps(text: str) -> List[int]:
    """'0,10,20' -> [0, 10, 20]"""
    try:
        steps = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Steps must be comma-separated integers, got '{text}'") from None
    if any(k < 0 for k in steps):
        raise argparse.ArgumentTypeError("Steps must be >= 0")
    return steps


def _lattice_arg(text: str) -> List[int]:
    try:
        return parse_lattice(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Run the fluid-flow motion planner on driving scenarios',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # One scenario with plots
  python source/run_planner.py --scenario scenarios/a1.yaml --output output/a1 --plots on

  # All bundled scenarios, KPI table with an AVERAGE row
  python source/run_planner.py --batch scenarios --output output/batch

  # Small lattice, keep the fields of steps 0 and 10 for inspection
  python source/run_planner.py --scenario scenarios/d1.yaml --lattice 64x32x32 --oracle-dump 0,10
        """
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--scenario', help='Path to one scenario file')
    source.add_argument('--batch', help='Directory of scenario files, run in name order')
    parser.add_argument('--output', default=None, help='Output directory (default: output.directory)')
    parser.add_argument('--config', default=CONFIG_PATH, help='Path to config file')
    parser.add_argument('--seed', type=int, default=None, help='Seed for the porous lane-marking pattern')
    parser.add_argument('--lattice', type=_lattice_arg, default=None, help='Lattice dimensions NxMxK')
    parser.add_argument('--candidates', type=int, default=None, help='Number of sampled trajectories')
    parser.add_argument('--horizon', type=float, default=None, help='Planning horizon in seconds')
    parser.add_argument('--plots', choices=('on', 'off'), default=None, help='Write SVG plots')
    parser.add_argument('--oracle-dump', type=parse_steps, nargs='?', const=[0], default=None,
                        metavar='STEPS', help='Dump lattice fields for these steps (default: 0)')
    parser.add_argument('--archive', action='store_true', help='Store run summaries in the results database')
    parser.add_argument('--label', default='', help='Run label used by the results archive')
    return parser


def prepare_config(args: argparse.Namespace) -> dict:
    """Load, override and validate the configuration.

    Raises:
        ValueError: configuration errors, one per line
    """
    config = load_config(args.config)
    config = apply_overrides(
        config,
        lattice=args.lattice,
        candidates=args.candidates,
        seed=args.seed,
        horizon=args.horizon,
        plots=None if args.plots is None else args.plots == 'on',
    )
    errors = validate_schema(config)
    if not errors:
        errors = validate_config(config)
    if errors:
        raise ValueError("\n".join(errors))
    return config


def archive_runs(logs: Sequence[RunLog], config: dict, label: str, output_dir: Path):
    db_path = config.get('storage', {}).get('database_path', 'data/runs.db')
    db_dir = os.path.dirname(db_path)
    if db_dir:
        os.makedirs(db_dir, exist_ok=True)
    with ResultsDatabase(db_path, config) as db:
        for log in logs:
            db.archive(log, run_label=label,
                       lattice=config.get('domain', {}).get('lattice'),
                       candidates=config.get('sampler', {}).get('candidates'),
                       output_dir=str(output_dir))


def run_one(scenario_path, config: dict, output_dir: Path, dump_steps: Sequence[int]) -> RunLog:
    spec = parse_scenario(scenario_path)
    with run_context(spec.scenario_id):
        log = run_closed_loop(spec, config, dump_steps=dump_steps)
        emit_reports(log, output_dir, config)
    return log


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        config = prepare_config(args)
    except FileNotFoundError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as e:
        print(f"❌ Invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_FAILURE

    setup_logging(config)
    output_dir = Path(args.output or config.get('output', {}).get('directory', 'output'))
    dump_steps = args.oracle_dump or []

    try:
        if args.batch:
            paths = discover_scenarios(args.batch)
            if not paths:
                logger.error(f"No scenario files in {args.batch}")
                return EXIT_FAILURE
            logs = [run_one(p, config, output_dir / p.stem, dump_steps) for p in paths]
            write_batch_summary(logs, output_dir)
            evaluate_batch([summary_from_log(log) for log in logs],
                           str(output_dir / 'evaluation_results.json'), config)
        else:
            logs = [run_one(args.scenario, config, output_dir, dump_steps)]

        if args.archive or config.get('storage', {}).get('enabled', False):
            archive_runs(logs, config, args.label, output_dir)

    except (ScenarioParseError, FileNotFoundError) as e:
        logger.error(f"Scenario error: {e}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_ERROR

    failed = [log for log in logs if log.status in (STATUS_COLLISION, STATUS_OFF_ROUTE)]
    for log in logs:
        icon = "❌" if log.status in (STATUS_COLLISION, STATUS_OFF_ROUTE) else "✅"
        kpis = log.kpis
        print(f"{icon} {log.scenario_id}: {log.status}, {len(log.records)} steps"
              + (f", K_s={kpis['K_s']:.3f} 1/s, K_c={kpis['K_c']:.4f} g, K_f={kpis['K_f']:.2f}"
                 if kpis else ""))
    print(f"Reports written to {output_dir}")
    return EXIT_FAILURE if failed else EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
