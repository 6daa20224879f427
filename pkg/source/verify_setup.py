#!/usr/bin/env python3
"""
System Health Check for the Fluid Motion Planner

Validates:
- Configuration file (config.yaml) parses and validates
- Bundled scenario files parse
- A 16x16x16 smoke solve converges
- Output directory is writable
- numba import (optional, reported only)

Exit codes:
    0 = All checks passed (system healthy)
    1 = One or more checks failed
    2 = Critical error (import failure, unexpected exception)

Usage:
    python source/verify_setup.py

    # Run before a batch
    python source/verify_setup.py && python source/run_planner.py --batch scenarios
"""

import logging
import os
import sys
import tempfile
from datetime import datetime
from typing import Tuple

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from source.config.loader import CONFIG_PATH, load_config  # noqa: E402
from source.config.validator import validate_config, validate_schema  # noqa: E402

# Setup basic logging
logging.basicConfig(
    level=logging.INFO,
    format='%(message)s'
)
logger = logging.getLogger(__name__)

SCENARIO_DIR = "scenarios"
SMOKE_LATTICE = (16, 16, 16)


class HealthCheck:
    """System health check coordinator."""

    def __init__(self, config_path: str = CONFIG_PATH, scenario_dir: str = SCENARIO_DIR):
        self.config_path = config_path
        self.scenario_dir = scenario_dir
        self.results = []
        self.start_time = None

    def run_all_checks(self) -> int:
        """
        Run all health checks.

        Returns:
            int: Exit code (0 = success, 1 = failure)
        """
        self.start_time = datetime.now()

        logger.info("=" * 60)
        logger.info("SYSTEM HEALTH CHECK")
        logger.info("=" * 60)
        logger.info("")

        checks = [
            ("Configuration", self.check_config),
            ("Scenarios", self.check_scenarios),
            ("LBM smoke solve", self.check_smoke_solve),
            ("Output directory", self.check_output_dir),
            ("numba", self.check_numba),
        ]

        for component, check_fn in checks:
            try:
                success, message = check_fn()
                self.results.append((component, success, message))

                status_icon = "✅" if success else "❌"
                logger.info(f"{status_icon} {component}: {'PASS' if success else 'FAIL'}")
                logger.info(f"   {message}")
                logger.info("")

            except Exception as e:
                self.results.append((component, False, f"Unexpected error: {e}"))
                logger.info(f"❌ {component}: FAIL")
                logger.info(f"   Unexpected error: {e}")
                logger.info("")

        logger.info("=" * 60)
        passed = sum(1 for _, success, _ in self.results if success)
        total = len(self.results)

        if passed == total:
            logger.info("OVERALL STATUS: HEALTHY")
            logger.info(f"All {total} checks passed")
        else:
            logger.info("OVERALL STATUS: UNHEALTHY")
            logger.info(f"{passed}/{total} checks passed, {total - passed} failed")

        elapsed = (datetime.now() - self.start_time).total_seconds()
        logger.info(f"Completed in {elapsed:.1f}s")
        logger.info("=" * 60)

        return 0 if passed == total else 1

    def _config(self) -> dict:
        return load_config(self.config_path)

    def check_config(self) -> Tuple[bool, str]:
        """Validate config.yaml exists, has the required sections and valid values."""
        if not os.path.exists(self.config_path):
            return False, f"Config file not found: {self.config_path}"
        try:
            config = self._config()
        except Exception as e:
            return False, f"Invalid YAML: {e}"

        errors = validate_schema(config)
        if not errors:
            errors = validate_config(config)
        if errors:
            return False, "; ".join(errors)
        return True, "Config file valid, all required sections present"

    def check_scenarios(self) -> Tuple[bool, str]:
        """Every bundled scenario file parses."""
        from source.simulation.scenario import ScenarioParseError, discover_scenarios, parse_scenario

        try:
            files = discover_scenarios(self.scenario_dir)
        except FileNotFoundError as e:
            return False, str(e)
        if not files:
            return False, f"No scenario files in {self.scenario_dir}"

        failures = []
        for path in files:
            try:
                parse_scenario(path)
            except ScenarioParseError as e:
                failures.append(f"{path.name}: {e}")
        if failures:
            return False, "; ".join(failures)
        return True, f"{len(files)} scenario file(s) parsed"

    def check_smoke_solve(self) -> Tuple[bool, str]:
        """Empty straight road on a small lattice must converge."""
        from source.fluid.domain import DomainConfig, build_domain
        from source.fluid.solver import LbmSolver
        from source.geometry.frenet import build_reference_path
        from source.vehicle.dynamics import VehicleState

        try:
            config = self._config()
        except Exception:
            config = {}
        n_s, n_d, n_t = SMOKE_LATTICE
        cfg = DomainConfig(s_e=64.0, n_s=n_s, n_d=n_d, n_t=n_t, s_behind=8.0, nominal_speed=15.0)
        path = build_reference_path([(-20.0, 0.0), (100.0, 0.0)])
        domain = build_domain(path, VehicleState(x=0.0, y=0.0, psi=0.0, u=15.0), [], [], cfg)
        _, report, _ = LbmSolver(config).solve(domain)
        if not report.converged:
            return False, (f"Smoke solve did not converge in {report.iterations} iterations "
                           f"(residual {report.residual_mps:.4f} m/s)")
        return True, (f"Converged in {report.iterations} iteration(s), "
                      f"{report.mlups:.2f} MLUPS ({report.backend} backend)")

    def check_output_dir(self) -> Tuple[bool, str]:
        """Output directory can be created and written."""
        try:
            output_dir = self._config().get('output', {}).get('directory', 'output')
        except Exception:
            output_dir = 'output'
        try:
            os.makedirs(output_dir, exist_ok=True)
            with tempfile.NamedTemporaryFile(dir=output_dir, prefix='.health_check_'):
                pass
        except OSError as e:
            return False, f"Output directory {output_dir} not writable: {e}"
        return True, f"Output directory {output_dir} writable"

    def check_numba(self) -> Tuple[bool, str]:
        """numba is optional; the numpy backend is used without it."""
        try:
            import numba
        except ImportError:
            return True, "numba not installed, numpy lattice backend will be used"
        return True, f"numba {numba.__version__} available"


def main():
    """Main entry point."""
    try:
        checker = HealthCheck()
        exit_code = checker.run_all_checks()
        sys.exit(exit_code)
    except KeyboardInterrupt:
        logger.info("\nHealth check interrupted by user")
        sys.exit(2)
    except Exception as e:
        logger.error(f"\n❌ CRITICAL ERROR: {e}")
        sys.exit(2)


if __name__ == '__main__':
    main()
