#!/usr/bin/env python3
"""
Run Archive with WAL Mode and Retry Logic

Keeps one row of KPIs per closed-loop run so batches from different
configurations can be compared later. Batch workers may share one file.
"""

import logging
import sqlite3
import time
from typing import Optional

from .schema import SCHEMA_SQL

DB_PATH = "data/runs.db"
logger = logging.getLogger(__name__)

RUN_COLUMNS = (
    'scenario_id', 'seed', 'run_label', 'status', 'steps', 'emergency_steps',
    'k_safety', 'k_comfort', 'k_feasibility', 'mean_abs_force', 'progress',
    'plan_time_mean_ms', 'plan_time_max_ms', 'lattice', 'candidates', 'output_dir',
)


def run_row(log, run_label: str = '', lattice=None, candidates: Optional[int] = None,
            output_dir: Optional[str] = None) -> dict:
    """Flatten a RunLog into a runs-table row."""
    kpis = log.kpis or {}
    timing = log.timing_summary()
    return {
        'scenario_id': log.scenario_id,
        'seed': log.seed,
        'run_label': run_label,
        'status': log.status,
        'steps': len(log.records),
        'emergency_steps': log.emergency_steps,
        'k_safety': kpis.get('K_s'),
        'k_comfort': kpis.get('K_c'),
        'k_feasibility': kpis.get('K_f'),
        'mean_abs_force': kpis.get('mean_abs_F'),
        'progress': kpis.get('progress'),
        'plan_time_mean_ms': timing['plan_time_mean'] if log.records else None,
        'plan_time_max_ms': timing['plan_time_max'] if log.records else None,
        'lattice': 'x'.join(str(n) for n in lattice) if lattice else None,
        'candidates': candidates,
        'output_dir': str(output_dir) if output_dir is not None else None,
    }


class ResultsDatabase:
    """
    SQLite archive of run summaries.

    Features:
    - Write-Ahead Logging (WAL) mode so reports can be queried during a batch
    - Exponential backoff retry for transient lock errors
    - Duplicate (scenario, seed, run label) rows are skipped, not overwritten
    - Context manager protocol for automatic resource cleanup
    """

    def __init__(self, db_path: str = None, config: dict = None):
        """
        Initialize the archive.

        Args:
            db_path: Path to SQLite database file (defaults to storage.database_path)
            config: Configuration dictionary with retry and WAL settings
        """
        self.config = config or {}
        storage_config = self.config.get('storage', {})
        self.db_path = db_path or storage_config.get('database_path', DB_PATH)
        self.enable_wal = storage_config.get('enable_wal_mode', True)
        self.retry_max_attempts = storage_config.get('retry_max_attempts', 3)
        self.retry_base_delay = storage_config.get('retry_base_delay', 1.0)
        self.busy_timeout_ms = storage_config.get('busy_timeout_ms', 5000)
        self.conn = None

        self._connect()

    def _connect(self):
        """Open the connection, set WAL mode and create the schema."""
        self.conn = sqlite3.connect(self.db_path, timeout=self.busy_timeout_ms / 1000.0)
        self.conn.row_factory = sqlite3.Row
        if self.enable_wal:
            self.conn.execute("PRAGMA journal_mode=WAL")
            logger.debug("WAL mode enabled for run archive")
        self.conn.executescript(SCHEMA_SQL)
        self.conn.commit()

    def insert_run(self, row: dict, max_retries: int = None) -> bool:
        """
        Insert one run summary.

        Args:
            row: Column values, see RUN_COLUMNS
            max_retries: Attempts for database locked errors (uses config if None)

        Returns:
            bool: True if inserted, False if the run was already archived
        """
        if max_retries is None:
            max_retries = self.retry_max_attempts
        unknown = set(row) - set(RUN_COLUMNS)
        if unknown:
            raise ValueError(f"Unknown run columns: {sorted(unknown)}")

        keys = ', '.join(row.keys())
        placeholders = ', '.join(['?' for _ in row])
        sql = f"INSERT INTO runs ({keys}) VALUES ({placeholders})"

        for attempt in range(1, max_retries + 1):
            try:
                self.conn.execute(sql, tuple(row.values()))
                self.conn.commit()
                if attempt > 1:
                    logger.info(f"Insert succeeded on retry attempt {attempt}")
                return True

            except sqlite3.IntegrityError as e:
                if "UNIQUE constraint failed" in str(e):
                    logger.info(f"Run {row.get('scenario_id')} seed {row.get('seed')} "
                                f"already archived, skipping")
                    return False
                raise

            except sqlite3.OperationalError as e:
                if "database is locked" in str(e) and attempt < max_retries:
                    wait_time = self.retry_base_delay * (2 ** (attempt - 1))
                    logger.warning(
                        f"Database locked (attempt {attempt}/{max_retries}), "
                        f"retrying in {wait_time}s..."
                    )
                    time.sleep(wait_time)
                    continue
                logger.error(f"Database operation failed after {attempt} attempts: {e}")
                raise

        return False

    def archive(self, log, **kwargs) -> bool:
        """Shorthand for insert_run(run_row(log, ...))."""
        return self.insert_run(run_row(log, **kwargs))

    def query_runs(self, scenario_id: Optional[str] = None, status: Optional[str] = None) -> list:
        """Rows as dicts, oldest first."""
        sql = "SELECT * FROM runs"
        clauses, params = [], []
        if scenario_id is not None:
            clauses.append("scenario_id = ?")
            params.append(scenario_id)
        if status is not None:
            clauses.append("status = ?")
            params.append(status)
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY id"
        return [dict(r) for r in self.conn.execute(sql, params).fetchall()]

    def journal_mode(self) -> str:
        return self.conn.execute("PRAGMA journal_mode").fetchone()[0]

    def __enter__(self):
        """Context manager entry."""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit - ensure connection is closed."""
        self.close()
        return False  # Don't suppress exceptions

    def close(self):
        """Close database connection."""
        if self.conn:
            self.conn.close()
            self.conn = None
            logger.debug("Database connection closed")
