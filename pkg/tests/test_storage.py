import sqlite3
from unittest.mock import MagicMock, patch

import pytest

from source.simulation.engine import STATUS_COLLISION, STATUS_COMPLETED, RunLog, StepRecord
from source.storage.manager import RUN_COLUMNS, ResultsDatabase, run_row


def sample_config():
    return {
        'storage': {
            'enable_wal_mode': True,
            'retry_max_attempts': 3,
            'retry_base_delay': 0.01,
            'busy_timeout_ms': 100,
        }
    }


def sample_log(scenario_id='a1', seed=0, status=STATUS_COMPLETED):
    record = StepRecord(step=0, t=0.0, ev={'x': 0.0, 'y': 0.0, 'psi': 0.0, 'u': 15.0, 'v': 0.0, 'r': 0.0},
                        ev_vx=15.0, ev_vy=0.0, s=40.0, d=0.0, F_x=0.0, delta_f=0.0,
                        force_saturated=False, steer_saturated=False, a_lon=0.0, a_lat=0.0,
                        timing={'total_ms': 42.0})
    log = RunLog(scenario_id=scenario_id, seed=seed, status=status, records=[record])
    log.kpis = {'K_s': 0.2, 'K_c': 0.01, 'K_f': 1.0, 'mean_abs_F': 0.0, 'progress': 0.5}
    return log


@pytest.fixture
def db(tmp_path):
    with ResultsDatabase(str(tmp_path / 'runs.db'), sample_config()) as database:
        yield database


class TestRunRow:
    """RunLog flattening."""

    def test_columns(self):
        row = run_row(sample_log(), run_label='base', lattice=[64, 32, 32], candidates=15)
        assert set(row) == set(RUN_COLUMNS)
        assert row['lattice'] == '64x32x32'
        assert row['k_safety'] == 0.2
        assert row['plan_time_mean_ms'] == 42.0

    def test_run_without_steps(self):
        row = run_row(RunLog(scenario_id='a1', seed=0, status=STATUS_COLLISION))
        assert row['steps'] == 0
        assert row['k_safety'] is None
        assert row['plan_time_max_ms'] is None


class TestResultsDatabase:
    """Archive inserts, duplicates and queries."""

    def test_wal_mode(self, db):
        assert db.journal_mode() == 'wal'

    def test_archive_and_query(self, db):
        assert db.archive(sample_log('a1'), run_label='base') is True
        assert db.archive(sample_log('b1', status=STATUS_COLLISION), run_label='base') is True
        rows = db.query_runs()
        assert [r['scenario_id'] for r in rows] == ['a1', 'b1']
        assert db.query_runs(status=STATUS_COLLISION)[0]['scenario_id'] == 'b1'
        assert db.query_runs(scenario_id='a1')[0]['k_comfort'] == pytest.approx(0.01)

    def test_duplicate_skipped(self, db):
        assert db.archive(sample_log(), run_label='base') is True
        assert db.archive(sample_log(), run_label='base') is False
        assert db.archive(sample_log(), run_label='other') is True
        assert len(db.query_runs()) == 2

    def test_unknown_column_rejected(self, db):
        with pytest.raises(ValueError, match="Unknown run columns"):
            db.insert_run({'scenario_id': 'a1', 'seed': 0, 'status': STATUS_COMPLETED, 'color': 'red'})

    def test_invalid_status_rejected(self, db):
        with pytest.raises(sqlite3.IntegrityError):
            db.insert_run({'scenario_id': 'a1', 'seed': 0, 'status': 'crashed', 'steps': 0,
                           'emergency_steps': 0})

    def test_locked_database_retried(self, db):
        conn = MagicMock()
        conn.execute.side_effect = [sqlite3.OperationalError("database is locked"), None]
        db.conn, real = conn, db.conn
        try:
            with patch('source.storage.manager.time.sleep') as sleep:
                assert db.insert_run(run_row(sample_log())) is True
            sleep.assert_called_once_with(0.01)
        finally:
            db.conn = real

    def test_locked_database_gives_up(self, db):
        conn = MagicMock()
        conn.execute.side_effect = sqlite3.OperationalError("database is locked")
        db.conn, real = conn, db.conn
        try:
            with patch('source.storage.manager.time.sleep'):
                with pytest.raises(sqlite3.OperationalError):
                    db.insert_run(run_row(sample_log()))
            assert conn.execute.call_count == 3
        finally:
            db.conn = real

    def test_close(self, tmp_path):
        database = ResultsDatabase(str(tmp_path / 'runs.db'), sample_config())
        database.close()
        assert database.conn is None
