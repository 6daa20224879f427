import argparse
import csv
import shutil
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

from source.run_planner import build_parser, main, parse_steps
from source.simulation.engine import (
    STATUS_COLLISION,
    STATUS_COMPLETED,
    STATUS_TIMEOUT,
    RunLog,
    StepRecord,
)
from source.storage.manager import ResultsDatabase

ROOT = Path(__file__).resolve().parent.parent


def sample_config(tmp_path):
    """Bundled config without file logging, archive inside tmp_path."""
    with open(ROOT / 'config' / 'config.yaml', encoding='utf-8') as f:
        config = yaml.safe_load(f)
    config['logging']['enable_file_logging'] = False
    config['storage']['database_path'] = str(tmp_path / 'data' / 'runs.db')
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(config), encoding='utf-8')
    return str(path)


def fake_log(scenario_id='a1', status=STATUS_COMPLETED):
    record = StepRecord(step=0, t=0.0, ev={'x': 0.0, 'y': 0.0, 'psi': 0.0, 'u': 15.0, 'v': 0.0, 'r': 0.0},
                        ev_vx=15.0, ev_vy=0.0, s=40.0, d=0.0, F_x=0.0, delta_f=0.0,
                        force_saturated=False, steer_saturated=False, a_lon=0.0, a_lat=0.0,
                        timing={'total_ms': 50.0})
    log = RunLog(scenario_id=scenario_id, seed=0, status=status, records=[record])
    log.kpis = {'K_s': 0.1, 'K_c': 0.01, 'K_f': 1.0, 'mean_abs_F': 0.0, 'progress': 1.0}
    return log


def by_scenario(status=STATUS_COMPLETED):
    def run(spec, config, dump_steps=()):
        return fake_log(spec.scenario_id, status)
    return run


class TestArguments:
    """Command-line parsing."""

    def test_scenario_or_batch_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_scenario_and_batch_exclusive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['--scenario', 'a.yaml', '--batch', 'dir'])

    def test_oracle_dump_defaults_to_step_zero(self):
        args = build_parser().parse_args(['--scenario', 'a.yaml', '--oracle-dump'])
        assert args.oracle_dump == [0]

    def test_lattice_parsed(self):
        args = build_parser().parse_args(['--scenario', 'a.yaml', '--lattice', '64x32x32'])
        assert args.lattice == [64, 32, 32]

    def test_parse_steps(self):
        assert parse_steps("0,10,20") == [0, 10, 20]
        with pytest.raises(argparse.ArgumentTypeError):
            parse_steps("0,-1")
        with pytest.raises(argparse.ArgumentTypeError):
            parse_steps("first")


class TestMain:
    """Exit codes and written reports."""

    def test_single_scenario_ok(self, tmp_path):
        out = tmp_path / 'out'
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario()) as run:
            code = main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'), '--output', str(out),
                         '--config', sample_config(tmp_path), '--oracle-dump', '0,5'])
        assert code == 0
        assert (out / 'run_log.jsonl').exists()
        assert (out / 'kpi_summary.csv').exists()
        assert run.call_args.kwargs['dump_steps'] == [0, 5]

    def test_overrides_reach_the_run(self, tmp_path):
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario()) as run:
            main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'), '--output', str(tmp_path / 'o'),
                  '--config', sample_config(tmp_path), '--lattice', '32x16x16', '--candidates', '5',
                  '--seed', '9'])
        config = run.call_args.args[1]
        assert config['domain']['lattice'] == [32, 16, 16]
        assert config['sampler']['candidates'] == 5
        assert config['simulation']['seed'] == 9

    def test_timeout_is_success(self, tmp_path):
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario(STATUS_TIMEOUT)):
            code = main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'),
                         '--output', str(tmp_path / 'o'), '--config', sample_config(tmp_path)])
        assert code == 0

    def test_collision_exit_code(self, tmp_path):
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario(STATUS_COLLISION)):
            code = main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'),
                         '--output', str(tmp_path / 'o'), '--config', sample_config(tmp_path)])
        assert code == 1

    def test_invalid_config(self, tmp_path, capsys):
        code = main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'),
                     '--config', sample_config(tmp_path), '--lattice', '2x2x2'])
        assert code == 1
        assert 'domain.lattice' in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(['--scenario', 'a.yaml', '--config', str(tmp_path / 'none.yaml')]) == 1

    def test_bad_scenario_file(self, tmp_path):
        bad = tmp_path / 'bad.yaml'
        bad.write_text("id: x\nlayout: z\n", encoding='utf-8')
        code = main(['--scenario', str(bad), '--output', str(tmp_path / 'o'),
                     '--config', sample_config(tmp_path)])
        assert code == 1

    def test_unexpected_error(self, tmp_path):
        with patch('source.run_planner.run_closed_loop', side_effect=RuntimeError("boom")):
            code = main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'),
                         '--output', str(tmp_path / 'o'), '--config', sample_config(tmp_path)])
        assert code == 2

    def test_batch_writes_summary_and_evaluation(self, tmp_path):
        scenarios = tmp_path / 'scenarios'
        scenarios.mkdir()
        for name in ('a1', 'b1'):
            shutil.copy(ROOT / 'scenarios' / f'{name}.yaml', scenarios)
        out = tmp_path / 'batch'
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario()):
            code = main(['--batch', str(scenarios), '--output', str(out),
                         '--config', sample_config(tmp_path)])
        assert code == 0
        assert (out / 'a1' / 'run_log.jsonl').exists()
        assert (out / 'evaluation_results.json').exists()
        with open(out / 'kpi_summary.csv', newline='', encoding='utf-8') as f:
            assert [r['scenario'] for r in csv.DictReader(f)] == ['a1', 'b1', 'AVERAGE']

    def test_empty_batch_directory(self, tmp_path):
        empty = tmp_path / 'empty'
        empty.mkdir()
        assert main(['--batch', str(empty), '--config', sample_config(tmp_path)]) == 1

    def test_archive(self, tmp_path):
        config_path = sample_config(tmp_path)
        with patch('source.run_planner.run_closed_loop', side_effect=by_scenario()):
            main(['--scenario', str(ROOT / 'scenarios' / 'a1.yaml'), '--output', str(tmp_path / 'o'),
                  '--config', config_path, '--archive', '--label', 'nightly'])
        with ResultsDatabase(str(tmp_path / 'data' / 'runs.db')) as db:
            rows = db.query_runs()
        assert len(rows) == 1
        assert rows[0]['run_label'] == 'nightly'
        assert rows[0]['lattice'] == '128x64x64'
