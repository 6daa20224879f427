"""
Run reports: per-step JSONL log, KPI summary CSV, SVG plots and field dumps.

Everything written here is a pure function of the RunLog, so re-emitting the
same log produces byte-identical files. Wall-clock data lives in the `timing`
sub-record of each step and in the plan_time columns only.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from source.simulation.engine import RunLog

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

UNITS = {
    't': 's',
    'ev.x': 'm', 'ev.y': 'm', 'ev.psi': 'rad', 'ev.u': 'm/s', 'ev.v': 'm/s', 'ev.r': 'rad/s',
    's': 'm', 'd': 'm',
    'controls.F_x': 'N', 'controls.delta_f': 'rad',
    'accel.lon': 'm/s^2', 'accel.lat': 'm/s^2',
    'obstacles.distance': 'm', 'obstacles.ttc': 's',
    'lbm.residual_mps': 'm/s',
    'timing': 'ms',
}

# (column header, kpi/timing key, scale)
KPI_COLUMNS = [
    ('K_s [1/s]', 'K_s', 1.0),
    ('K_c [g]', 'K_c', 1.0),
    ('K_f [-]', 'K_f', 1.0),
    ('mean_abs_F [kN]', 'mean_abs_F', 1e-3),
    ('progress [-]', 'progress', 1.0),
    ('plan_time_mean [ms]', 'plan_time_mean', 1.0),
    ('plan_time_max [ms]', 'plan_time_max', 1.0),
    ('domain_time_mean [ms]', 'domain_ms_mean', 1.0),
    ('lbm_time_mean [ms]', 'lbm_ms_mean', 1.0),
    ('sampling_time_mean [ms]', 'sampling_ms_mean', 1.0),
]
HEADER = ['scenario', 'seed', 'status', 'steps [-]', 'emergency_steps [-]'] + [c[0] for c in KPI_COLUMNS]


def _prepare_dir(output_dir) -> Path:
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {output_dir}: {e}") from e
    return output_dir


def write_run_log(log: RunLog, path, include_timing: bool = True) -> Path:
    """Header record followed by one step record per line."""
    path = Path(path)
    header = {
        'record': 'header',
        'schema_version': SCHEMA_VERSION,
        'scenario': log.scenario_id,
        'seed': log.seed,
        'units': UNITS,
    }
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(header, sort_keys=True) + '\n')
        for record in log.records:
            f.write(json.dumps(record.as_dict(include_timing), sort_keys=True) + '\n')
        f.write(json.dumps({
            'record': 'summary',
            'status': log.status,
            'collision_time': log.collision_time,
            'collided_with': log.collided_with,
            'distance_travelled': log.distance_travelled,
            'intended_distance': log.intended_distance,
            'emergency_steps': log.emergency_steps,
            'kpis': log.kpis,
        }, sort_keys=True) + '\n')
    return path


def kpi_row(log: RunLog) -> Dict[str, str]:
    """One CSV row; KPI cells stay empty for a run without steps."""
    row = {
        'scenario': log.scenario_id,
        'seed': str(log.seed),
        'status': log.status,
        'steps [-]': str(len(log.records)),
        'emergency_steps [-]': str(log.emergency_steps),
    }
    values = dict(log.kpis)
    values.update(log.timing_summary())
    for header, key, scale in KPI_COLUMNS:
        row[header] = f"{values[key] * scale:.6f}" if log.records and key in values else ""
    return row


def average_row(rows: Sequence[Dict[str, str]]) -> Dict[str, str]:
    row = {key: "" for key in HEADER}
    row['scenario'] = 'AVERAGE'
    row['steps [-]'] = f"{np.mean([int(r['steps [-]']) for r in rows]):.1f}"
    row['emergency_steps [-]'] = f"{np.mean([int(r['emergency_steps [-]']) for r in rows]):.1f}"
    for header, _, _ in KPI_COLUMNS:
        cells = [float(r[header]) for r in rows if r[header] != ""]
        row[header] = f"{np.mean(cells):.6f}" if cells else ""
    return row


def write_kpi_summary(logs: Sequence[RunLog], path, average: bool = False) -> Path:
    path = Path(path)
    rows = [kpi_row(log) for log in logs]
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=HEADER, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
        if average and rows:
            writer.writerow(average_row(rows))
    return path


def write_field_dumps(log: RunLog, output_dir) -> List[Path]:
    """One compressed npz per dumped step: cell_class, stvf and, when present, rho and V."""
    output_dir = Path(output_dir)
    written = []
    for step in sorted(log.field_dumps):
        path = output_dir / f"stvf_step{step}.npz"
        np.savez_compressed(path, **log.field_dumps[step])
        written.append(path)
    return written


def _pyplot():
    try:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not available, skipping plots")
        return None
    plt.rcParams['svg.hashsalt'] = 'fluid-planner'
    return plt


def _save(fig, plt, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def plot_trajectory(log: RunLog, path, plt=None) -> Optional[Path]:
    plt = plt or _pyplot()
    if plt is None or not log.records:
        return None
    s = [r.s for r in log.records]
    d = [r.d for r in log.records]
    t = [r.t for r in log.records]
    fig, ax = plt.subplots(figsize=(10, 3))
    points = ax.scatter(s, d, c=t, cmap='viridis', s=6)
    fig.colorbar(points, ax=ax, label='t [s]')
    ax.set_xlabel('s [m]')
    ax.set_ylabel('d [m]')
    ax.set_title(f'EV trajectory ({log.scenario_id}, {log.status})')
    ax.grid(alpha=0.3)
    return _save(fig, plt, Path(path))


def plot_controls(log: RunLog, path, plt=None) -> Optional[Path]:
    """Force with speed on top, steering with lateral acceleration below."""
    plt = plt or _pyplot()
    if plt is None or not log.records:
        return None
    t = [r.t for r in log.records]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)

    top.plot(t, [r.F_x / 1000.0 for r in log.records], color='#007acc')
    top.set_ylabel('F_x [kN]')
    speed_ax = top.twinx()
    speed_ax.plot(t, [r.ev['u'] for r in log.records], color='#dc3545')
    speed_ax.set_ylabel('speed [m/s]')

    bottom.plot(t, np.degrees([r.delta_f for r in log.records]), color='#007acc')
    bottom.set_ylabel('delta_f [deg]')
    accel_ax = bottom.twinx()
    accel_ax.plot(t, [r.a_lat / 9.81 for r in log.records], color='#dc3545')
    accel_ax.set_ylabel('a_lat [g]')
    bottom.set_xlabel('t [s]')
    for ax in (top, bottom):
        ax.grid(alpha=0.3)
    return _save(fig, plt, Path(path))


def plot_stvf_slice(field: Dict[str, np.ndarray], path, t_index: int = 0,
                    title: str = "", plt=None) -> Optional[Path]:
    """Quiver of the (ds, dd) field components at one time slice; solids shaded."""
    plt = plt or _pyplot()
    if plt is None:
        return None
    vectors = field['stvf']
    t_index = min(max(t_index, 0), vectors.shape[-1] - 1)
    vs, vd = vectors[0, :, :, t_index], vectors[1, :, :, t_index]
    n_s, n_d = vs.shape
    step_s, step_d = max(n_s // 48, 1), max(n_d // 16, 1)
    S, D = np.meshgrid(np.arange(n_s), np.arange(n_d), indexing='ij')

    fig, ax = plt.subplots(figsize=(10, 3))
    solid = np.isin(field['cell_class'][:, :, t_index], (1, 2))
    ax.imshow(solid.T, origin='lower', cmap='Greys', alpha=0.4, aspect='auto')
    ax.quiver(S[::step_s, ::step_d], D[::step_s, ::step_d],
              vs[::step_s, ::step_d], vd[::step_s, ::step_d], angles='xy')
    ax.set_xlabel('s cell')
    ax.set_ylabel('d cell')
    ax.set_title(title or f'STVF slice t index {t_index}')
    return _save(fig, plt, Path(path))


def emit_reports(log: RunLog, output_dir, config: dict = None) -> List[Path]:
    """
    Write all reports for one run.

    Reads the `output` config section: plots (bool), include_timing (bool),
    plot_t_index (int).

    Raises:
        OSError: output directory cannot be created or written
    """
    oc = (config or {}).get('output', {})
    output_dir = _prepare_dir(output_dir)
    written = [
        write_run_log(log, output_dir / 'run_log.jsonl', oc.get('include_timing', True)),
        write_kpi_summary([log], output_dir / 'kpi_summary.csv'),
    ]
    written.extend(write_field_dumps(log, output_dir))

    if oc.get('plots', False):
        plt = _pyplot()
        if plt is not None:
            for plotted in (plot_trajectory(log, output_dir / 'trajectory.svg', plt),
                            plot_controls(log, output_dir / 'controls.svg', plt)):
                if plotted is not None:
                    written.append(plotted)
            for step in sorted(log.field_dumps):
                written.append(plot_stvf_slice(
                    log.field_dumps[step], output_dir / f'stvf_step{step}.svg',
                    oc.get('plot_t_index', 0), f'{log.scenario_id} step {step}', plt))
    logger.info(f"Reports for {log.scenario_id} written to {output_dir} ({len(written)} files)")
    return written


def write_batch_summary(logs: Sequence[RunLog], output_dir) -> Path:
    """Per-scenario rows plus an AVERAGE row."""
    output_dir = _prepare_dir(output_dir)
    return write_kpi_summary(logs, output_dir / 'kpi_summary.csv', average=True)
