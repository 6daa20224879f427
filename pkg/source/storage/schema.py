# SQLite schema definition
SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS runs (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    scenario_id TEXT NOT NULL,
    seed INTEGER NOT NULL CHECK(seed >= 0),
    run_label TEXT NOT NULL DEFAULT '',
    status TEXT NOT NULL CHECK(status IN ('completed', 'timeout', 'collision', 'off_route')),
    steps INTEGER NOT NULL CHECK(steps >= 0),
    emergency_steps INTEGER NOT NULL DEFAULT 0 CHECK(emergency_steps >= 0),
    k_safety REAL CHECK(k_safety IS NULL OR k_safety >= 0),
    k_comfort REAL CHECK(k_comfort IS NULL OR k_comfort >= 0),
    k_feasibility REAL CHECK(k_feasibility IS NULL OR (k_feasibility >= 0 AND k_feasibility <= 1)),
    mean_abs_force REAL CHECK(mean_abs_force IS NULL OR mean_abs_force >= 0),
    progress REAL CHECK(progress IS NULL OR (progress >= 0 AND progress <= 1)),
    plan_time_mean_ms REAL,
    plan_time_max_ms REAL,
    lattice TEXT,
    candidates INTEGER,
    output_dir TEXT,
    created_at DATETIME NOT NULL DEFAULT CURRENT_TIMESTAMP,
    UNIQUE(scenario_id, seed, run_label)
);
CREATE INDEX IF NOT EXISTS idx_runs_scenario ON runs(scenario_id);
CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
CREATE INDEX IF NOT EXISTS idx_runs_created ON runs(created_at);
"""
