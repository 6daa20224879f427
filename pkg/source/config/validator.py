from typing import Any

LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
BACKENDS = {"auto", "numpy", "numba"}
EDGE_CONDITIONS = {"free_slip", "bounce_back"}
COST_WEIGHTS = ("c_1", "c_21", "c_22", "c_31", "c_32", "c_41", "c_42")
REQUIRED_SECTIONS = ["logging", "domain", "lbm", "vehicle", "sampler", "costs", "simulation"]


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive(value: Any) -> bool:
    return _is_number(value) and value > 0


def validate_config(config: Any) -> list:
    errors = []
    # Log level
    log_level = config.get("logging", {}).get("level", "INFO")
    if log_level not in LOG_LEVELS:
        errors.append(f"logging.level must be one of {LOG_LEVELS}")

    # Domain
    domain = config.get("domain", {})
    lattice = domain.get("lattice", [128, 64, 64])
    if not (isinstance(lattice, list) and len(lattice) == 3
            and all(isinstance(n, int) and not isinstance(n, bool) and n >= 3 for n in lattice)):
        errors.append("domain.lattice must be three integers >= 3")
    for key in ("length", "width", "horizon", "max_speed", "nominal_speed"):
        if key in domain and not _positive(domain[key]):
            errors.append(f"domain.{key} must be > 0")
    if "behind" in domain and not (_is_number(domain["behind"]) and domain["behind"] >= 0):
        errors.append("domain.behind must be >= 0")
    resistance = domain.get("porous_resistance", 0.5)
    if not (_is_number(resistance) and 0 <= resistance <= 1):
        errors.append("domain.porous_resistance must be in [0, 1]")

    # LBM
    lbm = config.get("lbm", {})
    if not _positive(lbm.get("viscosity", 0.003)):
        errors.append("lbm.viscosity must be > 0")
    max_iters = lbm.get("max_iters", 100)
    if not (isinstance(max_iters, int) and not isinstance(max_iters, bool) and max_iters >= 1):
        errors.append("lbm.max_iters must be integer >= 1")
    for key in ("tolerance_mps", "lattice_speed", "divergence_speed"):
        if key in lbm and not _positive(lbm[key]):
            errors.append(f"lbm.{key} must be > 0")
    if _is_number(lbm.get("lattice_speed", 0.1)) and _is_number(lbm.get("divergence_speed", 0.3)):
        if lbm.get("lattice_speed", 0.1) >= lbm.get("divergence_speed", 0.3):
            errors.append("lbm.lattice_speed must be below lbm.divergence_speed")
    if lbm.get("backend", "auto") not in BACKENDS:
        errors.append(f"lbm.backend must be one of {BACKENDS}")
    if lbm.get("edge_condition", "free_slip") not in EDGE_CONDITIONS:
        errors.append(f"lbm.edge_condition must be one of {EDGE_CONDITIONS}")

    # Vehicle
    vehicle = config.get("vehicle", {})
    for key in ("mass", "yaw_inertia", "l_f", "l_r", "cornering_stiffness_front",
                "cornering_stiffness_rear", "force_max", "steer_max_deg", "alpha_max_deg"):
        if key in vehicle and not _positive(vehicle[key]):
            errors.append(f"vehicle.{key} must be > 0")

    # Sampler
    sampler = config.get("sampler", {})
    for key, default in (("steps", 64), ("substeps", 10)):
        value = sampler.get(key, default)
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 1):
            errors.append(f"sampler.{key} must be integer >= 1")
    if not _positive(sampler.get("dt", 0.1)):
        errors.append("sampler.dt must be > 0")
    candidates = sampler.get("candidates", 15)
    if not (isinstance(candidates, int) and not isinstance(candidates, bool) and candidates >= 1):
        errors.append("sampler.candidates must be integer >= 1")
    gammas = sampler.get("gammas", [1.0])
    etas = sampler.get("etas", [1.0])
    if isinstance(candidates, int) and isinstance(gammas, list) and isinstance(etas, list):
        # the identity pair is always added, so the grid may supply at most len(g) * len(e) + 1
        if candidates > len(gammas) * len(etas) + 1:
            errors.append("sampler.candidates exceeds the gamma x eta grid size")
    window = sampler.get("savgol_window", 5)
    order = sampler.get("savgol_order", 2)
    if not (isinstance(window, int) and isinstance(order, int) and window > order >= 0):
        errors.append("sampler.savgol_window must be an integer greater than savgol_order")
    if sampler.get("centripetal_factor", 1.0) not in (1.0, 2.0):
        errors.append("sampler.centripetal_factor must be 1 or 2")

    # Cost weights
    costs = config.get("costs", {})
    weights = [costs.get(name, 1.0) for name in COST_WEIGHTS]
    if not all(_is_number(w) and w >= 0 for w in weights):
        errors.append("costs weights must be nonnegative numbers")
    elif not any(w > 0 for w in weights):
        errors.append("costs needs at least one positive weight")

    # Simulation
    simulation = config.get("simulation", {})
    if not _positive(simulation.get("dt", 0.1)):
        errors.append("simulation.dt must be > 0")
    seed = simulation.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        errors.append("simulation.seed must be integer >= 0")

    # KPI
    kpi = config.get("kpi", {})
    if "safe_radius" in kpi and not _positive(kpi["safe_radius"]):
        errors.append("kpi.safe_radius must be > 0")

    # Storage
    db_path = config.get("storage", {}).get("database_path", "data/runs.db")
    if not isinstance(db_path, str) or not db_path:
        errors.append("storage.database_path must be a non-empty string")

    return errors


def validate_schema(config: Any) -> list:
    errors = []
    if not isinstance(config, dict):
        return ["Configuration must be a mapping"]
    # Validate required top-level keys
    for section in REQUIRED_SECTIONS:
        if section not in config:
            errors.append(f"Missing section: {section}")
        elif not isinstance(config[section], dict):
            errors.append(f"Section {section} must be a mapping")
    return errors
