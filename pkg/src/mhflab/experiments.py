"""Configuration, suite orchestration, persistence, and plot emission.

One suite per invocation: a validated JSON config dispatches to the physics
modules, results land in an append-only CSV, a manifest echoes the exact
config, and sweep/monitor plots are emitted as SVG.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import commutators as com
from . import hartree_fock as hf
from . import many_body as mb
from . import spectra as sp
from .lattice import (
    FieldSpec,
    Grid,
    Interaction,
    build_grid,
    assemble_hamiltonian,
    gaussian_interaction,
    harmonic_potential,
    landau_gauge,
    linear_gauge,
    polynomial_potential,
    quartic_potential,
    symmetric_gauge,
    zero_gauge,
    zero_interaction,
    zero_potential,
)

SUITES = ("commutator-sweep", "b-sweep", "weyl", "clr", "agmon", "diamagnetic",
          "wigner", "hf-evolve", "mb-compare", "identities")

CSV_HEADER = "suite,param_json,metric,value,verdict,wall_ms"


class ConfigError(ValueError):
    """Invalid experiment configuration; carries every collected error."""

    def __init__(self, errors: Sequence[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "suite", "dim", "points_per_axis", "half_length", "potential", "gauge",
    "hbar_ladder", "b_ladder", "mu", "N", "interaction", "T", "dt", "K",
    "eps", "observable", "alpha_box", "alpha_points", "checkpoints", "N_list",
    "output_dir", "seed", "expected_exponent", "exponent_tolerance", "c0",
    "c_grid", "energy_drift_tol", "exchange_check_every",
}

_DEFAULTS: dict[str, Any] = {
    "dim": 1,
    "points_per_axis": "auto",
    "half_length": 8.0,
    "potential": {"name": "harmonic"},
    "gauge": {"name": "zero"},
    "b_ladder": [0.0],
    "interaction": None,
    "alpha_box": 4.0,
    "alpha_points": 9,
    "seed": 0,
    "output_dir": "mhflab-out",
    "c0": 2.0,
    "c_grid": 1.0,
    "energy_drift_tol": 1e-6,
    "exchange_check_every": 10,
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "commutator-sweep": ("hbar_ladder", "mu", "observable"),
    "b-sweep": ("hbar_ladder", "mu", "b_ladder"),
    "weyl": ("hbar_ladder", "mu"),
    "clr": ("hbar_ladder", "mu", "eps"),
    "agmon": ("hbar_ladder", "mu", "eps"),
    "diamagnetic": ("hbar_ladder", "b_ladder"),
    "wigner": ("hbar_ladder", "mu"),
    "hf-evolve": ("hbar_ladder", "N", "T", "dt"),
    "mb-compare": ("N_list", "K", "T", "dt", "checkpoints"),
    "identities": ("hbar_ladder", "b_ladder"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    dim: int
    points_per_axis: int | str
    half_length: float
    potential: dict
    gauge: dict
    hbar_ladder: tuple[float, ...]
    b_ladder: tuple[float, ...]
    mu: float | None
    N: int | None
    interaction: dict | None
    T: float | None
    dt: float | None
    K: int | None
    eps: float | None
    observable: str | None
    alpha_box: float
    alpha_points: int
    checkpoints: tuple[float, ...] | None
    N_list: tuple[int, ...] | None
    output_dir: str
    seed: int
    expected_exponent: float | None
    exponent_tolerance: float | None
    c0: float
    c_grid: float
    energy_drift_tol: float
    exchange_check_every: int

    def to_json_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _validate(raw: dict) -> tuple[dict, list[str]]:
    errors: list[str] = []
    unknown = sorted(set(raw) - _KNOWN_KEYS)
    for key in unknown:
        errors.append(f"unknown key {key!r}")
    suite = raw.get("suite")
    if suite not in SUITES:
        errors.append(f"suite must be one of {SUITES}, got {suite!r}")
        return raw, errors
    for key in _REQUIRED[suite]:
        if key not in raw:
            errors.append(f"suite {suite!r} requires field {key!r}")

    merged = dict(_DEFAULTS)
    merged.update({k: v for k, v in raw.items() if k in _KNOWN_KEYS})

    def check_num(key, positive=False, allow_none=True):
        v = merged.get(key)
        if v is None:
            if not allow_none:
                errors.append(f"{key} must be set")
            return
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            errors.append(f"{key} must be a finite number, got {v!r}")
        elif positive and v <= 0:
            errors.append(f"{key} must be positive, got {v}")

    if merged.get("dim") not in (1, 2):
        errors.append(f"dim must be 1 or 2, got {merged.get('dim')!r}")
    check_num("half_length", positive=True, allow_none=False)
    for key in ("T", "dt", "eps"):
        check_num(key, positive=True)
    for key in ("mu", "alpha_box", "c0", "c_grid", "energy_drift_tol"):
        check_num(key)
    ppa = merged.get("points_per_axis")
    if not (ppa == "auto" or (isinstance(ppa, int) and ppa >= 3)):
        errors.append(f"points_per_axis must be an integer >= 3 or 'auto', got {ppa!r}")
    for key in ("hbar_ladder", "b_ladder", "checkpoints"):
        v = merged.get(key)
        if v is None:
            continue
        if not isinstance(v, (list, tuple)) or not all(
                isinstance(x, (int, float)) and math.isfinite(x) for x in v):
            errors.append(f"{key} must be a list of finite numbers, got {v!r}")
        elif key == "hbar_ladder":
            if any(x <= 0 for x in v):
                errors.append(f"{key} entries must be positive, got {v!r}")
            if len(v) > 1 and not (all(a > b for a, b in zip(v, v[1:]))
                                   or all(a < b for a, b in zip(v, v[1:]))):
                errors.append(f"{key} must be strictly monotone, got {v!r}")
        elif key == "b_ladder":
            if any(x < 0 for x in v):
                errors.append(f"{key} entries must be nonnegative, got {v!r}")
            if len(v) > 1 and not all(a < b for a, b in zip(v, v[1:])):
                errors.append(f"{key} must be strictly increasing, got {v!r}")
    if merged.get("N") is not None and (not isinstance(merged["N"], int) or merged["N"] < 1):
        errors.append(f"N must be a positive integer, got {merged['N']!r}")
    if merged.get("N_list") is not None and (
            not isinstance(merged["N_list"], (list, tuple))
            or not all(isinstance(n, int) and n >= 1 for n in merged["N_list"])):
        errors.append(f"N_list must be a list of positive integers, got {merged.get('N_list')!r}")
    if merged.get("K") is not None and (not isinstance(merged["K"], int) or merged["K"] < 1):
        errors.append(f"K must be a positive integer, got {merged['K']!r}")
    if not isinstance(merged.get("seed"), int):
        errors.append(f"seed must be an integer, got {merged.get('seed')!r}")
    return merged, errors


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON config; reports every validation error."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {p} does not exist")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    merged, errors = _validate(raw)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        suite=merged["suite"], dim=merged["dim"], points_per_axis=merged["points_per_axis"],
        half_length=float(merged["half_length"]), potential=merged["potential"],
        gauge=merged["gauge"], hbar_ladder=tuple(merged.get("hbar_ladder") or ()),
        b_ladder=tuple(merged.get("b_ladder") or (0.0,)),
        mu=merged.get("mu"), N=merged.get("N"), interaction=merged.get("interaction"),
        T=merged.get("T"), dt=merged.get("dt"), K=merged.get("K"), eps=merged.get("eps"),
        observable=merged.get("observable"), alpha_box=float(merged["alpha_box"]),
        alpha_points=int(merged["alpha_points"]),
        checkpoints=tuple(merged["checkpoints"]) if merged.get("checkpoints") else None,
        N_list=tuple(merged["N_list"]) if merged.get("N_list") else None,
        output_dir=str(merged["output_dir"]), seed=int(merged["seed"]),
        expected_exponent=merged.get("expected_exponent"),
        exponent_tolerance=merged.get("exponent_tolerance"),
        c0=float(merged["c0"]), c_grid=float(merged["c_grid"]),
        energy_drift_tol=float(merged["energy_drift_tol"]),
        exchange_check_every=int(merged["exchange_check_every"]))


# ---------------------------------------------------------------------------
# Field construction from config dictionaries
# ---------------------------------------------------------------------------

def potential_from_spec(spec: dict, dim: int):
    name = spec.get("name")
    if name == "harmonic":
        return harmonic_potential()
    if name == "quartic":
        return quartic_potential()
    if name == "zero":
        return zero_potential()
    if name == "poly":
        return polynomial_potential(spec.get("coefficients", []), dim=dim)
    raise ConfigError([f"unknown potential {name!r}"])


def gauge_from_spec(spec: dict, dim: int):
    name = spec.get("name")
    if name == "zero":
        return zero_gauge(dim)
    if name == "symmetric":
        return symmetric_gauge()
    if name == "landau":
        return landau_gauge()
    if name == "linear":
        return linear_gauge(spec["matrix"])
    raise ConfigError([f"unknown gauge {name!r}"])


def interaction_from_spec(spec: dict | None) -> Interaction | None:
    if spec is None:
        return None
    name = spec.get("name")
    if name == "zero":
        return zero_interaction()
    if name == "gaussian":
        return gaussian_interaction(spec.get("amplitude", 1.0), spec.get("width", 1.0))
    raise ConfigError([f"unknown interaction {name!r}"])


def fields_from_config(cfg: ExperimentConfig) -> FieldSpec:
    return FieldSpec(gauge_from_spec(cfg.gauge, cfg.dim),
                     potential_from_spec(cfg.potential, cfg.dim),
                     interaction_from_spec(cfg.interaction))


def grid_for(cfg: ExperimentConfig, hbar: float) -> Grid:
    if cfg.points_per_axis == "auto":
        if cfg.dim != 1:
            raise ConfigError(["points_per_axis='auto' is supported for dim=1 only"])
        m = com.auto_points_per_axis(hbar, cfg.half_length, cfg.mu if cfg.mu else 1.0)
    else:
        m = int(cfg.points_per_axis)
    return build_grid(cfg.dim, m, cfg.half_length)


def parse_observable(text: str, dim: int) -> com.ObservableSpec:
    """Grammar: x | p | x1 | x2 | p1 | p2 | x1^2 | x^3 ..."""
    t = text.strip().lower()
    kind = t[0]
    rest = t[1:]
    power = 1
    if "^" in rest:
        rest, pow_s = rest.split("^", 1)
        power = int(pow_s)
    axis = int(rest) if rest else 1
    if kind == "x":
        beta = tuple(power if ax == axis - 1 else 0 for ax in range(dim))
        return com.position_observable(beta)
    if kind == "p":
        if power != 1:
            raise ConfigError([f"momentum powers are not supported: {text!r}"])
        return com.momentum_observable(axis)
    raise ConfigError([f"cannot parse observable {text!r}"])


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRecord:
    suite: str
    params: dict
    metric: str
    value: float
    verdict: str                      # pass | fail | info
    wall_ms: float

    def csv_row(self) -> str:
        pj = json.dumps(self.params, sort_keys=True, separators=(",", ":"))
        return f'{self.suite},"{pj.replace(chr(34), chr(34) * 2)}",{self.metric},{self.value!r},{self.verdict},{self.wall_ms:.3f}'


class _Timer:
    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.ms = (time.monotonic() - self.t0) * 1000.0


def _record(suite: str, params: dict, metric: str, value: float,
            verdict: str, ms: float) -> ResultRecord:
    return ResultRecord(suite=suite, params=params, metric=metric,
                        value=float(value), verdict=verdict, wall_ms=ms)


def _map_points(fn: Callable, items: Sequence, workers: int) -> list:
    """Dispatch independent parameter points to a bounded pool; results keep
    input order so downstream output is deterministic."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Suite runners
# ---------------------------------------------------------------------------

def _run_commutator_sweep(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    obs = parse_observable(cfg.observable, cfg.dim)
    b = cfg.b_ladder[0]
    expected = cfg.expected_exponent if cfg.expected_exponent is not None else 1 - cfg.dim
    tol = cfg.exponent_tolerance if cfg.exponent_tolerance is not None else (0.15 if cfg.dim == 1 else 0.2)

    def point(hbar: float):
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            try:
                rep = com.initial_data_report(grid, fields, hbar, b, cfg.mu, obs)
            except sp.DegenerateThresholdError as exc:
                return hbar, None, str(exc), t
        return hbar, rep, None, t

    results = _map_points(point, list(cfg.hbar_ladder), workers)
    records, points, skipped = [], [], []
    for hbar, rep, err, t in results:
        params = {"hbar": hbar, "b": b, "mu": cfg.mu, "observable": cfg.observable}
        if rep is None:
            records.append(_record(cfg.suite, params, "skipped_degenerate", math.nan, "info", t.ms))
            skipped.append((hbar, err))
            continue
        records.append(_record(cfg.suite, params, "trace_norm", rep.trace_norm, "info", t.ms))
        records.append(_record(cfg.suite, params, "normalized_value", rep.normalized_value, "info", t.ms))
        points.append((hbar, rep.trace_norm))
    with _Timer() as t:
        fit = com.fit_power_law(points, "hbar", skipped)
    ok = abs(fit.exponent - expected) <= tol
    fit_params = {"expected": expected, "tolerance": tol, "observable": cfg.observable}
    records.append(_record(cfg.suite, fit_params, "fitted_exponent", fit.exponent,
                           "pass" if ok else "fail", t.ms))
    records.append(_record(cfg.suite, fit_params, "fit_residual_rms", fit.residual_rms, "info", t.ms))
    return records


def _run_b_sweep(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    hbar = cfg.hbar_ladder[0]
    grid = grid_for(cfg, hbar)

    def decomp_for(b: float):
        return b, sp.eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))

    decomps = dict(_map_points(decomp_for, list(cfg.b_ladder), workers))
    records = []
    for obs_text, power in ((("x1" if cfg.dim == 2 else "x"), 0), (("p1" if cfg.dim == 2 else "p"), 1)):
        obs = parse_observable(obs_text, cfg.dim)
        with _Timer() as t:
            rep = com.b_dependence_sweep(grid, fields, hbar, cfg.mu, cfg.b_ladder, obs,
                                         power, c0=cfg.c0, decomps=decomps)
        for row in rep.rows:
            params = {"hbar": hbar, "b": row.b, "mu": cfg.mu, "observable": obs_text}
            records.append(_record(cfg.suite, params, "trace_norm", row.trace_norm, "info", t.ms))
            records.append(_record(cfg.suite, params, "normalized_ratio", row.normalized, "info", t.ms))
        records.append(_record(cfg.suite, {"observable": obs_text, "power": power},
                               "bounded_by_10x_baseline", float(rep.holds),
                               "pass" if rep.holds else "fail", t.ms))
    return records


def _run_weyl(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    b = cfg.b_ladder[0]

    def point(hbar: float):
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            rep = sp.weyl_law_compare(grid, fields, hbar, b, cfg.mu)
        return hbar, rep, t

    results = _map_points(point, list(cfg.hbar_ladder), workers)
    records, errs = [], []
    for hbar, rep, t in results:
        params = {"hbar": hbar, "b": b, "mu": cfg.mu}
        ok = rep.relative_error <= 2.0 * hbar
        records.append(_record(cfg.suite, params, "quantum_count", rep.quantum_count, "info", t.ms))
        records.append(_record(cfg.suite, params, "classical_count", rep.classical_count, "info", t.ms))
        records.append(_record(cfg.suite, params, "relative_error", rep.relative_error,
                               "pass" if ok else "fail", t.ms))
        if rep.boundary_warning:
            records.append(_record(cfg.suite, params, "boundary_warning", 1.0, "info", t.ms))
        errs.append((hbar, max(rep.relative_error, 1e-300)))
    if len(errs) >= 2:
        with _Timer() as t:
            fit = com.fit_power_law(errs, "hbar")
        records.append(_record(cfg.suite, {"mu": cfg.mu}, "error_loglog_slope", fit.exponent,
                               "pass" if fit.exponent >= 0.7 else "fail", t.ms))
    return records


def _run_clr(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)

    def point(args):
        hbar, b = args
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            rep = sp.clr_bound_check(grid, fields, hbar, b, cfg.mu, cfg.eps)
        return rep, t

    combos = [(h, b) for h in cfg.hbar_ladder for b in cfg.b_ladder]
    records = []
    for rep, t in _map_points(point, combos, workers):
        params = {"hbar": rep.hbar, "b": rep.b, "mu": cfg.mu, "eps": cfg.eps}
        records.append(_record(cfg.suite, params, "lhs_count", rep.lhs_count, "info", t.ms))
        records.append(_record(cfg.suite, params, "rhs_bound", rep.rhs_bound, "info", t.ms))
        records.append(_record(cfg.suite, params, "clr_holds", float(rep.holds),
                               "pass" if rep.holds else "fail", t.ms))
    return records


def _run_agmon(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    b = cfg.b_ladder[0]

    def point(hbar: float):
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            decomp = sp.eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))
            rep = sp.agmon_decay_check(grid, fields, decomp, hbar, cfg.mu, cfg.eps)
        return hbar, rep, t

    results = _map_points(point, list(cfg.hbar_ladder), workers)
    records = []
    for hbar, rep, t in results:
        params = {"hbar": hbar, "b": b, "mu": cfg.mu, "eps": cfg.eps}
        records.append(_record(cfg.suite, params, "max_weighted_norm", rep.max_weighted_norm, "info", t.ms))
        records.append(_record(cfg.suite, params, "n_eigenfunctions", rep.n_eigenfunctions, "info", t.ms))
    maxima = [rep.max_weighted_norm for _, rep, _ in results]
    ratio = max(maxima) / min(maxima)
    records.append(_record(cfg.suite, {"mu": cfg.mu, "eps": cfg.eps}, "hbar_uniformity_ratio",
                           ratio, "pass" if ratio <= 2.0 else "fail", 0.0))
    return records


def _run_diamagnetic(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    hbar = cfg.hbar_ladder[0]

    def point(b: float):
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            rep = sp.diamagnetic_check(grid, fields, hbar, b, c_grid=cfg.c_grid)
        return rep, t

    records = []
    energies = []
    for rep, t in _map_points(point, list(cfg.b_ladder), workers):
        params = {"hbar": hbar, "b": rep.b, "c_grid": cfg.c_grid}
        records.append(_record(cfg.suite, params, "ground_energy", rep.ground_energy_b, "info", t.ms))
        records.append(_record(cfg.suite, params, "diamagnetic_holds", float(rep.holds),
                               "pass" if rep.holds else "fail", t.ms))
        energies.append((rep.b, rep.ground_energy_b))
    monotone = all(e1 <= e2 + 1e-12 for (_, e1), (_, e2) in zip(energies, energies[1:]))
    records.append(_record(cfg.suite, {"hbar": hbar}, "monotone_in_b", float(monotone), "info", 0.0))
    return records


def _run_wigner(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    hbar = cfg.hbar_ladder[0]
    records = []
    reports = []
    for m in (None, "fine"):
        with _Timer() as t:
            grid = grid_for(cfg, hbar)
            if m == "fine":
                grid = build_grid(grid.dim, 2 * grid.points_per_axis - 1, grid.half_length)
            decomp = sp.eigendecompose(assemble_hamiltonian(grid, fields, hbar, 0.0))
            proj = sp.spectral_projector(decomp, cfg.mu)
            rep = com.quantum_gradient_check(proj, grid, hbar)
            w = com.wigner_transform(proj, grid, hbar)
            norm_err = abs(com.wigner_integral(w, grid) - proj.particle_count) / max(
                proj.particle_count, 1.0)
        params = {"hbar": hbar, "mu": cfg.mu, "spacing": grid.spacing}
        records.append(_record(cfg.suite, params, "position_residual", rep.position_residual, "info", t.ms))
        records.append(_record(cfg.suite, params, "momentum_residual", rep.momentum_residual, "info", t.ms))
        records.append(_record(cfg.suite, params, "normalization_error", norm_err,
                               "pass" if norm_err <= 0.01 else "fail", t.ms))
        reports.append(rep)
    coarse, fine = reports
    for name in ("position_residual", "momentum_residual"):
        ratio = getattr(coarse, name) / max(getattr(fine, name), 1e-300)
        records.append(_record(cfg.suite, {"hbar": hbar, "mu": cfg.mu}, f"{name}_refinement_ratio",
                               ratio, "pass" if ratio >= 1.8 else "fail", 0.0))
    return records


def _run_hf_evolve(cfg: ExperimentConfig, workers: int):
    fields = fields_from_config(cfg)
    hbar = cfg.hbar_ladder[0]
    b = cfg.b_ladder[0]
    with _Timer() as t_all:
        grid = grid_for(cfg, hbar)
        h0 = assemble_hamiltonian(grid, fields, hbar, b)
        decomp = sp.eigendecompose(h0)
        mu = sp.chemical_potential_for_rank(decomp, cfg.N)
        omega0 = sp.spectral_projector(decomp, mu)
        traj = hf.evolve(omega0, grid, fields, hbar, b, cfg.N, cfg.T, cfg.dt,
                         alpha_box=cfg.alpha_box, alpha_points=cfg.alpha_points,
                         exchange_check_every=cfg.exchange_check_every)
    params = {"hbar": hbar, "b": b, "N": cfg.N, "T": cfg.T, "dt": cfg.dt}
    records = []
    drift = float(np.abs(traj.energies - traj.energies[0]).max())
    records.append(_record(cfg.suite, params, "energy_drift", drift,
                           "pass" if drift <= cfg.energy_drift_tol else "fail", t_all.ms))
    final_q = traj.orbital_bases[-1]
    gram_dev = float(np.abs(final_q.conj().T @ final_q - np.eye(cfg.N)).max())
    records.append(_record(cfg.suite, params, "projector_drift", gram_dev,
                           "pass" if gram_dev <= 1e-9 else "fail", t_all.ms))
    trace_dev = abs(float(np.sum(np.abs(final_q) ** 2)) - cfg.N)
    records.append(_record(cfg.suite, params, "trace_drift", trace_dev,
                           "pass" if trace_dev <= 1e-9 else "fail", t_all.ms))
    finite = bool(np.all(np.isfinite(traj.monitor.gronwall)))
    records.append(_record(cfg.suite, params, "gronwall_finite", float(finite),
                           "pass" if finite else "fail", t_all.ms))
    records.append(_record(cfg.suite, params, "gronwall_initial", traj.monitor.gronwall[0], "info", t_all.ms))
    records.append(_record(cfg.suite, params, "gronwall_final", traj.monitor.gronwall[-1], "info", t_all.ms))
    if traj.growth_fit is not None:
        records.append(_record(cfg.suite, params, "growth_ols_rate", traj.growth_fit.ols_rate, "info", t_all.ms))
        env_ok = traj.growth_fit.envelope_rate > 0 and math.isfinite(traj.growth_fit.envelope_amplitude)
        records.append(_record(cfg.suite, params, "growth_envelope_rate", traj.growth_fit.envelope_rate,
                               "pass" if env_ok else "fail", t_all.ms))
    for rep in traj.exchange_reports:
        p = dict(params, t=rep.time, observable=rep.observable)
        records.append(_record(cfg.suite, p, "exchange_inequality", float(rep.holds),
                               "pass" if rep.holds else "fail", t_all.ms))
    # monitor time series as (t, observable tag, value) rows
    mon = traj.monitor
    series = {"plane_wave_sup": mon.plane_wave_sup, "momentum": mon.momentum,
              "gronwall": mon.gronwall}
    series.update({f"x^{beta}": vals for beta, vals in mon.position_powers.items()})
    for tag, vals in series.items():
        for ti, vi in zip(mon.times, vals):
            records.append(_record(cfg.suite, {"t": round(float(ti), 12), "observable": tag},
                                   "monitor_over_hbarN", float(vi), "info", 0.0))
    # stationarity check for the free case
    if fields.interaction is None or cfg.interaction is None or cfg.interaction.get("name") == "zero":
        dev = float(np.abs(traj.monitor.gronwall - traj.monitor.gronwall[0]).max())
        records.append(_record(cfg.suite, params, "stationary_monitor_drift", dev,
                               "pass" if dev <= 1e-8 else "fail", t_all.ms))
    return records, traj


def _run_mb_compare(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    b = cfg.b_ladder[0]
    with _Timer() as t:
        hbar_min = min(n ** (-1.0 / cfg.dim) for n in cfg.N_list)
        if cfg.points_per_axis == "auto":
            # resolve the K-th mode at the smallest hbar in the ladder
            m = com.auto_points_per_axis(hbar_min, cfg.half_length, (2 * cfg.K - 1) * hbar_min)
            grid = build_grid(cfg.dim, m, cfg.half_length)
        else:
            grid = build_grid(cfg.dim, int(cfg.points_per_axis), cfg.half_length)
        table = mb.compare_hf_vs_exact(grid, fields, b, cfg.N_list, cfg.K, cfg.T,
                                       cfg.checkpoints, dt=cfg.dt)
    records = []
    zero_w = cfg.interaction is None or cfg.interaction.get("name") == "zero"
    for row in table.rows:
        params = {"N": row.N, "t": row.time, "K": cfg.K, "b": b,
                  "canonical_scaling": table.canonical_scaling}
        records.append(_record(cfg.suite, params, "trace_error", row.trace_error, "info", t.ms))
        verdict = "info"
        if zero_w:
            verdict = "pass" if max(row.trace_error, row.hs_error) <= 1e-8 else "fail"
        records.append(_record(cfg.suite, params, "hs_error", row.hs_error, verdict, t.ms))
    if not zero_w:
        records.append(_record(cfg.suite, {"K": cfg.K, "b": b}, "hs_error_small",
                               float(table.hs_small), "pass" if table.hs_small else "fail", t.ms))
        records.append(_record(cfg.suite, {"K": cfg.K, "b": b}, "hs_error_decreasing_in_N",
                               float(table.decreasing_in_N),
                               "pass" if table.decreasing_in_N else "fail", t.ms))
    return records, table


def write_comparison_csv(table, path: Path) -> None:
    rows = ["N,t,trace_err,hs_err,N_ref,sqrtN_ref"]
    for r in sorted(table.rows, key=lambda r: (r.N, r.time)):
        rows.append(f"{r.N},{r.time!r},{r.trace_error!r},{r.hs_error!r},"
                    f"{r.trace_reference!r},{r.hs_reference!r}")
    path.write_text("\n".join(rows) + "\n")


def _run_identities(cfg: ExperimentConfig, workers: int) -> list[ResultRecord]:
    fields = fields_from_config(cfg)
    hbar = cfg.hbar_ladder[0]
    b = cfg.b_ladder[-1]
    if cfg.points_per_axis == "auto":
        raise ConfigError(["identities suite needs an explicit points_per_axis"])
    records, reports = [], []
    for m in (int(cfg.points_per_axis), 2 * int(cfg.points_per_axis) - 1):
        with _Timer() as t:
            grid = build_grid(cfg.dim, m, cfg.half_length)
            rep = com.momentum_commutator_identity_check(grid, fields, hbar, b)
        params = {"hbar": hbar, "b": b, "spacing": rep.spacing}
        records.append(_record(cfg.suite, params, "pair_residual", rep.pair_residual, "info", t.ms))
        records.append(_record(cfg.suite, params, "square_residual", rep.square_residual, "info", t.ms))
        reports.append(rep)
    for name in ("pair_residual", "square_residual"):
        ratio = getattr(reports[0], name) / max(getattr(reports[1], name), 1e-300)
        records.append(_record(cfg.suite, {"hbar": hbar, "b": b}, f"{name}_refinement_ratio",
                               ratio, "pass" if ratio >= 1.8 else "fail", 0.0))
    # b = 0 exact commutation
    with _Timer() as t:
        grid = build_grid(cfg.dim, int(cfg.points_per_axis), cfg.half_length)
        rep0 = com.momentum_commutator_identity_check(grid, fields, hbar, 0.0)
    records.append(_record(cfg.suite, {"hbar": hbar, "b": 0.0}, "pair_residual",
                           rep0.pair_residual, "pass" if rep0.pair_residual <= 1e-10 else "fail", t.ms))
    return records


_RUNNERS = {
    "commutator-sweep": _run_commutator_sweep,
    "b-sweep": _run_b_sweep,
    "weyl": _run_weyl,
    "clr": _run_clr,
    "agmon": _run_agmon,
    "diamagnetic": _run_diamagnetic,
    "wigner": _run_wigner,
    "hf-evolve": _run_hf_evolve,
    "mb-compare": _run_mb_compare,
    "identities": _run_identities,
}


# ---------------------------------------------------------------------------
# Persistence, plots, report
# ---------------------------------------------------------------------------

def _sort_key(r: ResultRecord):
    return (r.suite, json.dumps(r.params, sort_keys=True), r.metric)


def write_csv(records: list[ResultRecord], path: Path) -> str:
    rows = [CSV_HEADER] + [r.csv_row() for r in sorted(records, key=_sort_key)]
    text = "\n".join(rows) + "\n"
    path.write_text(text)
    return text


def content_hash(records: list[ResultRecord]) -> str:
    """Hash of the timing-independent record content (wall_ms excluded: wall
    time is the one column that cannot be bit-identical across reruns)."""
    rows = [f"{r.suite}|{json.dumps(r.params, sort_keys=True)}|{r.metric}|{r.value!r}|{r.verdict}"
            for r in sorted(records, key=_sort_key)]
    return hashlib.sha256("\n".join(rows).encode()).hexdigest()


def emit_report(records: list[ResultRecord], path: Path | None = None) -> str:
    """Human-readable summary with deterministic ordering."""
    lines = ["mhflab run report", "=" * 60]
    n_pass = sum(r.verdict == "pass" for r in records)
    n_fail = sum(r.verdict == "fail" for r in records)
    lines.append(f"verdicts: {n_pass} pass, {n_fail} fail, "
                 f"{len(records) - n_pass - n_fail} info")
    lines.append("")
    for r in sorted(records, key=_sort_key):
        pj = json.dumps(r.params, sort_keys=True)
        lines.append(f"[{r.verdict:4s}] {r.suite} {r.metric} = {r.value:.6g}  {pj}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _plot_records(cfg: ExperimentConfig, records: list[ResultRecord], out: Path,
                  traj=None) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = []
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    sweep_metric = {"commutator-sweep": "trace_norm", "weyl": "relative_error"}.get(cfg.suite)
    if sweep_metric:
        pts = sorted((r.params["hbar"], r.value) for r in records
                     if r.metric == sweep_metric and "hbar" in r.params and r.value > 0)
        if len(pts) >= 2:
            fig, ax = plt.subplots(figsize=(5, 4))
            hs, vs = zip(*pts)
            ax.loglog(hs, vs, "o-")
            ax.set_xlabel("hbar")
            ax.set_ylabel(sweep_metric)
            ax.set_title(f"{cfg.suite}: {sweep_metric} vs hbar")
            fig.savefig(plots / "scaling.svg")
            plt.close(fig)
            made.append("plots/scaling.svg")
    if cfg.suite == "b-sweep":
        fig, ax = plt.subplots(figsize=(5, 4))
        for obs in sorted({r.params.get("observable") for r in records if "observable" in r.params
                           and r.metric == "normalized_ratio"}):
            pts = sorted((r.params["b"], r.value) for r in records
                         if r.metric == "normalized_ratio" and r.params.get("observable") == obs)
            if pts:
                ax.plot(*zip(*pts), "o-", label=obs)
        ax.set_xlabel("b")
        ax.set_ylabel("trace norm / <b>^(r+1)")
        ax.legend()
        fig.savefig(plots / "b_sweep.svg")
        plt.close(fig)
        made.append("plots/b_sweep.svg")
    if traj is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        mon = traj.monitor
        ax.plot(mon.times, mon.gronwall, label="gronwall / (hbar N)")
        ax.plot(mon.times, mon.plane_wave_sup, label="sup_a ||[w,e^{iax}]|| / (1+|a|) / (hbar N)")
        ax.plot(mon.times, mon.momentum, label="||[w,P]|| / (hbar N)")
        ax.set_xlabel("t")
        ax.legend(fontsize=8)
        ax.set_title("propagation monitor")
        fig.savefig(plots / "monitor.svg")
        plt.close(fig)
        made.append("plots/monitor.svg")
    return made


def run_suite(config: ExperimentConfig, out_dir: str | Path | None = None,
              workers: int = 1) -> tuple[int, list[ResultRecord]]:
    """Execute one suite: CSV + manifest + report + SVG plots.

    Exit code 0 iff all verdicts pass; 1 on verdict failures; 2 on errors.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {"config": config.to_json_dict(), "workers": workers}
    t0 = time.monotonic()
    try:
        result = _RUNNERS[config.suite](config, workers)
        records, extra = result if isinstance(result, tuple) else (result, None)
        write_csv(records, out / "results.csv")
        manifest["csv"] = "results.csv"
        manifest["content_hash"] = content_hash(records)
        traj = extra if isinstance(extra, hf.HFTrajectory) else None
        manifest["plots"] = _plot_records(config, records, out, traj=traj)
        if isinstance(extra, mb.ComparisonTable):
            write_comparison_csv(extra, out / "comparison.csv")
            manifest["comparison_csv"] = "comparison.csv"
        emit_report(records, out / "report.txt")
        n_fail = sum(r.verdict == "fail" for r in records)
        manifest["status"] = "ok" if n_fail == 0 else f"{n_fail} verdict failures"
        manifest["wall_s"] = time.monotonic() - t0
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return (0 if n_fail == 0 else 1), records
    except Exception as exc:
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["wall_s"] = time.monotonic() - t0
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return 2, []
