"""Monte Carlo experiment runners and CSV output.

Each trial draws one channel from its own random stream (``seed`` plus the
trial index), so a trial's rows do not depend on which other trials run or
in which order.  All analog structures in a trial share that channel.

Units at this boundary follow the usual link-budget conventions: transmit
power in dBm and harvesting thresholds in microwatts.  Everything below it
works in watts.

Channel calibration
-------------------
With the stated path-loss law the weakest user of a 30 m cell sees an
effective beamformed gain near 1e-8, so harvesting 100 uW would need
kilowatts of transmit power.  ``gain_offset_db`` adds a fixed gain to every
link.  The default of 54 dB is the smallest whole-dB value at which at least
90% of drops admit a feasible point under every structure at 30 dBm and
100 uW.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from .analog import AnalogStructure, ConfigurationError, design_analog_precoder
from .channel import ArrayGeometry, sample_channel
from .dinkelbach import BisectionConfig, BracketError, bisection_max_ee, feasibility_check, make_inner
from .instance import InfeasibleProblemError, ProblemInstance, SolverFailure
from .metrics import SwiptConfig, dbm_to_watt, spectral_efficiency, total_power
from .sca import ScaConfig, solve_inner
from .zf import ConditioningError, ZfConfig, ZfInit, solve_inner_zf

__all__ = [
    "DEFAULT_GAIN_OFFSET_DB",
    "FIGURES",
    "ExperimentConfig",
    "ResultRow",
    "PointOutcome",
    "parse_config",
    "parse_sweep",
    "build_instance",
    "solve_point",
    "run_trials",
    "run_point",
    "run_sweep",
    "run_figure",
    "write_rows",
    "rows_to_csv",
    "median_by",
    "ZF_INITS",
]

DEFAULT_GAIN_OFFSET_DB = 54.0
FIGURES = ("3", "4", "4a", "5", "6", "7", "8", "8a", "9")
P_MAX_GRID_DBM = (20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
E_MIN_GRID_UW = (100.0, 200.0, 300.0, 400.0, 600.0, 800.0, 1000.0)

# five distinct starting points for the ZF solver
ZF_INITS = (
    ZfInit(),
    ZfInit(common_power=0.2, unicast_power=0.6, beta=0.3, v0_direction="random", seed=1),
    ZfInit(common_power=0.6, unicast_power=0.3, beta=0.7, v0_direction="user0"),
    ZfInit(common_power=0.1, unicast_power=0.8, beta=0.5, v0_direction="user1"),
    ZfInit(common_power=0.3, unicast_power=0.3, beta=0.2, v0_direction="random", seed=2),
)


@dataclass(frozen=True)
class ExperimentConfig:
    structure: str = "fully_connected"
    algorithm: str = "sca"
    objective: str = "max_ee"
    n_tx: int = 256
    n_rf: int = 4
    k_users: int = 2
    l_paths: int = 8
    p_max_dbm: float = 30.0
    e_min_uw: float = 100.0
    trials: int = 50
    seed: int = 0
    sweep: tuple | None = None          # (parameter, (values...))
    cell_radius_m: float = 30.0
    gain_offset_db: float = DEFAULT_GAIN_OFFSET_DB
    noise_ant_dbm: float = -80.0
    noise_id_dbm: float = -60.0
    eh_efficiency: float = 0.5
    pa_factor: float = 0.38
    p_bb_mw: float = 200.0
    p_rf_mw: float = 300.0
    p_ps_mw: float = 40.0
    t_max: int = 60
    inner_tol: float = 1e-5
    q_high: float = 10.0
    bisection_epsilon: float = 1e-3
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "structure", AnalogStructure.parse(self.structure).value)
        if self.algorithm not in ("sca", "zf"):
            raise ConfigurationError(f"algorithm must be sca or zf, got {self.algorithm!r}")
        if self.objective not in ("max_ee", "max_se"):
            raise ConfigurationError(f"objective must be max_ee or max_se, got {self.objective!r}")
        if not 1 <= self.k_users <= self.n_rf <= self.n_tx:
            raise ConfigurationError("need 1 <= k_users <= n_rf <= n_tx")
        if self.trials < 1 or self.l_paths < 1 or self.t_max < 1 or self.workers < 1:
            raise ConfigurationError("trials, l_paths, t_max and workers must be positive")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEPABLE:
                raise ConfigurationError(f"cannot sweep {name!r}; choose from {sorted(SWEEPABLE)}")
            object.__setattr__(self, "sweep", (name, tuple(float(v) for v in values)))

    @property
    def p_max_w(self) -> float:
        return float(dbm_to_watt(self.p_max_dbm))

    @property
    def e_min_w(self) -> float:
        return self.e_min_uw * 1e-6

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def swipt(self) -> SwiptConfig:
        return SwiptConfig(
            noise_ant=float(dbm_to_watt(self.noise_ant_dbm)),
            noise_id=float(dbm_to_watt(self.noise_id_dbm)),
            eh_efficiency=self.eh_efficiency,
            pa_factor=self.pa_factor,
            e_min=self.e_min_w,
            p_max=self.p_max_w,
            p_bb=self.p_bb_mw * 1e-3,
            p_rf=self.p_rf_mw * 1e-3,
            p_ps=self.p_ps_mw * 1e-3,
        )

    def inner_config(self, algorithm: str | None = None):
        if (algorithm or self.algorithm) == "sca":
            return ScaConfig(tol=self.inner_tol, t_max=self.t_max)
        return ZfConfig(tol=self.inner_tol, t_max=self.t_max)

    def bisection(self) -> BisectionConfig:
        return BisectionConfig(q_high=self.q_high, epsilon=self.bisection_epsilon)


SWEEPABLE = {"p_max_dbm", "e_min_uw", "n_rf", "k_users", "n_tx", "l_paths"}


def parse_sweep(text: str) -> tuple:
    """``"p_max_dbm: 20, 30, 40"`` -> ``("p_max_dbm", (20.0, 30.0, 40.0))``."""
    if ":" not in text:
        raise ConfigurationError("sweep must look like 'p_max_dbm: 20, 30, 40'")
    param, values = text.split(":", 1)
    return (param.strip(), tuple(float(v) for v in values.replace(",", " ").split()))


def _convert(name: str, text: str):
    if name == "sweep":
        return parse_sweep(text)
    default = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name].default
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(source) -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` starts a comment); unknown keys are errors.

    ``source`` is a path or an open text stream.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# rows and CSV

@dataclass
class ResultRow:
    seed: int
    trial: int
    structure: str
    algorithm: str
    objective: str
    param: str = ""
    value: float | str = ""
    iteration: int = -1
    se_bpshz: float = float("nan")
    ee_bpshzw: float = float("nan")
    t_q: float | str = ""
    status: str = "ok"


ROW_FIELDS = [f.name for f in dataclasses.fields(ResultRow)]


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else repr(v))
    return str(v)


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, name)) for name in ROW_FIELDS])
    return out.getvalue()


def write_rows(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))
    return path


def median_by(rows, key: Callable, metric: str = "ee_bpshzw", failed_value: float = 0.0) -> dict:
    """Median of ``metric`` per group; failed trials count as ``failed_value``."""
    groups: dict = {}
    for r in rows:
        v = getattr(r, metric)
        ok = r.status in ("ok", "max_outer") and np.isfinite(v)
        groups.setdefault(key(r), []).append(v if ok else failed_value)
    return {k: float(np.median(v)) for k, v in groups.items()}


def write_median_dat(medians: dict, path, header: str) -> Path:
    """Whitespace-separated table that gnuplot reads directly."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        for key in sorted(medians, key=lambda k: tuple(str(x) for x in (k if isinstance(k, tuple) else (k,)))):
            parts = key if isinstance(key, tuple) else (key,)
            fh.write(" ".join(str(p) for p in parts) + f" {medians[key]!r}\n")
    return path


# ---------------------------------------------------------------------------
# single points

@dataclass
class PointOutcome:
    se: float = float("nan")
    ee: float = float("nan")
    q_star: float = float("nan")
    t_q: float = float("nan")
    status: str = "ok"
    outer: int = 0
    result: object = None
    instance: ProblemInstance | None = None
    detail: str = ""


def build_instance(cfg: ExperimentConfig, trial: int, structure=None, **overrides) -> ProblemInstance:
    """Channel of ``trial`` and the analog precoder of ``structure``.

    ``overrides`` may replace ``p_max_dbm``, ``e_min_uw`` or other fields of
    the configuration for this instance only.
    """
    if overrides:
        cfg = cfg.with_(**overrides)
    ch = sample_channel(cfg.k_users, cfg.l_paths, ArrayGeometry(cfg.n_tx), cfg.cell_radius_m, cfg.seed,
                        trial=trial, gain_offset_db=cfg.gain_offset_db)
    precoder = design_analog_precoder(ch, structure or cfg.structure, cfg.n_rf)
    return ProblemInstance.from_channel(ch, precoder, cfg.swipt())


def _metrics(solution, inst) -> tuple[float, float]:
    se = spectral_efficiency(solution, inst.eff_channels, inst.config)
    return se, se / total_power(solution, inst.precoder, None, inst.config)


def solve_point(inst: ProblemInstance, cfg: ExperimentConfig, algorithm: str | None = None,
                objective: str | None = None) -> PointOutcome:
    """Max_EE (bisection) or Max_SE (``q = 0``) on one instance; failures become statuses."""
    algorithm = algorithm or cfg.algorithm
    objective = objective or cfg.objective
    out = PointOutcome(instance=inst)
    try:
        report = feasibility_check(inst)
        if not report.feasible:
            out.status = "infeasible"
            out.detail = f"max slack {report.max_slack:.3e} W"
            return out
        inner = make_inner(algorithm, cfg.inner_config(algorithm))
        if objective == "max_se":
            res = inner(0.0, inst)
            out.result = res
            out.se, out.ee = _metrics(res.solution, inst)
            out.status = "ok" if res.stop_reason != "solver_failure" else "solver_stall"
            return out
        ee_res = bisection_max_ee(inner, inst, cfg.bisection())
        out.result = ee_res
        out.q_star = ee_res.q_star
        out.t_q = ee_res.trace[-1][1]
        out.outer = len(ee_res.trace)
        out.se, out.ee = _metrics(ee_res.solution, inst)
        out.status = "ok" if ee_res.status == "converged" else ee_res.status
    except InfeasibleProblemError as exc:
        out.status, out.detail = "infeasible", str(exc)
    except ConditioningError as exc:
        out.status, out.detail = "rank_deficient", str(exc)
    except BracketError as exc:
        out.status, out.detail = "bracket_failure", str(exc)
    except SolverFailure as exc:
        out.status, out.detail = "solver_failure", str(exc)
    return out


def _point_row(cfg, trial, structure, algorithm, objective, outcome: PointOutcome, param="", value=""):
    return ResultRow(cfg.seed, trial, structure, algorithm, objective, param, value, outcome.outer,
                     outcome.se, outcome.ee, outcome.t_q if np.isfinite(outcome.t_q) else "", outcome.status)


def run_trials(fn: Callable, cfg: ExperimentConfig) -> list:
    """``fn(cfg, trial) -> list of rows`` over all trials, merged in trial order."""
    trials = range(cfg.trials)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(partial(fn, cfg), trials))
    else:
        chunks = [fn(cfg, t) for t in trials]
    return [row for chunk in chunks for row in chunk]


def _point_trial(cfg: ExperimentConfig, trial: int) -> list:
    inst = build_instance(cfg, trial)
    out = solve_point(inst, cfg)
    return [_point_row(cfg, trial, cfg.structure, cfg.algorithm, cfg.objective, out)]


def run_point(cfg: ExperimentConfig) -> list:
    """One configuration, one converged row per trial."""
    return run_trials(_point_trial, cfg)


def _sweep_trial(cfg: ExperimentConfig, trial: int, structures=None, schemes=None) -> list:
    name, values = cfg.sweep
    rows = []
    for structure in structures or (cfg.structure,):
        for algorithm, objective in schemes or ((cfg.algorithm, cfg.objective),):
            for v in values:
                over = {name: int(v) if name in ("n_rf", "k_users", "n_tx", "l_paths") else v}
                try:
                    inst = build_instance(cfg, trial, structure, **over)
                except (ConfigurationError, ValueError) as exc:
                    out = PointOutcome(status="config_error", detail=str(exc))
                else:
                    out = solve_point(inst, cfg.with_(**over), algorithm, objective)
                rows.append(_point_row(cfg, trial, AnalogStructure.parse(structure).value, algorithm, objective,
                                       out, name, v))
    return rows


def run_sweep(cfg: ExperimentConfig, structures=None, schemes=None) -> list:
    """Converged rows over ``cfg.sweep`` (default: ``P_max`` from 20 to 50 dBm)."""
    if cfg.sweep is None:
        cfg = cfg.with_(sweep=("p_max_dbm", P_MAX_GRID_DBM))
    return run_trials(partial(_sweep_trial, structures=structures, schemes=schemes), cfg)


# ---------------------------------------------------------------------------
# iteration traces

def inner_trace(inst: ProblemInstance, algorithm: str, q: float, t_max: int, init: ZfInit | None = None,
                tol: float = 0.0) -> tuple[list, str]:
    """``t_max`` per-iteration ``(se, ee)`` pairs of an inner solver at ``q``.

    Iterations after the solver stops repeat its final point.
    """
    if algorithm == "sca":
        res = solve_inner(q, inst, ScaConfig(tol=tol, t_max=t_max))
    else:
        res = solve_inner_zf(q, inst, ZfConfig(tol=tol, t_max=t_max), init=init)
    pc = inst.circuit_power
    xi = inst.config.pa_factor
    pts = []
    for row in res.rows[1:]:
        se = row["objective"] + q * xi * row["power"]
        pts.append((se, se / (xi * row["power"] + pc)))
    if not pts:
        row = res.rows[0]
        se = row["objective"] + q * xi * row["power"]
        pts.append((se, se / (xi * row["power"] + pc)))
    pts += [pts[-1]] * (t_max - len(pts))
    return pts, res.stop_reason


def _fig3_trial(cfg: ExperimentConfig, trial: int) -> list:
    rows = []
    for structure in AnalogStructure:
        inst = build_instance(cfg, trial, structure)
        for algorithm in ("sca", "zf"):
            if not feasibility_check(inst).feasible:
                rows += [ResultRow(cfg.seed, trial, structure.value, algorithm, "max_se", "", "", it, status="infeasible")
                         for it in range(1, cfg.t_max + 1)]
                continue
            try:
                pts, stop = inner_trace(inst, algorithm, 0.0, cfg.t_max)
                status = "ok" if stop != "solver_failure" else "solver_stall"
            except (InfeasibleProblemError, SolverFailure, ConditioningError) as exc:
                pts, status = [(float("nan"), float("nan"))] * cfg.t_max, type(exc).__name__
            rows += [ResultRow(cfg.seed, trial, structure.value, algorithm, "max_se", "", "", it + 1, se, ee, "",
                               status) for it, (se, ee) in enumerate(pts)]
    return rows


def _fig4_trial(cfg: ExperimentConfig, trial: int) -> list:
    rows = []
    for structure in AnalogStructure:
        inst = build_instance(cfg, trial, structure)
        out = solve_point(inst, cfg, cfg.algorithm, "max_ee")
        if out.result is None:
            rows.append(_point_row(cfg, trial, structure.value, cfg.algorithm, "max_ee", out))
            continue
        for m, (q_m, t_m, _) in enumerate(out.result.trace, 1):
            rows.append(ResultRow(cfg.seed, trial, structure.value, cfg.algorithm, "max_ee", "q", q_m, m,
                                  float("nan"), float("nan"), t_m, out.status))
        # EE and SE of the inner solution at each q_m
        for r, ee in zip(rows[-len(out.result.trace):], out.result.ee_trace):
            r.ee_bpshzw = ee
    return rows


def _fig4a_trial(cfg: ExperimentConfig, trial: int) -> list:
    """ZF solver from each starting point in ``ZF_INITS`` at the optimal ``q``."""
    inst = build_instance(cfg, trial, "fully_connected")
    base = solve_point(inst, cfg, "zf", "max_ee")
    rows = []
    if base.result is None:
        return [_point_row(cfg, trial, "fully_connected", "zf", "max_ee", base, "init", i)
                for i in range(len(ZF_INITS))]
    for i, init in enumerate(ZF_INITS):
        try:
            pts, stop = inner_trace(inst, "zf", base.q_star, cfg.t_max, init)
            status = "ok" if stop != "solver_failure" else "solver_stall"
        except (InfeasibleProblemError, SolverFailure) as exc:
            pts, status = [(float("nan"), float("nan"))] * cfg.t_max, type(exc).__name__
        rows += [ResultRow(cfg.seed, trial, "fully_connected", "zf", "max_ee", "init", i, it + 1, se, ee, "", status)
                 for it, (se, ee) in enumerate(pts)]
    return rows


def run_figure(figure_id, cfg: ExperimentConfig | None = None, out_dir=None, structure=None) -> dict:
    """Run one figure's experiment; returns ``{"rows": [...], "paths": [...]}``.

    3: SE per iteration at ``q = 0`` and 30 dBm, 3 structures x 2 algorithms.
    4, 5: EE and ``T(q)`` per bisection step at 40 dBm, every structure.
    4a: ZF solver from five starting points, fully-connected, at 40 dBm.
    6: EE vs ``P_max`` per structure (Max_EE, configured algorithm).
    7: the same sweep with the ZF solver.
    8: Max_EE against Max_SE over ``P_max``.
    8a: EE vs ``E_min`` at 45 dBm.
    9: EE against SE over ``P_max`` under Max_SE.

    Figures 8, 8a and 9 use the subarray structure unless ``structure`` is
    given; the others sweep every structure or fix the one they describe.
    """
    fid = str(figure_id).lower()
    if fid not in FIGURES:
        raise ConfigurationError(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}")
    cfg = cfg or ExperimentConfig()
    structures = tuple(s.value for s in AnalogStructure)
    single = AnalogStructure.parse(structure or "subarray").value
    if fid == "3":
        rows = run_trials(_fig3_trial, cfg.with_(p_max_dbm=30.0))
        med = median_by(rows, lambda r: (r.structure, r.algorithm, r.iteration), "se_bpshz")
        header = "structure algorithm iteration median_se"
    elif fid in ("4", "5"):
        rows = run_trials(_fig4_trial, cfg.with_(p_max_dbm=40.0))
        metric = "ee_bpshzw" if fid == "4" else "t_q"
        med = median_by([r for r in rows if r.t_q != ""], lambda r: (r.structure, r.iteration), metric) \
            if fid == "5" else median_by(rows, lambda r: (r.structure, r.iteration), metric)
        header = f"structure outer_iteration median_{metric}"
    elif fid == "4a":
        rows = run_trials(_fig4a_trial, cfg.with_(p_max_dbm=40.0))
        med = median_by(rows, lambda r: (r.value, r.iteration))
        header = "init iteration median_ee"
    elif fid in ("6", "7"):
        algorithm = cfg.algorithm if fid == "6" else "zf"
        sweep_cfg = cfg if cfg.sweep is not None else cfg.with_(sweep=("p_max_dbm", P_MAX_GRID_DBM))
        rows = run_sweep(sweep_cfg, structures, ((algorithm, "max_ee"),))
        med = median_by(rows, lambda r: (r.structure, r.value))
        header = "structure p_max_dbm median_ee"
    elif fid == "8":
        sweep_cfg = cfg if cfg.sweep is not None else cfg.with_(sweep=("p_max_dbm", P_MAX_GRID_DBM))
        rows = run_sweep(sweep_cfg, (single,), ((cfg.algorithm, "max_ee"), (cfg.algorithm, "max_se")))
        med = median_by(rows, lambda r: (r.objective, r.value))
        header = "objective p_max_dbm median_ee"
    elif fid == "8a":
        sweep_cfg = cfg.with_(p_max_dbm=45.0, sweep=cfg.sweep or ("e_min_uw", E_MIN_GRID_UW))
        rows = run_sweep(sweep_cfg, (single,), ((cfg.algorithm, "max_ee"),))
        med = median_by(rows, lambda r: r.value)
        header = "e_min_uw median_ee"
    else:  # "9"
        sweep_cfg = cfg if cfg.sweep is not None else cfg.with_(sweep=("p_max_dbm", P_MAX_GRID_DBM))
        rows = run_sweep(sweep_cfg, (single,), ((cfg.algorithm, "max_se"),))
        se = median_by(rows, lambda r: r.value, "se_bpshz")
        ee = median_by(rows, lambda r: r.value)
        med = {(k, se[k]): ee[k] for k in se}
        header = "p_max_dbm median_se median_ee"
    paths = []
    if out_dir is not None:
        out = Path(out_dir)
        paths.append(write_rows(rows, out / f"fig{fid}.csv"))
        paths.append(write_median_dat(med, out / f"fig{fid}_median.dat", header))
    return {"rows": rows, "medians": med, "paths": paths}
