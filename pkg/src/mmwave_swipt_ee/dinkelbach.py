"""Energy-efficiency maximization by bisection on the Dinkelbach parameter.

For a parameter ``q`` the inner solvers return the value of
``max R(v) - q xi P_tx(v)``.  Since the circuit power does not depend on the
precoders it is subtracted here, giving

    T(q) = max R - q (xi P_tx + P_C),

which is decreasing in ``q`` and vanishes exactly at the optimal energy
efficiency.  Bisection keeps ``T(q_s) >= 0 >= T(q_b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import conic
from .conic import ProgramBuilder, SolveStatus
from .metrics import energy_efficiency, spectral_efficiency, total_power
from .instance import InfeasibleProblemError, ProblemInstance

__all__ = [
    "BisectionConfig",
    "BracketError",
    "EEResult",
    "FeasibilityReport",
    "evaluate_T",
    "bisection_max_ee",
    "feasibility_check",
    "make_inner",
]


class BracketError(RuntimeError):
    pass


@dataclass
class BisectionConfig:
    q_low: float = 0.0
    q_high: float = 10.0
    epsilon: float = 1e-3
    max_outer: int = 60
    max_doublings: int = 10

    def __post_init__(self):
        if not self.q_low < self.q_high:
            raise ValueError("q_low must be below q_high")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class EEResult:
    q_star: float
    solution: object
    trace: list = field(default_factory=list)     # (q_m, T(q_m), EE of the inner solution)
    status: str = "converged"
    inner: object = None
    evaluations: int = 0

    @property
    def ee_trace(self) -> list:
        return [row[2] for row in self.trace]


@dataclass
class FeasibilityReport:
    feasible: bool
    max_slack: float                 # W, best min_k EH slack with ZF streams and beta = 0
    upper_bound: float               # W, min_k of the full-power single-user harvesting bound
    powers: np.ndarray               # W per ZF stream at the optimum
    zf_directions: np.ndarray | None
    status: str = "optimal"


def make_inner(algorithm: str = "sca", solver_config=None, **kwargs) -> Callable:
    """Inner-solver handle ``inner(q, instance) -> InnerResult``."""
    from .sca import solve_inner
    from .zf import solve_inner_zf

    algorithm = str(algorithm).lower()
    if algorithm == "sca":
        return lambda q, inst: solve_inner(q, inst, solver_config, **kwargs)
    if algorithm == "zf":
        return lambda q, inst: solve_inner_zf(q, inst, solver_config, **kwargs)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _circuit(inst) -> float:
    return float(getattr(inst, "circuit_power", 0.0)) if inst is not None else 0.0


def _evaluate(q, inner, inst):
    res = inner(q, inst)
    return float(res.t_value) - q * _circuit(inst), res


def evaluate_T(q: float, inner: Callable, instance=None) -> float:
    """``T(q)``: the converged inner value minus ``q`` times the circuit power."""
    return _evaluate(q, inner, instance)[0]


def _ee(res, inst) -> float:
    if inst is None or not hasattr(res, "solution") or not isinstance(inst, ProblemInstance):
        return float("nan")
    return energy_efficiency(res.solution, inst.eff_channels, inst.precoder, inst.config)


def bisection_max_ee(inner: Callable, instance=None, bcfg: BisectionConfig | None = None) -> EEResult:
    bcfg = bcfg or BisectionConfig()
    q_s, q_b = bcfg.q_low, bcfg.q_high
    evaluations = 0
    t_b, res_b = _evaluate(q_b, inner, instance)
    evaluations += 1
    doublings = 0
    while t_b > 0:
        if doublings >= bcfg.max_doublings:
            raise BracketError(f"T({q_b:g}) = {t_b:g} still positive after {doublings} doublings")
        q_s = q_b
        q_b *= 2.0
        doublings += 1
        t_b, res_b = _evaluate(q_b, inner, instance)
        evaluations += 1
    trace = []
    best = None
    status = "max_outer"
    for _ in range(bcfg.max_outer):
        q_m = 0.5 * (q_s + q_b)
        t_m, res = _evaluate(q_m, inner, instance)
        evaluations += 1
        trace.append((q_m, t_m, _ee(res, instance)))
        best = (q_m, res)
        if abs(t_m) < bcfg.epsilon:
            status = "converged"
            break
        if t_m > 0:
            q_s = q_m
        else:
            q_b = q_m
    q_star, res = best
    return EEResult(q_star, res.solution if hasattr(res, "solution") else res, trace, status, res, evaluations)


def max_se(inner: Callable, instance: ProblemInstance):
    """Spectral-efficiency maximization (``q = 0``) with the resulting EE and SE."""
    res = inner(0.0, instance)
    sol = res.solution
    se = spectral_efficiency(sol, instance.eff_channels, instance.config)
    return res, se, se / total_power(sol, instance.precoder, None, instance.config)


def feasibility_check(instance: ProblemInstance, config=None) -> FeasibilityReport:
    """Max-min harvesting slack with ZF unicast streams and no information split.

    ``beta_k = 0`` and ``v_0 = 0`` leave the linear program

        maximize z  s.t.  eps (p_k c_k + d0) - E_min >= z,  sum p <= P_max,  p >= 0,

    whose optimum being nonnegative certifies a feasible point for both inner
    solvers.  ``upper_bound`` is the necessary condition with every watt aimed
    at the weakest user alone.
    """
    from .zf import ConditioningError, zf_unicast_precoders

    inst = instance if config is None else instance.with_config(config)
    cfg = inst.config
    K = inst.k_users
    eps = cfg.eh_efficiency
    best = inst.best_gain()
    upper = float(np.min(eps * (cfg.p_max * best + inst.noise_ant) - inst.e_min)) * inst.scale
    try:
        dirs = zf_unicast_precoders(inst.eff_channels, inst.precoder)
    except ConditioningError:
        return FeasibilityReport(False, -np.inf, upper, np.zeros(K), None, "rank_deficient")
    gains = np.abs(np.einsum("kn,kn->k", inst.eff_channels, dirs)) ** 2 / inst.scale
    b = ProgramBuilder()
    p = b.var("p", K)
    z = b.var("z", 1)
    # slack kept in units of E_min (or noise when E_min = 0) for conditioning
    unit = inst.e_min if inst.e_min > 0 else max(eps * inst.noise_ant, 1e-12)
    for k in range(K):
        b.nonneg(b.linear([p[k], z[0]], [eps * gains[k] / unit, -1.0], (eps * inst.noise_ant - inst.e_min) / unit),
                 f"eh[{k}]")
        b.nonneg(b.x(p[k]), f"p[{k}]")
    b.nonneg(b.linear(p, -np.ones(K), cfg.p_max), "budget")
    b.maximize(b.x(z[0]))
    sol = conic.solve(b.build(), 1e-9, 200)
    if sol.status not in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE):
        return FeasibilityReport(False, -np.inf, upper, np.zeros(K), dirs, sol.status.value)
    powers = np.clip(sol.x[p], 0.0, None)
    slack = float(np.min(eps * (powers * gains + inst.noise_ant) - inst.e_min)) * inst.scale
    return FeasibilityReport(bool(slack >= 0.0), slack, upper, powers, dirs, sol.status.value)


def require_feasible(instance: ProblemInstance) -> FeasibilityReport:
    report = feasibility_check(instance)
    if not report.feasible:
        raise InfeasibleProblemError(
            f"harvesting constraints cannot be certified (max slack {report.max_slack:.3e} W, "
            f"upper bound {report.upper_bound:.3e} W)", report)
    return report
