"""Joint digital precoding and power-splitting design for a fixed ``q``.

The inner problem

    max  sum_{j=0..K} log2(1 + t_j) - q xi sum_j ||F v_j||^2

over the multicast/unicast precoders and splitting ratios is handled by
successive convex approximation.  With ``mu_k = 1/beta_k`` and
``omega_k = 1/(1 - beta_k)`` each iteration solves a conic program in which

* every ``|h_k v|^2`` on the "large" side of a constraint is replaced by its
  first-order minorant around the previous precoders,
* the products ``t_0 tau_k`` and ``t_k lambda_k`` are replaced by the
  arithmetic-geometric majorant ``(a'/2b') b^2 + (b'/2a') a^2 >= a b``
  anchored at the previous values,
* ``(mu_k - 1)(omega_k - 1) >= 1`` keeps ``1/mu_k + 1/omega_k <= 1``.

Each new point is re-evaluated exactly (``beta = 1/mu``, SINRs from the
precoders), which both defines the objective trace and the next anchors.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ProgramBuilder, SolveStatus, epigraph_log2, embed_complex_quadratic
from .instance import InfeasibleProblemError, ProblemInstance, SolverFailure
from .metrics import DigitalSolution

__all__ = [
    "ScaConfig",
    "ScaState",
    "InnerResult",
    "TRACE_FIELDS",
    "exact_quantities",
    "initialize_feasible",
    "build_subproblem",
    "iterate",
    "solve_inner",
    "trace_csv",
]

FLOOR = 1e-9
TRACE_FIELDS = ("algorithm", "iter", "objective", "t0", "min_tk", "power", "max_eh_violation")


@dataclass
class ScaConfig:
    tol: float = 1e-5
    t_max: int = 60
    solver_tol: float = 1e-9
    solver_max_iters: int = 200
    init_power_fraction: float = 0.9
    init_betas: tuple = (0.5, 0.4, 0.3, 0.2, 0.1)


@dataclass
class ScaState:
    """SCA iterate in reduced coordinates (row 0 of ``v_hat`` is multicast)."""

    v_hat: np.ndarray
    t_prev: np.ndarray          # (t_0, t_1..t_K)
    tau_prev: np.ndarray
    lambda_prev: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    objective_trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        return 1.0 / self.mu


@dataclass
class InnerResult:
    solution: DigitalSolution
    t_value: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    t: np.ndarray | None = None
    raw_mu: np.ndarray | None = None
    raw_omega: np.ndarray | None = None
    rejected_steps: int = 0
    algorithm: str = "sca"
    stop_reason: str = "tolerance"
    rejected_drop: float = 0.0      # objective decrease of the discarded step, if any


def _received(inst: ProblemInstance, c: np.ndarray) -> np.ndarray:
    """``P[k, j] = |h_k v_j|^2`` in solver units."""
    return np.abs(inst.reduced_channels @ c.T) ** 2


def _power(inst: ProblemInstance, c: np.ndarray) -> float:
    return float(np.sum(np.abs(c @ inst.power_factor.T) ** 2))


def exact_quantities(inst: ProblemInstance, c: np.ndarray, beta: np.ndarray) -> dict:
    """SINRs, interference sums and harvested energy of a point."""
    P = _received(inst, c)
    d0, d1 = inst.noise_ant, inst.noise_id
    mu = 1.0 / beta
    uni = P[:, 1:]
    total_uni = uni.sum(axis=1)
    own = np.diag(uni)
    tau = total_uni + d0 + mu * d1
    lam = total_uni - own + d0 + mu * d1
    g0 = P[:, 0] / tau
    gk = own / lam
    eh = inst.config.eh_efficiency * (1.0 - beta) * (P.sum(axis=1) + d0)
    return {"P": P, "tau": tau, "lam": lam, "sinr_common": g0, "sinr_private": gk, "eh": eh}


def harvest_safe_beta(inst: ProblemInstance, recv: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Lower ``beta`` where solver round-off left harvesting just short of ``E_min``."""
    cap = 1.0 - inst.e_min / (inst.config.eh_efficiency * recv) * (1.0 + 1e-8)
    return np.where(cap > FLOOR, np.minimum(beta, cap), beta)


def _objective(q: float, xi: float, t: np.ndarray, power: float) -> float:
    return float(np.sum(np.log2(1.0 + t)) - q * xi * power)


def _state_from_point(inst: ProblemInstance, c: np.ndarray, beta: np.ndarray) -> ScaState:
    ex = exact_quantities(inst, c, beta)
    t = np.concatenate([[ex["sinr_common"].min()], ex["sinr_private"]])
    mu = 1.0 / beta
    omega = 1.0 / (1.0 - beta)
    return ScaState(c, np.maximum(t, FLOOR), np.maximum(ex["tau"], FLOOR), np.maximum(ex["lam"], FLOOR), mu, omega)


def _matched_point(inst: ProblemInstance, total_power: float) -> np.ndarray:
    K = inst.k_users
    Hr = inst.reduced_channels
    dirs = Hr.conj() / np.linalg.norm(Hr, axis=1, keepdims=True)
    common = dirs.sum(axis=0)
    common = common / np.linalg.norm(common) if np.linalg.norm(common) > 0 else dirs[0]
    c = np.vstack([common[None, :], dirs])
    # equal radiated power per stream
    per = total_power / (K + 1)
    norms = np.sqrt([_power(inst, row[None, :]) for row in c])
    return c * (np.sqrt(per) / norms)[:, None]


def _eh_ok(inst: ProblemInstance, c, beta, margin=1e-9) -> bool:
    ex = exact_quantities(inst, c, beta)
    return bool(np.all(ex["eh"] >= inst.e_min * (1.0 + margin)))


def _fallback_point(inst: ProblemInstance):
    """Point from the max-min harvesting power allocation, or None."""
    from .dinkelbach import feasibility_check

    report = feasibility_check(inst)
    if not report.feasible:
        return None, report
    K = inst.k_users
    c_uni = inst.to_reduced(report.zf_directions * np.sqrt(report.powers)[:, None])
    c = np.vstack([np.zeros((1, inst.dim), dtype=complex), c_uni])
    recv = _received(inst, c).sum(axis=1) + inst.noise_ant
    eps = inst.config.eh_efficiency
    # largest ratio keeping a 1% harvesting margin
    beta = 1.0 - 1.01 * inst.e_min / (eps * recv)
    if np.any(beta <= 0):
        return None, report
    beta = np.minimum(beta, 0.5)
    # move a share of the budget to a matched multicast beam so t_0 > 0; a
    # zero multicast precoder makes the first surrogate degenerate
    p_uni = _power(inst, c)
    common = _matched_point(inst, inst.config.p_max * (K + 1))[0]
    for share in (0.5, 0.2, 0.05, 0.01, 1e-3):
        trial = c * np.sqrt(1.0 - share) if p_uni >= (1.0 - share) * inst.config.p_max else c.copy()
        trial[0] = common * np.sqrt(min(share, 1.0 - _power(inst, trial) / inst.config.p_max))
        recv_t = _received(inst, trial).sum(axis=1) + inst.noise_ant
        beta_t = np.minimum(1.0 - 1.01 * inst.e_min / (eps * recv_t), 0.5)
        if np.all(beta_t > 0) and _eh_ok(inst, trial, beta_t):
            return (trial, beta_t), report
    return (c, beta), report


def initialize_feasible(inst: ProblemInstance, sca_config: ScaConfig | None = None) -> ScaState:
    """Strictly feasible starting point.

    Matched-filter precoders with ``init_power_fraction * P_max`` split
    equally over the ``K + 1`` streams, with ``beta`` as large as harvesting
    allows (or lowered from 0.5 to 0.1 until harvesting holds); otherwise the zero-forcing max-min harvesting
    allocation.  Raises :class:`InfeasibleProblemError` when neither works.
    """
    cfg = sca_config or ScaConfig()
    K = inst.k_users
    c = _matched_point(inst, cfg.init_power_fraction * inst.config.p_max)
    # largest split ratios that keep harvesting 1% above E_min
    recv = _received(inst, c).sum(axis=1) + inst.noise_ant
    tight = np.minimum(1.0 - 1.01 * inst.e_min / (inst.config.eh_efficiency * recv), 1.0 - 1e-6)
    if np.all(tight > 0) and _eh_ok(inst, c, tight):
        return _state_from_point(inst, c, tight)
    for b in cfg.init_betas:
        beta = np.full(K, float(b))
        if _eh_ok(inst, c, beta):
            return _state_from_point(inst, c, beta)
    point, report = _fallback_point(inst)
    if point is None:
        raise InfeasibleProblemError("no feasible initial point: harvesting demand exceeds what P_max can deliver",
                                     report)
    return _state_from_point(inst, *point)


def _vars(b: ProgramBuilder, K: int, d: int):
    V = {}
    V["vr"] = b.var("v_re", (K + 1) * d).reshape(K + 1, d)
    V["vi"] = b.var("v_im", (K + 1) * d).reshape(K + 1, d)
    V["t"] = b.var("t_k", K)
    V["tau"] = b.var("tau", K)
    V["lam"] = b.var("lambda", K)
    V["mu"] = b.var("mu_excess", K)       # mu - 1 = (1 - beta) / beta
    V["om"] = b.var("omega_excess", K)    # omega - 1 = beta / (1 - beta)
    V["t0"] = b.var("t0", 1)
    V["r"] = b.var("r", K + 1)
    V["s"] = b.var("s", 1)
    return V


def _bal(a: float) -> float:
    return float(min(max(a, 1e-6), 1e6))


def build_subproblem(state: ScaState, q: float, inst: ProblemInstance):
    """Convex restriction around ``state``; returns ``(program, var_index)``."""
    K, d = inst.k_users, inst.dim
    H = inst.reduced_channels
    d0, d1 = inst.noise_ant, inst.noise_id
    eps = inst.config.eh_efficiency
    b = ProgramBuilder()
    V = _vars(b, K, d)
    n = b.n

    # y[k][j] = rows giving (Re, Im) of h_k v_j
    Y = [[embed_complex_quadratic(H[k], V["vr"][j], V["vi"][j], n) for j in range(K + 1)] for k in range(K)]
    yhat = H @ state.v_hat.T                                  # (K, K+1) complex

    def lin(k, j):
        # 2 Re{conj(yhat) y} - |yhat|^2, the minorant of |h_k v_j|^2
        yh = yhat[k, j]
        coef = 2.0 * (yh.real * Y[k][j][0] + yh.imag * Y[k][j][1])
        return conic.Affine(coef, -abs(yh) ** 2)

    def rows(M):
        return [conic.Affine(M[0]), conic.Affine(M[1])]

    t0 = b.x(V["t0"][0])
    t0p = state.t_prev[0]
    for k in range(K):
        tau, lam = b.x(V["tau"][k]), b.x(V["lam"][k])
        mu, om = b.x(V["mu"][k]) + 1.0, b.x(V["om"][k]) + 1.0
        mu_x, om_x = b.x(V["mu"][k]), b.x(V["om"][k])
        tk = b.x(V["t"][k])
        taup, lamp, tkp = state.tau_prev[k], state.lambda_prev[k], state.t_prev[1 + k]
        # common SINR: minorant >= majorant of t0 * tau_k
        b.quad_le([np.sqrt(t0p / (2 * taup)) * tau, np.sqrt(taup / (2 * t0p)) * t0], lin(k, 0), f"common[{k}]",
                  _bal(abs(yhat[k, 0])))
        # private SINR
        b.quad_le([np.sqrt(tkp / (2 * lamp)) * lam, np.sqrt(lamp / (2 * tkp)) * tk], lin(k, 1 + k), f"private[{k}]",
                  _bal(abs(yhat[k, 1 + k])))
        # tau_k >= sum_{i>=1} |h_k v_i|^2 + d0 + mu d1
        zs = [z for j in range(1, K + 1) for z in rows(Y[k][j])]
        b.quad_le(zs, tau - d0 - d1 * mu, f"tau[{k}]", _bal(np.sqrt(taup)))
        zs = [z for j in range(1, K + 1) if j != 1 + k for z in rows(Y[k][j])]
        if zs:
            b.quad_le(zs, lam - d0 - d1 * mu, f"lambda[{k}]", _bal(np.sqrt(lamp)))
        else:
            b.nonneg(lam - d0 - d1 * mu, f"lambda[{k}]")
        # harvesting, linearized
        eh = sum((lin(k, j) for j in range(K + 1)), b.const(d0))
        b.nonneg(eh - (inst.e_min / eps) * om, f"eh[{k}]")
        # (mu - 1)(omega - 1) >= 1
        b.rsoc(mu_x, om_x, [b.const(1.0)], f"split[{k}]", _bal((1.0 - state.beta[k]) / state.beta[k]))
        b.nonneg(tk, f"t_nonneg[{k}]")
    b.nonneg(t0, "t0_nonneg")

    # radiated power epigraph and budget
    R = inst.power_factor
    zs = []
    for j in range(K + 1):
        # ||R c||^2 with c = vr + j vi: real part rows [Rr, -Ri], imag rows [Ri, Rr]
        for row in range(R.shape[0]):
            cr = np.zeros(n)
            ci = np.zeros(n)
            cr[V["vr"][j]] = R[row].real
            cr[V["vi"][j]] = -R[row].imag
            ci[V["vr"][j]] = R[row].imag
            ci[V["vi"][j]] = R[row].real
            zs += [conic.Affine(cr), conic.Affine(ci)]
    s = b.x(V["s"][0])
    b.quad_le(zs, s, "power_epigraph", np.sqrt(inst.config.p_max))
    b.nonneg(inst.config.p_max - s, "power_budget")

    rate = b.const(0.0)
    for j in range(K + 1):
        r = b.x(V["r"][j])
        epigraph_log2(b, t0 if j == 0 else b.x(V["t"][j - 1]), r, f"rate[{j}]", 1.0 + state.t_prev[j])
        rate = rate + r
    b.maximize(rate - (q * inst.config.pa_factor) * s)
    return b.build(), V


def _record(state: ScaState, inst: ProblemInstance, q: float, it: int, algorithm: str = "sca"):
    beta = state.beta
    ex = exact_quantities(inst, state.v_hat, beta)
    power = _power(inst, state.v_hat)
    obj = _objective(q, inst.config.pa_factor, np.concatenate([[ex["sinr_common"].min()], ex["sinr_private"]]), power)
    row = {
        "algorithm": algorithm,
        "iter": it,
        "objective": obj,
        "t0": float(ex["sinr_common"].min()),
        "min_tk": float(ex["sinr_private"].min()),
        "power": power,
        "max_eh_violation": float(np.max(inst.e_min - ex["eh"]) * inst.scale),
    }
    return obj, row


def _var_scale(state: ScaState, inst: ProblemInstance, V, n: int) -> np.ndarray:
    """Magnitudes of the previous iterate, used to condition the solve."""
    d = np.ones(n)
    floor = 1e-4 * np.sqrt(inst.config.p_max / inst.dim)
    rms = np.sqrt(np.mean(np.abs(state.v_hat) ** 2, axis=1))
    d[V["vr"]] = d[V["vi"]] = np.maximum(rms, floor)[:, None]
    d[V["t"]] = np.maximum(state.t_prev[1:], 1.0)
    d[V["t0"]] = max(state.t_prev[0], 1.0)
    d[V["tau"]] = state.tau_prev
    d[V["lam"]] = state.lambda_prev
    beta = state.beta
    d[V["mu"]] = (1.0 - beta) / beta
    d[V["om"]] = beta / (1.0 - beta)
    d[V["r"]] = 1.0 + np.log2(1.0 + state.t_prev)
    d[V["s"]] = max(_power(inst, state.v_hat), 1e-6 * inst.config.p_max)
    return d


def _repair(x, V, inst: ProblemInstance):
    """Exact point from solver values, pulled back inside the power and harvesting sets.

    Returns ``None`` when harvesting cannot be met after the pull-back.
    """
    c = x[V["vr"]] + 1j * x[V["vi"]]
    beta = np.clip(1.0 / (1.0 + np.maximum(x[V["mu"]], 0.0)), FLOOR, 1.0 - FLOOR)
    power = _power(inst, c)
    if power > inst.config.p_max:
        c = c * np.sqrt(inst.config.p_max / power)
    recv = _received(inst, c).sum(axis=1) + inst.noise_ant
    beta = harvest_safe_beta(inst, recv, beta)
    if not _eh_ok(inst, c, beta, margin=0.0):
        return None
    return _state_from_point(inst, c, beta)


def iterate(state: ScaState, q: float, inst: ProblemInstance, sca_config: ScaConfig | None = None,
            it: int = 0):
    """One SCA step.  Returns ``(new_state, raw)``; ``raw`` holds solver values.

    When the backend only reaches reduced accuracy, every attempt it made is
    repaired and evaluated exactly, and the best one is kept.
    """
    cfg = sca_config or ScaConfig()
    program, V = build_subproblem(state, q, inst)
    attempts = conic.solve(program, cfg.solver_tol, cfg.solver_max_iters, _var_scale(state, inst, V, program.num_vars),
                           candidates=True)
    best = None
    for sol in attempts:
        if sol.status not in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE):
            continue
        new = _repair(sol.x, V, inst)
        if new is None:
            continue
        obj = _record(new, inst, q, it)[0]
        if best is None or obj > best[0]:
            best = (obj, new, sol)
    if best is None:
        status = min(attempts, key=lambda s: conic._RANK[s.status]).status
        raise SolverFailure(f"SCA subproblem at iteration {it} gave no usable point ({status.value})", it, status)
    _, new, sol = best
    x = sol.x
    raw = {"mu": 1.0 + x[V["mu"]], "omega": 1.0 + x[V["om"]], "t0": x[V["t0"]][0], "t": x[V["t"]],
           "status": sol.status, "objective": sol.primal_objective}
    return new, raw


def run_iterations(state, step, record, tol: float, t_max: int) -> dict:
    """Shared outer loop of the inner solvers.

    ``step(state, it) -> (new_state, raw)`` and ``record(state, it) ->
    (objective, row)``.  A step whose exact objective falls below the
    current one can only come from solver round-off; it is discarded and the
    loop stops.  A failed subproblem also stops the loop and keeps the last
    accepted (feasible) point.
    """
    obj, row = record(state, 0)
    out = {"trace": [obj], "rows": [row], "raw": None, "rejected": 0, "drop": 0.0, "converged": False,
           "stop_reason": "max_iterations", "iterations": 0}
    for it in range(1, t_max + 1):
        out["iterations"] = it
        try:
            new, raw = step(state, it)
        except SolverFailure:
            out["stop_reason"] = "solver_failure"
            break
        new_obj, new_row = record(new, it)
        if new_obj < obj:
            out["rejected"] += 1
            out["drop"] = obj - new_obj
            out["converged"] = True
            out["stop_reason"] = "rejected_step"
            break
        delta = new_obj - obj
        state, obj, out["raw"] = new, new_obj, raw
        out["trace"].append(obj)
        out["rows"].append(new_row)
        if delta < tol:
            out["converged"] = True
            out["stop_reason"] = "tolerance"
            break
    out["state"], out["objective"] = state, obj
    return out


def solve_inner(q: float, inst: ProblemInstance, sca_config: ScaConfig | None = None,
                state: ScaState | None = None) -> InnerResult:
    """Run SCA until the objective changes by less than ``tol`` or ``t_max``."""
    cfg = sca_config or ScaConfig()
    state = state or initialize_feasible(inst, cfg)
    run = run_iterations(state, lambda st, it: iterate(st, q, inst, cfg, it),
                         lambda st, it: _record(st, inst, q, it), cfg.tol, cfg.t_max)
    state = run["state"]
    raw = run["raw"] or {"mu": state.mu, "omega": state.omega}
    ex = exact_quantities(inst, state.v_hat, state.beta)
    full = inst.to_full(state.v_hat)
    sol = DigitalSolution(full[0], full[1:], state.beta)
    t = np.concatenate([[ex["sinr_common"].min()], ex["sinr_private"]])
    return InnerResult(sol, run["objective"], run["iterations"], run["converged"], run["trace"], run["rows"], t,
                       np.asarray(raw["mu"]), np.asarray(raw["omega"]), run["rejected"], "sca", run["stop_reason"],
                       run["drop"])


def trace_csv(rows, algorithm: str | None = None) -> str:
    """Iteration rows as CSV text with a header line."""
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=TRACE_FIELDS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(dict(r, algorithm=algorithm or r.get("algorithm", "sca")))
    return out.getvalue()
