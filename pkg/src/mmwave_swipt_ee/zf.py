"""Low-complexity inner solver with zero-forcing unicast directions.

The private precoders are fixed to normalized zero-forcing columns, so each
user's private stream sees no other private stream.  What remains is the
multicast precoder ``v0``, the unicast powers ``p_k`` and the splitting
ratios ``beta_k``.  Per iteration a conic program is solved in which

* ``g_k >= 1/beta_k`` and ``o_k >= E_min / (eps (1 - beta_k))`` are the 2x2
  positive-semidefinite conditions ``[[g, 1], [1, beta]]`` and
  ``[[o, sqrt(E_min)], [sqrt(E_min), eps (1 - beta)]]``, written as rotated
  cones,
* the common-stream SINR ``|h v0|^2 / Gamma`` (quadratic over affine, jointly
  convex) is replaced by its tangent plane, a global under-estimator,
* ``t_k g_k`` in the private-rate constraint is majorized as in the SCA
  solver.
"""

from __future__ import annotations

import itertools

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ProgramBuilder, SolveStatus, embed_complex_quadratic, epigraph_log2
from .instance import InfeasibleProblemError, ProblemInstance, SolverFailure
from .metrics import DigitalSolution
from .sca import FLOOR, InnerResult, harvest_safe_beta, run_iterations

__all__ = [
    "ConditioningError",
    "ZfConfig",
    "ZfInit",
    "ZfState",
    "zf_unicast_precoders",
    "zf_exact_quantities",
    "initialize_zf",
    "build_zf_subproblem",
    "iterate_zf",
    "solve_inner_zf",
]


class ConditioningError(np.linalg.LinAlgError):
    def __init__(self, message, smallest_singular_value):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


@dataclass
class ZfConfig:
    tol: float = 1e-5
    t_max: int = 60
    solver_tol: float = 1e-9
    solver_max_iters: int = 200
    init_betas: tuple = (0.5, 0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class ZfInit:
    """Starting point recipe.

    ``common_power`` and ``unicast_power`` are fractions of ``P_max``; the
    unicast share is split equally.  ``v0_direction`` is ``"matched"`` (sum of
    unit matched filters) or ``"random"`` (drawn from ``seed``).  ``beta=None``
    starts each user at the largest split ratio that keeps harvesting 1%
    above ``E_min``, which is usually close to the optimum.
    """

    common_power: float = 0.45
    unicast_power: float = 0.45
    beta: float | None = None
    v0_direction: str = "matched"
    seed: int = 0


@dataclass
class ZfState:
    v_unicast: np.ndarray        # (K, N_RF), ||F v_k|| = 1
    gains: np.ndarray            # |h_k v_k|^2 in solver units
    v0_hat: np.ndarray           # reduced coordinates
    p: np.ndarray
    beta: np.ndarray
    g_prev: np.ndarray
    t_prev: np.ndarray           # private SINR anchors t_k
    gamma_prev: np.ndarray       # Gamma_k = p_k c_k + d0 + g_k d1


def zf_unicast_precoders(eff_channels, precoder) -> np.ndarray:
    """Columns of ``H^H (H H^H)^-1`` scaled to unit radiated power.

    Returns a ``(K, N_RF)`` array whose row ``k`` is ``v_k``; ``h_k v_k`` is
    real and positive and ``h_k v_i = 0`` for ``i != k``.
    """
    H = np.atleast_2d(np.asarray(eff_channels, dtype=complex))
    K, n = H.shape
    svals = np.linalg.svd(H, compute_uv=False)
    smin = float(svals[-1]) if K <= n else 0.0
    if K > n or smin <= 1e-12 * max(float(svals[0]), 1e-300):
        raise ConditioningError(f"effective channel is rank deficient (smallest singular value {smin:.3e})", smin)
    V = H.conj().T @ np.linalg.inv(H @ H.conj().T)          # (n, K)
    F = precoder.matrix if hasattr(precoder, "matrix") else np.asarray(precoder)
    norms = np.linalg.norm(F @ V, axis=0)
    V = V / norms
    phase = np.exp(-1j * np.angle(np.einsum("kn,nk->k", H, V)))
    return (V * phase).T


def zf_exact_quantities(inst: ProblemInstance, state_like) -> dict:
    """SINRs and harvested energy of a ZF point (solver units)."""
    c0 = state_like["v0"]
    p, beta, gains = state_like["p"], state_like["beta"], state_like["gains"]
    d0, d1 = inst.noise_ant, inst.noise_id
    y0 = np.abs(inst.reduced_channels @ c0) ** 2
    uni = p * gains
    g0 = beta * y0 / (beta * (uni + d0) + d1)
    gk = beta * uni / (beta * d0 + d1)
    recv = uni + y0 + d0
    eh = inst.config.eh_efficiency * (1.0 - beta) * recv
    power = float(np.sum(np.abs(c0 @ inst.power_factor.T) ** 2) + np.sum(p))
    return {"y0": y0, "sinr_common": g0, "sinr_private": gk, "recv": recv, "eh": eh, "power": power}


def _direction(inst: ProblemInstance, mode: str, seed: int) -> np.ndarray:
    Hr = inst.reduced_channels
    if mode == "matched":
        d = (Hr.conj() / np.linalg.norm(Hr, axis=1, keepdims=True)).sum(axis=0)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        d = rng.standard_normal(inst.dim) + 1j * rng.standard_normal(inst.dim)
    elif mode.startswith("user"):
        d = Hr[int(mode[4:])].conj()
    else:
        raise ValueError(f"unknown multicast direction {mode!r}")
    return d / np.sqrt(np.sum(np.abs(d @ inst.power_factor.T) ** 2))


def _make_state(inst, v_uni, gains, c0, p, beta) -> ZfState:
    ex = zf_exact_quantities(inst, {"v0": c0, "p": p, "beta": beta, "gains": gains})
    g = 1.0 / beta
    gamma = p * gains + inst.noise_ant + g * inst.noise_id
    return ZfState(v_uni, gains, c0, p, beta, g, np.maximum(ex["sinr_private"], FLOOR), gamma)


def initialize_zf(inst: ProblemInstance, init: ZfInit | None = None, zf_config: ZfConfig | None = None) -> ZfState:
    init = init or ZfInit()
    cfg = zf_config or ZfConfig()
    K = inst.k_users
    v_uni = zf_unicast_precoders(inst.eff_channels, inst.precoder)
    gains = np.abs(np.einsum("kn,kn->k", inst.eff_channels, v_uni)) ** 2 / inst.scale
    pmax = inst.config.p_max
    c0 = _direction(inst, init.v0_direction, init.seed) * np.sqrt(init.common_power * pmax)
    p = np.full(K, init.unicast_power * pmax / K)
    if init.beta is None:
        recv = zf_exact_quantities(inst, {"v0": c0, "p": p, "beta": np.full(K, 0.5), "gains": gains})["recv"]
        tight = 1.0 - 1.01 * inst.e_min / (inst.config.eh_efficiency * recv)
        if np.all(tight > 0):
            return _make_state(inst, v_uni, gains, c0, p, np.minimum(tight, 1.0 - 1e-6))
        start = 0.5
    else:
        start = init.beta
    betas = (start,) + tuple(b for b in cfg.init_betas if b < start)
    for b in betas:
        beta = np.full(K, float(b))
        ex = zf_exact_quantities(inst, {"v0": c0, "p": p, "beta": beta, "gains": gains})
        if np.all(ex["eh"] >= inst.e_min * (1 + 1e-9)):
            return _make_state(inst, v_uni, gains, c0, p, beta)
    # max-min harvesting allocation with a small multicast share
    from .dinkelbach import feasibility_check

    report = feasibility_check(inst)
    if not report.feasible:
        raise InfeasibleProblemError("no feasible initial point for the zero-forcing solver", report)
    cap = init.beta if init.beta is not None else 1.0 - 1e-6
    direction = _direction(inst, init.v0_direction, init.seed)
    # try several multicast shares and unicast splits (from max-min harvesting
    # towards equal) and keep the best feasible start; a tiny
    # multicast stream grows only slowly under the linearized constraints
    best = None
    equal = np.full(K, report.powers.sum() / K)
    for share, mix in itertools.product((0.5, 0.3, 0.2, 0.1, 0.02, 0.0), (1.0, 0.8, 0.5, 0.2)):
        p = (mix * report.powers + (1.0 - mix) * equal) * (1.0 - share)
        c0 = direction * np.sqrt(share * pmax)
        recv = zf_exact_quantities(inst, {"v0": c0, "p": p, "beta": np.full(K, 0.5), "gains": gains})["recv"]
        beta = np.minimum(1.0 - 1.01 * inst.e_min / (inst.config.eh_efficiency * recv), cap)
        if np.all(beta > 0):
            state = _make_state(inst, v_uni, gains, c0, p, beta)
            rate = _objective(inst, state, 0.0)[0]
            if best is None or rate > best[0]:
                best = (rate, state)
    if best is None:
        raise InfeasibleProblemError("no strictly feasible initial point for the zero-forcing solver", report)
    return best[1]


def _vars(b: ProgramBuilder, K: int, d: int):
    V = {}
    V["vr"] = b.var("v0_re", d)
    V["vi"] = b.var("v0_im", d)
    V["beta"] = b.var("beta", K)
    V["p"] = b.var("p", K)
    V["g"] = b.var("g", K)
    V["o"] = b.var("o", K)
    V["t"] = b.var("t_k", K)
    V["t0"] = b.var("t0", 1)
    V["s"] = b.var("s", 1)
    V["r"] = b.var("r", K + 1)
    return V


def _bal(a: float) -> float:
    return float(min(max(a, 1e-6), 1e6))


def _var_scale(state: ZfState, inst: ProblemInstance, V, n: int) -> np.ndarray:
    d = np.ones(n)
    pmax = inst.config.p_max
    rms = np.sqrt(np.mean(np.abs(state.v0_hat) ** 2))
    d[V["vr"]] = d[V["vi"]] = max(rms, 1e-4 * np.sqrt(pmax / inst.dim))
    d[V["p"]] = np.maximum(state.p, 1e-6 * pmax)
    d[V["g"]] = state.g_prev
    d[V["o"]] = max(inst.e_min, 1e-6) / (inst.config.eh_efficiency * (1.0 - state.beta))
    d[V["beta"]] = state.beta
    d[V["t"]] = np.maximum(state.t_prev, 1.0)
    d[V["s"]] = max(float(np.sum(np.abs(state.v0_hat @ inst.power_factor.T) ** 2)), 1e-6 * pmax)
    yhat = inst.reduced_channels @ state.v0_hat
    d[V["t0"]] = max(float(np.min(np.abs(yhat) ** 2 / state.gamma_prev)), 1.0)
    d[V["r"]] = 1.0 + np.log2(1.0 + np.concatenate([[d[V["t0"]][0]], d[V["t"]]]))
    return d


def build_zf_subproblem(state: ZfState, q: float, inst: ProblemInstance):
    """Convex restriction around ``state``; returns ``(program, var_index)``."""
    K, d = inst.k_users, inst.dim
    H = inst.reduced_channels
    d0, d1 = inst.noise_ant, inst.noise_id
    eps = inst.config.eh_efficiency
    e_min = inst.e_min
    b = ProgramBuilder()
    V = _vars(b, K, d)
    n = b.n
    yhat = H @ state.v0_hat
    t0 = b.x(V["t0"][0])
    for k in range(K):
        M = embed_complex_quadratic(H[k], V["vr"], V["vi"], n)
        re_im = 2.0 * (yhat[k].real * M[0] + yhat[k].imag * M[1])      # 2 Re{conj(yhat) y}
        lin = conic.Affine(re_im, -abs(yhat[k]) ** 2)
        beta, p, g, o, tk = (b.x(V[key][k]) for key in ("beta", "p", "g", "o", "t"))
        ck = state.gains[k]
        # harvesting with the multicast term linearized
        b.nonneg(ck * p + lin + d0 - o, f"eh[{k}]")
        # g beta >= 1 and o eps (1 - beta) >= E_min
        bp = state.beta[k]
        b.rsoc(g, beta, [b.const(1.0)], f"schur_g[{k}]", _bal(1.0 / bp))
        b.rsoc(o, eps * (1.0 - beta), [b.const(np.sqrt(e_min))], f"schur_o[{k}]",
               _bal(np.sqrt(max(e_min, 1e-12)) / (eps * (1.0 - bp))))
        # tangent plane of |y|^2 / Gamma at the previous point
        gp = state.gamma_prev[k]
        gamma = ck * p + d0 + d1 * g
        b.nonneg(conic.Affine(re_im) * (1.0 / gp) - gamma * (abs(yhat[k]) ** 2 / gp ** 2) - t0, f"common[{k}]")
        # (c_k/d1) p - (d0/d1) t >= t g, with the product majorized
        tp, gp_ = state.t_prev[k], state.g_prev[k]
        b.quad_le([np.sqrt(tp / (2 * gp_)) * g, np.sqrt(gp_ / (2 * tp)) * tk], (ck / d1) * p - (d0 / d1) * tk,
                  f"private[{k}]", _bal(np.sqrt(tp * gp_)))
        b.nonneg(beta, f"beta_min[{k}]")
        b.nonneg(1.0 - beta, f"beta_max[{k}]")
        b.nonneg(p, f"p_nonneg[{k}]")
        b.nonneg(tk, f"t_nonneg[{k}]")
    b.nonneg(t0, "t0_nonneg")
    R = inst.power_factor
    zs = []
    for row in range(R.shape[0]):
        cr = np.zeros(n)
        ci = np.zeros(n)
        cr[V["vr"]] = R[row].real
        cr[V["vi"]] = -R[row].imag
        ci[V["vr"]] = R[row].imag
        ci[V["vi"]] = R[row].real
        zs += [conic.Affine(cr), conic.Affine(ci)]
    s = b.x(V["s"][0])
    b.quad_le(zs, s, "power_epigraph", np.sqrt(inst.config.p_max))
    p_sum = b.linear(V["p"], np.ones(K))
    b.nonneg(inst.config.p_max - s - p_sum, "power_budget")
    rate = b.const(0.0)
    yhat = inst.reduced_channels @ state.v0_hat
    refs = 1.0 + np.concatenate([[np.min(np.abs(yhat) ** 2 / state.gamma_prev)], state.t_prev])
    for j in range(K + 1):
        r = b.x(V["r"][j])
        epigraph_log2(b, t0 if j == 0 else b.x(V["t"][j - 1]), r, f"rate[{j}]", refs[j])
        rate = rate + r
    b.maximize(rate - (q * inst.config.pa_factor) * (p_sum + s))
    return b.build(), V


def _objective(inst, state: ZfState, q: float):
    ex = zf_exact_quantities(inst, {"v0": state.v0_hat, "p": state.p, "beta": state.beta, "gains": state.gains})
    rate = np.log2(1.0 + ex["sinr_common"].min()) + np.sum(np.log2(1.0 + ex["sinr_private"]))
    return float(rate - q * inst.config.pa_factor * ex["power"]), ex


def _row(inst, state, q, it):
    obj, ex = _objective(inst, state, q)
    return obj, {
        "algorithm": "zf",
        "iter": it,
        "objective": obj,
        "t0": float(ex["sinr_common"].min()),
        "min_tk": float(ex["sinr_private"].min()),
        "power": ex["power"],
        "max_eh_violation": float(np.max(inst.e_min - ex["eh"]) * inst.scale),
    }


def _repair(x, V, state: ZfState, inst: ProblemInstance):
    """Exact point from solver values inside the power and harvesting sets, or ``None``."""
    c0 = x[V["vr"]] + 1j * x[V["vi"]]
    p = np.maximum(x[V["p"]], 0.0)
    beta = np.clip(x[V["beta"]], FLOOR, 1.0 - FLOOR)
    power = float(np.sum(np.abs(c0 @ inst.power_factor.T) ** 2) + np.sum(p))
    if power > inst.config.p_max:
        shrink = inst.config.p_max / power
        c0, p = c0 * np.sqrt(shrink), p * shrink
    recv = zf_exact_quantities(inst, {"v0": c0, "p": p, "beta": beta, "gains": state.gains})["recv"]
    beta = harvest_safe_beta(inst, recv, beta)
    if np.any(inst.config.eh_efficiency * (1.0 - beta) * recv < inst.e_min):
        return None
    return _make_state(inst, state.v_unicast, state.gains, c0, p, beta)


def iterate_zf(state: ZfState, q: float, inst: ProblemInstance, zf_config: ZfConfig | None = None, it: int = 0):
    """One ZF step; reduced-accuracy attempts are compared on the exact objective."""
    cfg = zf_config or ZfConfig()
    program, V = build_zf_subproblem(state, q, inst)
    attempts = conic.solve(program, cfg.solver_tol, cfg.solver_max_iters, _var_scale(state, inst, V, program.num_vars),
                           candidates=True)
    best = None
    for sol in attempts:
        if sol.status not in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE):
            continue
        new = _repair(sol.x, V, state, inst)
        if new is None:
            continue
        obj = _objective(inst, new, q)[0]
        if best is None or obj > best[0]:
            best = (obj, new, sol)
    if best is None:
        status = min(attempts, key=lambda s: conic._RANK[s.status]).status
        raise SolverFailure(f"ZF subproblem at iteration {it} gave no usable point ({status.value})", it, status)
    _, new, sol = best
    x = sol.x
    raw = {"g": x[V["g"]], "o": x[V["o"]], "t0": x[V["t0"]][0], "t": x[V["t"]], "status": sol.status}
    return new, raw


def solve_inner_zf(q: float, inst: ProblemInstance, zf_config: ZfConfig | None = None,
                   init: ZfInit | None = None, state: ZfState | None = None) -> InnerResult:
    """Iterate the ZF subproblem until the objective gain drops below ``tol``."""
    cfg = zf_config or ZfConfig()
    state = state or initialize_zf(inst, init, cfg)
    run = run_iterations(state, lambda st, it: iterate_zf(st, q, inst, cfg, it),
                         lambda st, it: _row(inst, st, q, it), cfg.tol, cfg.t_max)
    state = run["state"]
    ex = zf_exact_quantities(inst, {"v0": state.v0_hat, "p": state.p, "beta": state.beta, "gains": state.gains})
    v0 = inst.to_full(state.v0_hat)
    v = state.v_unicast * np.sqrt(state.p)[:, None]
    sol = DigitalSolution(v0, v, state.beta)
    t = np.concatenate([[ex["sinr_common"].min()], ex["sinr_private"]])
    return InnerResult(sol, run["objective"], run["iterations"], run["converged"], run["trace"], run["rows"], t,
                       None, None, run["rejected"], "zf", run["stop_reason"], run["drop"])
