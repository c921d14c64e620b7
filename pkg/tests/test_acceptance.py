"""Acceptance criteria at the default system parameters.

Each test records one PASS/FAIL line in ``conftest.ACCEPTANCE_LINES``; the
lines are printed together at the end of the run.  Expensive runs are
shared between criteria through module-level caches.

Seeds: "20 seeds" means the first 20 channel seeds (trial 0) for which the
harvesting constraints are feasible under every structure; skipped seeds are
named in the detail lines.  About 20 minutes on one core.
"""

import time
from functools import lru_cache

import numpy as np
import pytest

import conftest
from mmwave_swipt_ee import conic, experiments as ex
from mmwave_swipt_ee.conic import ProgramBuilder, SolveStatus, epigraph_log2, kkt_report
from mmwave_swipt_ee.dinkelbach import feasibility_check
from mmwave_swipt_ee.metrics import check_constraints, energy_efficiency, spectral_efficiency
from mmwave_swipt_ee.sca import ScaConfig, solve_inner
from mmwave_swipt_ee.selftest import desk_instance, grid_oracle_k1
from mmwave_swipt_ee.zf import ZfConfig, solve_inner_zf
from programs import random_program

pytestmark = pytest.mark.slow

STRUCTURES = ("fully_connected", "subarray", "digital")
BASE = ex.ExperimentConfig()
N_SEEDS = 20


def record(label, title, passed, detail):
    conftest.ACCEPTANCE_LINES.append((label, title, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'} [{label}] {title}: {detail}")
    assert passed, detail


@lru_cache(maxsize=None)
def feasible_seeds(p_max_dbm: float, count: int = N_SEEDS):
    seeds, skipped = [], []
    seed = 0
    while len(seeds) < count:
        cfg = BASE.with_(seed=seed, p_max_dbm=p_max_dbm)
        if all(feasibility_check(ex.build_instance(cfg, 0, s)).feasible for s in STRUCTURES):
            seeds.append(seed)
        else:
            skipped.append(seed)
        seed += 1
    return tuple(seeds), tuple(skipped)


def instance(seed, structure, p_max_dbm):
    return ex.build_instance(BASE.with_(seed=seed, p_max_dbm=p_max_dbm), 0, structure)


@lru_cache(maxsize=None)
def q0_runs():
    """Both inner solvers at ``q = 0``, 30 dBm, 50 iterations without early stop (traces)."""
    seeds, _ = feasible_seeds(30.0)
    out = {}
    for seed in seeds:
        for structure in STRUCTURES:
            inst = instance(seed, structure, 30.0)
            out[seed, structure, "sca"] = (inst, solve_inner(0.0, inst, ScaConfig(tol=0.0, t_max=50)))
            out[seed, structure, "zf"] = (inst, solve_inner_zf(0.0, inst, ZfConfig(tol=0.0, t_max=50)))
    return out


@lru_cache(maxsize=None)
def converged_runs():
    """Both inner solvers at ``q = 0``, 30 dBm, run until the objective stops moving."""
    seeds, _ = feasible_seeds(30.0)
    out = {}
    for seed in seeds:
        for structure in STRUCTURES:
            inst = instance(seed, structure, 30.0)
            out[seed, structure, "sca"] = (inst, solve_inner(0.0, inst, ScaConfig(tol=1e-10, t_max=1000)))
            out[seed, structure, "zf"] = (inst, solve_inner_zf(0.0, inst, ZfConfig(tol=1e-10, t_max=1000)))
    return out


@lru_cache(maxsize=None)
def ee_runs():
    """Max_EE by bisection at 40 dBm with the default inner settings."""
    seeds, _ = feasible_seeds(40.0)
    out = {}
    for seed in seeds:
        for structure in STRUCTURES:
            inst = instance(seed, structure, 40.0)
            for algorithm in ("sca", "zf"):
                out[seed, structure, algorithm] = ex.solve_point(inst, BASE.with_(p_max_dbm=40.0), algorithm, "max_ee")
    return out


def padded(trace, n):
    trace = list(trace)
    return trace + [trace[-1]] * (n + 1 - len(trace))


def test_01_conic_solver_suite():
    start = time.perf_counter()
    analytic = []
    # minimize x s.t. x >= 1
    b = ProgramBuilder()
    x = b.x(b.var("x")[0])
    b.nonneg(x - 1.0)
    b.maximize(-x)
    sol = conic.solve(b.build(), 1e-9)
    analytic.append(abs(sol.x[0] - 1.0))
    # minimize t s.t. ||(3, 4)|| <= t
    b = ProgramBuilder()
    t = b.x(b.var("t")[0])
    b.soc(t, [b.const(3.0), b.const(4.0)])
    b.maximize(-t)
    sol = conic.solve(b.build(), 1e-9)
    analytic.append(abs(sol.x[0] - 5.0))
    # maximize r s.t. r <= log2(1 + t), t <= 3
    b = ProgramBuilder()
    r, tt = b.var("r")[0], b.var("t")[0]
    epigraph_log2(b, b.x(tt), b.x(r))
    b.nonneg(3.0 - b.x(tt))
    b.maximize(b.x(r))
    sol = conic.solve(b.build(), 1e-9)
    analytic.append(abs(sol.x[0] - 2.0))
    worst = {"gap": 0.0, "primal_residual": 0.0, "dual_cone_residual": 0.0, "stationarity": 0.0}
    statuses = set()
    for seed in range(20):
        prog = random_program(seed)
        sol = conic.solve(prog, 1e-9)
        statuses.add(sol.status)
        rep = kkt_report(prog, sol.x, sol.y)
        for k in worst:
            worst[k] = max(worst[k], rep[k])
    elapsed = time.perf_counter() - start
    ok = (max(analytic) < 1e-6 and statuses == {SolveStatus.OPTIMAL} and worst["gap"] < 1e-7
          and max(worst.values()) < 1e-7 and elapsed < 30)
    record("1", "conic solver suite", ok,
           f"analytic err {max(analytic):.1e}, 20 random KKT: gap {worst['gap']:.1e}, "
           f"max residual {max(worst.values()):.1e}, {elapsed:.1f} s")


def test_02_sca_monotone():
    seeds, skipped = feasible_seeds(30.0)
    worst_step, worst_rejected = 0.0, 0.0
    for seed in seeds:
        inst, res = q0_runs()[seed, "fully_connected", "sca"]
        worst_step = max(worst_step, float(np.max(-np.diff(res.trace), initial=0.0)))
        # a proposed step the safeguard discarded counts against monotonicity too
        worst_rejected = max(worst_rejected, res.rejected_drop)
    worst = max(worst_step, worst_rejected)
    record("2", "SCA monotone trace", worst <= 1e-8,
           f"largest per-step decrease {worst:.2e} (kept {worst_step:.1e}, discarded {worst_rejected:.1e}) "
           f"over {len(seeds)} seeds, skipped {list(skipped)}")


def test_03_zf_fast_convergence():
    seeds, _ = feasible_seeds(30.0)
    worst = 0.0
    for seed in seeds:
        for structure in STRUCTURES:
            _, res = q0_runs()[seed, structure, "zf"]
            tr = padded(res.trace, 50)
            worst = max(worst, abs(tr[50] - tr[5]) / abs(tr[50]))
    record("3", "ZF within 1% after 5 iterations", worst < 0.01,
           f"worst |obj(5) - obj(50)| / obj(50) = {worst:.2e} over {len(seeds)} seeds x 3 structures")


def _median_se(structure, algorithm):
    seeds, _ = feasible_seeds(30.0)
    vals = []
    for seed in seeds:
        inst, res = converged_runs()[seed, structure, algorithm]
        vals.append(spectral_efficiency(res.solution, inst.eff_channels, inst.config))
    return float(np.median(vals))


def test_04_sca_beats_zf():
    # both solvers reach the same stationary point on most channels, so the
    # medians can tie; ties are judged at the inner solver's precision
    pairs = {s: (_median_se(s, "sca"), _median_se(s, "zf")) for s in STRUCTURES}
    ok = all(a >= b * (1 - 1e-6) for a, b in pairs.values())
    record("4", "median SE(SCA) >= SE(ZF)", ok,
           ", ".join(f"{s} {a:.5f} vs {b:.5f} ({(a - b) / b:+.1e})" for s, (a, b) in pairs.items())
           + " bps/Hz, converged runs at 30 dBm")


def test_05a_se_structure_order():
    se = {s: _median_se(s, "sca") for s in STRUCTURES}
    ok = se["digital"] >= se["fully_connected"] >= se["subarray"]
    record("5a", "SE digital >= fully-connected >= subarray", ok,
           ", ".join(f"{s} {v:.3f}" for s, v in se.items()) + " bps/Hz (SCA, 30 dBm)")


def test_05b_ee_structure_order():
    seeds, skipped = feasible_seeds(40.0)
    med = {}
    for s in STRUCTURES:
        vals = [o.ee if o.status == "ok" else 0.0 for seed in seeds for o in [ee_runs()[seed, s, "sca"]]]
        med[s] = float(np.median(vals))
    ok = med["subarray"] >= med["fully_connected"] >= med["digital"]
    record("5b", "EE subarray >= fully-connected >= digital", ok,
           ", ".join(f"{s} {v:.4f}" for s, v in med.items()) + f" bps/Hz/W (SCA, 40 dBm), skipped {list(skipped)}")


def test_06_dinkelbach_root():
    worst_t, worst_iter, bad = 0.0, 0, []
    for key, out in ee_runs().items():
        if out.status != "ok":
            bad.append((key, out.status))
            continue
        trace = out.result.trace
        worst_t = max(worst_t, abs(trace[-1][1]))
        ee = np.array([row[2] for row in trace])
        close = np.abs(ee - ee[-1]) <= 0.01 * abs(ee[-1])
        # first outer iteration after which the EE trace stays within 1% of its final value
        off = np.flatnonzero(~close)
        settle = int(off[-1]) + 2 if off.size else 1
        worst_iter = max(worst_iter, settle)
    ok = not bad and worst_t < 1e-3 and worst_iter <= 12
    record("6", "Dinkelbach root", ok,
           f"max |T(q_final)| {worst_t:.1e}, EE settles by outer iteration {worst_iter}, "
           f"{len(ee_runs())} runs (SCA and ZF), failures {bad}")


def test_07_ee_equals_q_star():
    worst, n = 0.0, 0
    for out in ee_runs().values():
        if out.status != "ok":
            continue
        inst = out.instance
        ee = energy_efficiency(out.result.solution, inst.eff_channels, inst.precoder, inst.config)
        worst = max(worst, abs(ee - out.q_star) / out.q_star)
        n += 1
    record("7", "EE equals q*", n > 0 and worst < 1e-3, f"worst relative gap {worst:.2e} over {n} converged runs")


def _zf_leakage(sol, inst):
    S = np.abs(inst.eff_channels @ sol.v.T) ** 2      # S[j, k] = |h_j v_k|^2
    sig = np.diag(S).copy()
    off = S - np.diag(sig)
    return float(np.max(off / np.maximum(sig[None, :], 1e-300)))


def test_08_constraints():
    sols = [(inst, res.solution, alg) for (_, _, alg), (inst, res) in q0_runs().items()]
    sols += [(o.instance, o.result.solution, key[2]) for key, o in ee_runs().items() if o.result is not None]
    eh_margin, power_ratio, leak, failed = np.inf, 0.0, 0.0, 0
    for inst, sol, alg in sols:
        rep = check_constraints(sol, inst.eff_channels, inst.precoder, inst.config, rtol=1e-6)
        failed += not rep.ok
        eh_margin = min(eh_margin, float(np.min(rep.harvested / inst.config.e_min)))
        power_ratio = max(power_ratio, rep.p_transmit / inst.config.p_max)
        if alg == "zf":
            leak = max(leak, _zf_leakage(sol, inst))
    ok = failed == 0 and leak < 1e-12
    record("8", "constraint satisfaction", ok,
           f"{len(sols)} solutions, {failed} violating; min E/E_min {eh_margin:.6f}, "
           f"max P/P_max {power_ratio:.6f}, max ZF leakage {leak:.1e}")


def test_09_ee_saturation():
    cfg = BASE.with_(algorithm="zf", trials=10, sweep=("p_max_dbm", ex.P_MAX_GRID_DBM))
    rows = ex.run_sweep(cfg, ("subarray",), (("zf", "max_ee"), ("zf", "max_se")))
    med = ex.median_by(rows, lambda r: (r.objective, r.value))
    grid = ex.P_MAX_GRID_DBM
    ee = np.array([med["max_ee", p] for p in grid])
    se_ee = np.array([med["max_se", p] for p in grid])
    # bisection stops at |T| < 1e-3, which resolves EE to about 1e-3 relative
    nondecreasing = bool(np.all(np.diff(ee) >= -1e-3 * ee[1:]))
    flat = ee[-1] - ee[-2] <= 0.01 * ee[-2]
    falls = se_ee[-1] < se_ee.max()
    record("9", "EE saturation in P_max", nondecreasing and flat and falls,
           "Max_EE " + " ".join(f"{v:.3f}" for v in ee) + f"; Max_SE EE at 50 dBm {se_ee[-1]:.3f} "
           f"vs peak {se_ee.max():.3f} at {grid[int(np.argmax(se_ee))]:g} dBm (ZF, subarray, 10 trials)")


LOW_E_MIN_UW = (10.0, 25.0, 50.0, 100.0)


def test_10_e_min_knee():
    cfg = BASE.with_(algorithm="zf", trials=10, p_max_dbm=45.0, sweep=("e_min_uw", LOW_E_MIN_UW + (1000.0,)))
    rows = ex.run_sweep(cfg, ("subarray",), (("zf", "max_ee"),))
    med = ex.median_by(rows, lambda r: r.value)
    low = np.array([med[v] for v in LOW_E_MIN_UW])
    spread = (low.max() - low.min()) / low.max()
    drop = (med[100.0] - med[1000.0]) / med[100.0]
    record("10", "E_min knee", spread < 0.02 and drop > 0.05,
           f"spread over {list(LOW_E_MIN_UW)} uW {spread:.2%}, drop at 1000 uW {drop:.2%} "
           f"(ZF, subarray, 45 dBm, 10 trials)")


def test_11_grid_oracle():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(3):
        inst = desk_instance(seed)
        for q in (0.0, 2.0, 10.0):
            ref = grid_oracle_k1(inst, q, points=200)
            for res in (solve_inner(q, inst), solve_inner_zf(q, inst)):
                worst = max(worst, abs(res.t_value - ref) / abs(ref))
    elapsed = time.perf_counter() - start
    record("11", "grid-search oracle", worst < 0.02 and elapsed < 120,
           f"worst relative gap {worst:.2e} (3 seeds x 3 q x 2 solvers), {elapsed:.1f} s")


def test_12_zf_initialization():
    seeds, _ = feasible_seeds(40.0)
    worst, used = 0.0, 0
    for seed in seeds[:10]:
        base = ee_runs()[seed, "fully_connected", "zf"]
        if base.status != "ok":
            continue
        inst = base.instance
        vals = [solve_inner_zf(base.q_star, inst, ZfConfig(tol=0.0, t_max=50), init=init).t_value
                for init in ex.ZF_INITS]
        worst = max(worst, (max(vals) - min(vals)) / abs(max(vals)))
        used += 1
    record("12", "ZF initialization robustness", used == 10 and worst < 0.01,
           f"worst spread {worst:.2e} across {len(ex.ZF_INITS)} starts on {used} seeds (fully-connected, q*)")
