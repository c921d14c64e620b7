"""Fast self-checks: closed-form examples and small brute-force oracles.

``run_selftest`` returns a report; the CLI turns any failure into a nonzero
exit status.  ``solver_tolerance`` is handed to every conic solve, so a
corrupted value (say ``1e-1``) shows up as failed checks rather than
silently looser answers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .analog import (AnalogStructure, build_codebook, design_analog_precoder, digital_precoder, effective_channel,
                     select_fully_connected)
from .channel import ArrayGeometry, array_response, pathloss_db, sample_channel
from .conic import ProgramBuilder, SolveStatus
from .dinkelbach import BisectionConfig, bisection_max_ee, evaluate_T, feasibility_check
from .instance import ProblemInstance
from .metrics import (DigitalSolution, SwiptConfig, circuit_power, check_constraints, harvested_energy,
                      sinr_common, sinr_private, spectral_efficiency, total_power)
from .sca import ScaConfig, solve_inner
from .zf import ZfConfig, solve_inner_zf, zf_unicast_precoders

__all__ = ["CheckResult", "SelftestReport", "run_selftest", "desk_instance", "grid_oracle_k1"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


@dataclass
class SelftestReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list:
        return [f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.seconds:.2f} s){'  ' + r.detail if r.detail else ''}"
                for r in self.results]


def desk_instance(seed: int = 0, e_min: float = 2e-5, p_max: float = 1.0) -> ProblemInstance:
    """Single-user toy: 8 antennas, 2 RF chains, fully-connected, 4 paths.

    The 60 dB link gain puts the harvesting bound (about 4e-5 to 7e-5 W at
    1 W) just above ``e_min``, so the split ratio is pinned by harvesting.
    """
    ch = sample_channel(1, 4, ArrayGeometry(8), 30.0, seed, gain_offset_db=60.0)
    F = design_analog_precoder(ch, AnalogStructure.FULLY_CONNECTED, 2)
    return ProblemInstance.from_channel(ch, F, SwiptConfig(e_min=e_min, p_max=p_max))


def grid_oracle_k1(inst: ProblemInstance, q: float = 0.0, points: int = 200) -> float:
    """Brute-force optimum of ``R - q xi P_tx`` for one user.

    With a single user every received power is maximized by the same
    matched beam, so only the multicast power, the unicast power and the
    split ratio remain; each is gridded with ``points`` values.
    """
    if inst.k_users != 1:
        raise ValueError("grid oracle covers the single-user case only")
    cfg = inst.config
    H = inst.eff_channels
    gain = float(np.real(H[0] @ np.linalg.solve(inst.precoder.gram(), H[0].conj())))     # h G^-1 h^H
    p = np.linspace(0.0, cfg.p_max, points)
    b = np.linspace(0.0, 1.0, points)
    P0, P1, B = np.meshgrid(p, p, b, indexing="ij", sparse=True)
    tot = P0 + P1
    ok = (tot <= cfg.p_max * (1 + 1e-12)) & (cfg.eh_efficiency * (1 - B) * (gain * tot + cfg.noise_ant) >= cfg.e_min)
    g0 = B * gain * P0 / (B * (gain * P1 + cfg.noise_ant) + cfg.noise_id)
    g1 = B * gain * P1 / (B * cfg.noise_ant + cfg.noise_id)
    obj = np.log2(1 + g0) + np.log2(1 + g1) - q * cfg.pa_factor * tot
    return float(np.max(np.where(ok, obj, -np.inf)))


def _close(a, b, tol):
    return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) <= tol))


# ---------------------------------------------------------------------------
# individual checks; each returns (passed, detail)

def _check_array_response(tol):
    ok = _close(array_response(0.0, 4), 0.5, 1e-15)
    ok &= _close(array_response(np.pi / 2, 2), np.array([1, -1]) / np.sqrt(2), 1e-12)
    rng = np.random.default_rng(0)
    ok &= all(abs(np.linalg.norm(array_response(t, 256)) - 1) < 1e-12 for t in rng.uniform(0, 2 * np.pi, 5))
    return ok, ""


def _check_pathloss(tol):
    ok = abs(pathloss_db(1.0) - 69.4) < 1e-12 and abs(pathloss_db(10.0) - 93.4) < 1e-12
    ok &= abs(pathloss_db(30.0) - 104.85) < 0.01
    return ok, f"PL(30 m) = {pathloss_db(30.0):.3f} dB"


def _check_channel(tol):
    geo = ArrayGeometry(256)
    ch = sample_channel(1, 1, geo, pathloss=False)
    g = ch.paths[0][0].gain
    ok = abs(np.linalg.norm(ch.per_user[0]) - np.sqrt(256) * abs(g)) < 1e-9
    a = sample_channel(2, 8, geo, 30.0, 3)
    b = sample_channel(2, 8, geo, 30.0, 3)
    ok &= np.array_equal(a.per_user, b.per_user)
    ok &= len(build_codebook(a, 256)) == 16
    cb = build_codebook(a, 64)
    ok &= cb.entries.shape[1] == 64 and _close(np.abs(cb.entries), 1 / 8, 1e-15)
    # Monte Carlo: E||h||^2 = N_TX without path loss
    draws = [np.linalg.norm(sample_channel(1, 8, ArrayGeometry(32), 30.0, 11, trial=t, pathloss=False).per_user) ** 2
             for t in range(2000)]
    mean = float(np.mean(draws))
    ok &= abs(mean / 32 - 1) < 0.05
    return ok, f"E||h||^2 / N = {mean / 32:.3f}"


def _check_analog(tol):
    ch = sample_channel(1, 1, ArrayGeometry(64), pathloss=False, rng_seed=5)
    F = design_analog_precoder(ch, "fully_connected", 1)
    gain = abs(ch.per_user[0] @ F.matrix[:, 0]) ** 2
    ok = abs(gain - 64 * abs(ch.paths[0][0].gain) ** 2) < 1e-9
    # greedy rule against a step-by-step argmax
    ch2 = sample_channel(2, 8, ArrayGeometry(64), 30.0, 7)
    cb = build_codebook(ch2, 64)
    F2 = select_fully_connected(ch2, cb, 4)
    left = list(range(len(cb)))
    for n, (k, idx) in enumerate(F2.choices):
        scores = [abs(cb.entries[j] @ ch2.per_user[k]) ** 2 for j in left]
        ok &= idx == left[int(np.argmax(scores))] and k == n % 2
        left.remove(idx)
    sub = design_analog_precoder(ch2, "subarray", 4)
    ok &= int(np.count_nonzero(sub.matrix)) == 64
    ok &= np.array_equal(effective_channel(ch2, digital_precoder(64)), ch2.per_user)
    return ok, ""


def _check_metrics(tol):
    cfg = SwiptConfig(noise_ant=0.5, noise_id=0.5)
    one = DigitalSolution([np.sqrt(2)], [[1.0]], [1.0])
    ok = abs(sinr_common(0, one, np.array([[1.0]]), cfg) - 1.0) < 1e-12
    cfg2 = SwiptConfig(noise_ant=0.1, noise_id=0.0)
    ok &= abs(sinr_private(0, DigitalSolution([0.0], [[1.0]], [1.0]), np.array([[1.0]]), cfg2) - 10.0) < 1e-12
    ok &= sinr_common(0, DigitalSolution([1.0], [[1.0]], [0.0]), np.array([[1.0]]), cfg) == 0.0
    cfg3 = SwiptConfig(noise_ant=0.0, eh_efficiency=0.5)
    ok &= abs(harvested_energy(0, DigitalSolution([0.0], [[1.0]], [0.0]), np.array([[1.0]]), cfg3) - 0.5) < 1e-12
    d = SwiptConfig()
    ok &= abs(circuit_power("fully_connected", 256, 4, d) - 42.36) < 1e-9
    ok &= abs(circuit_power("subarray", 256, 4, d) - 11.64) < 1e-9
    ok &= abs(circuit_power("digital", 256, 4, d) - 77.0) < 1e-9
    zero = DigitalSolution.zeros(2, 4)
    F = digital_precoder(4)
    ok &= total_power(zero, F, None, d) == circuit_power("digital", 4, 4, d)
    ok &= spectral_efficiency(zero, np.ones((2, 4)), d) == 0.0
    return ok, ""


def _check_conic(tol):
    b = ProgramBuilder()
    x = b.var("x")[0]
    b.nonneg(b.x(x) - 1.0)
    b.maximize(-b.x(x))
    s1 = conic.solve(b.build(), tol)
    b = ProgramBuilder()
    t = b.var("t")[0]
    b.soc(b.x(t), [b.const(3.0), b.const(4.0)])
    b.maximize(-b.x(t))
    s2 = conic.solve(b.build(), tol)
    b = ProgramBuilder()
    r, tt = b.var("r")[0], b.var("t")[0]
    conic.epigraph_log2(b, b.x(tt), b.x(r))
    b.nonneg(3.0 - b.x(tt))
    b.maximize(b.x(r))
    s3 = conic.solve(b.build(), tol)
    errs = [abs(s1.x[0] - 1), abs(s2.x[0] - 5), abs(s3.x[0] - 2)]
    ok = all(s.status is SolveStatus.OPTIMAL for s in (s1, s2, s3)) and max(errs) < 1e-6
    # complex embedding against direct evaluation
    rng = np.random.default_rng(1)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    M = conic.embed_complex_quadratic(h, [0, 1, 2], [3, 4, 5], 6)
    ok &= abs(np.sum((M @ np.concatenate([v.real, v.imag])) ** 2) - abs(h @ v) ** 2) < 1e-12
    return ok, f"max error {max(errs):.1e}"


def _check_zf(tol):
    F = digital_precoder(2)
    V = zf_unicast_precoders(np.eye(2), F)
    ok = _close(np.abs(V), np.eye(2), 1e-12)
    ch = sample_channel(2, 8, ArrayGeometry(64), 30.0, 4)
    Fa = design_analog_precoder(ch, "fully_connected", 4)
    H = effective_channel(ch, Fa)
    V = zf_unicast_precoders(H, Fa)
    G = np.abs(H @ V.T)
    ok &= G[0, 1] < 1e-9 * G[0, 0] + 1e-30 and G[1, 0] < 1e-9 * G[1, 1] + 1e-30
    return ok, ""


def _check_dinkelbach(tol):
    class Mock:
        def __init__(self, q):
            self.t_value = 1.0 - q
            self.solution = None

    inner = lambda q, inst: Mock(q)
    ok = abs(evaluate_T(0.3, inner) - 0.7) < 1e-15
    res = bisection_max_ee(inner, None, BisectionConfig(epsilon=1e-6))
    ok &= abs(res.q_star - 1.0) <= 1e-6 and len(res.trace) <= 25
    return ok, f"q* = {res.q_star:.7f} after {len(res.trace)} steps"


def _check_feasibility(tol):
    inst = desk_instance(0)
    ok = feasibility_check(inst.with_config(inst.config.with_(e_min=0.0))).feasible
    bound = inst.config.eh_efficiency * (inst.config.p_max * inst.best_gain()[0] * inst.scale + inst.config.noise_ant)
    ok &= not feasibility_check(inst.with_config(inst.config.with_(e_min=1.01 * bound))).feasible
    return ok, ""


def _check_desk_oracle(tol):
    worst = 0.0
    ok = True
    for seed in (0, 1):
        inst = desk_instance(seed)
        for q in (0.0, 10.0):
            ref = grid_oracle_k1(inst, q)
            for res in (solve_inner(q, inst, ScaConfig(solver_tol=tol)), solve_inner_zf(q, inst, ZfConfig(solver_tol=tol))):
                rel = abs(res.t_value - ref) / max(abs(ref), 1e-12)
                worst = max(worst, rel)
                ok &= rel < 0.02 and check_constraints(res.solution, inst.eff_channels, inst.precoder, inst.config).ok
    return ok, f"worst relative gap {worst:.2e}"


def _check_sca_trace(tol):
    ch = sample_channel(2, 8, ArrayGeometry(64), 30.0, 0, gain_offset_db=60.0)
    F = design_analog_precoder(ch, "fully_connected", 4)
    inst = ProblemInstance.from_channel(ch, F, SwiptConfig())
    res = solve_inner(0.0, inst, ScaConfig(t_max=15, solver_tol=tol))
    steps = np.diff(res.trace)
    rep = check_constraints(res.solution, inst.eff_channels, inst.precoder, inst.config)
    ok = bool(np.all(steps >= -1e-8)) and rep.ok and res.stop_reason != "solver_failure"
    return ok, f"{res.iterations} iterations, stop: {res.stop_reason}"


CHECKS = [
    ("array response examples", _check_array_response),
    ("path loss examples", _check_pathloss),
    ("channel determinism and statistics", _check_channel),
    ("greedy analog selection oracle", _check_analog),
    ("SINR, harvesting and power examples", _check_metrics),
    ("conic analytic programs", _check_conic),
    ("zero-forcing directions", _check_zf),
    ("bisection on a linear mock", _check_dinkelbach),
    ("feasibility bounds", _check_feasibility),
    ("single-user grid oracle", _check_desk_oracle),
    ("SCA monotone trace", _check_sca_trace),
]


def run_selftest(solver_tolerance: float = 1e-8, only=None) -> SelftestReport:
    report = SelftestReport()
    for name, fn in CHECKS:
        if only is not None and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(solver_tolerance)
        except Exception as exc:  # a crash counts as a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        report.results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return report
