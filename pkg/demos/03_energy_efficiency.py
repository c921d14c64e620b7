"""Energy efficiency of one channel draw, step by step.

Runs the bisection on T(q) with both inner solvers and prints the outer
trace, then compares with the rate-maximizing (q = 0) operating point.

    python3 demos/03_energy_efficiency.py
"""

from mmwave_swipt_ee import experiments as ex

cfg = ex.ExperimentConfig(p_max_dbm=40.0, structure="subarray")
inst = ex.build_instance(cfg, trial=0)

for algorithm in ("zf", "sca"):
    out = ex.solve_point(inst, cfg, algorithm, "max_ee")
    print(f"{algorithm.upper()}: q* = {out.q_star:.4f}, EE = {out.ee:.4f} bps/Hz/W, SE = {out.se:.2f} bps/Hz")
    for m, (q, t, ee) in enumerate(out.result.trace, 1):
        print(f"   {m:2d}  q {q:7.4f}  T(q) {t:+9.4f}  EE {ee:.4f}")

se_point = ex.solve_point(inst, cfg, "zf", "max_se")
print(f"rate-maximizing point: EE = {se_point.ee:.4f} bps/Hz/W, SE = {se_point.se:.2f} bps/Hz")
