"""Both inner solvers against brute force on a toy single-user link.

With one user the optimum only depends on the multicast power, the unicast
power and the split ratio, so a 200^3 grid finds it directly.

    python3 demos/02_single_user_oracle.py
"""

from mmwave_swipt_ee.sca import solve_inner
from mmwave_swipt_ee.selftest import desk_instance, grid_oracle_k1
from mmwave_swipt_ee.zf import solve_inner_zf

inst = desk_instance(seed=0)
for q in (0.0, 2.0, 10.0):
    grid = grid_oracle_k1(inst, q)
    sca = solve_inner(q, inst).t_value
    zf = solve_inner_zf(q, inst).t_value
    print(f"q = {q:4.1f}   grid {grid:8.4f}   SCA {sca:8.4f}   ZF {zf:8.4f}")
