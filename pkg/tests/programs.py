"""Random feasible, bounded conic programs for solver checks."""

import numpy as np

from mmwave_swipt_ee.conic import Affine, ProgramBuilder


def random_program(seed: int, n: int = 6, n_soc: int = 3, n_exp: int = 2):
    """Maximize a random linear objective over SOC and exp-cone constraints.

    Every constraint holds with margin at a random point ``x0`` and a norm
    ball keeps the feasible set bounded.
    """
    rng = np.random.default_rng(seed)
    b = ProgramBuilder()
    x = b.var("x", n)
    x0 = rng.standard_normal(n)
    for i in range(n_soc):
        m = int(rng.integers(1, 4))
        A = rng.standard_normal((m, n))
        off = rng.standard_normal(m)
        d = rng.standard_normal(n)
        e = np.linalg.norm(A @ x0 + off) - d @ x0 + rng.uniform(0.5, 2.0)
        b.soc(Affine(np.r_[d], e), [Affine(A[r], off[r]) for r in range(m)], f"soc{i}")
    for i in range(n_exp):
        u = 0.3 * rng.standard_normal(n)
        w = rng.standard_normal(n)
        a = rng.standard_normal()
        c = np.exp(u @ x0 + a) - w @ x0 + rng.uniform(0.5, 2.0)
        b.exp(Affine(u, a), b.const(1.0), Affine(w, c), f"exp{i}")
    radius = np.linalg.norm(x0) + 5.0
    b.soc(b.const(radius), [b.x(j) - x0[j] for j in x], "ball")
    b.maximize(Affine(rng.standard_normal(n)))
    return b.build()
