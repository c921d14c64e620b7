import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwave_swipt_ee import conic
from mmwave_swipt_ee.conic import ProgramBuilder, SolveStatus, embed_complex_quadratic, epigraph_log2, kkt_report
from programs import random_program


def solve_scalar(build):
    b = ProgramBuilder()
    build(b)
    return conic.solve(b.build())


def test_linear_program():
    def build(b):
        x = b.x(b.var("x")[0])
        b.nonneg(x - 1.0)
        b.maximize(-x)
    sol = solve_scalar(build)
    assert sol.ok and sol.x[0] == pytest.approx(1.0, abs=1e-7)


def test_second_order_cone():
    def build(b):
        t = b.x(b.var("t")[0])
        b.soc(t, [b.const(3.0), b.const(4.0)])
        b.maximize(-t)
    sol = solve_scalar(build)
    assert sol.ok and sol.x[0] == pytest.approx(5.0, abs=1e-6)


def test_exponential_cone_rate():
    def build(b):
        r, t = b.var("r")[0], b.var("t")[0]
        epigraph_log2(b, b.x(t), b.x(r))
        b.nonneg(3.0 - b.x(t))
        b.maximize(b.x(r))
    sol = solve_scalar(build)
    assert sol.ok and sol.x[0] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("t, bound", [(0.0, 0.0), (1.0, 1.0), (7.0, 3.0)])
def test_log2_epigraph_bound(t, bound):
    def build(b):
        r = b.var("r")[0]
        epigraph_log2(b, b.const(t), b.x(r))
        b.maximize(b.x(r))
    sol = solve_scalar(build)
    assert sol.x[0] == pytest.approx(bound, abs=1e-6)


def test_rotated_cone_and_balance():
    # maximize z s.t. z^2 <= u v, u <= 4, v <= 9  ->  z = 6
    for balance in (1.0, 1e-3, 50.0):
        def build(b):
            u, v, z = (b.x(i) for i in b.var("uvz", 3))
            b.rsoc(u, v, [z], "r", balance)
            b.nonneg(4.0 - u)
            b.nonneg(9.0 - v)
            b.maximize(z)
        sol = solve_scalar(build)
        assert sol.x[2] == pytest.approx(6.0, abs=1e-6)


def test_complex_embedding_examples(rng):
    M = embed_complex_quadratic([1, 0], [0, 1], [2, 3], 4)
    x = np.array([1.0, 5.0, 0.0, -2.0])      # v = (1, 5 - 2j)
    assert np.sum((M @ x) ** 2) == pytest.approx(1.0)
    assert not np.any(embed_complex_quadratic([0, 0, 0], [0, 1, 2], [3, 4, 5], 6))
    for _ in range(20):
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        M = embed_complex_quadratic(h, range(4), range(4, 8), 8)
        y = M @ np.r_[v.real, v.imag]
        assert abs(complex(y[0], y[1]) - h @ v) < 1e-12
        assert abs(np.sum(y ** 2) - abs(h @ v) ** 2) < 1e-12 * (1 + abs(h @ v) ** 2)


def test_quadratic_bound_through_embedding():
    # min s with |h v|^2 <= s and Re(h v) >= 2: s* = 4
    h = np.array([1 + 1j, 2 - 1j])
    b = ProgramBuilder()
    vr, vi, s = b.var("vr", 2), b.var("vi", 2), b.var("s")[0]
    M = embed_complex_quadratic(h, vr, vi, b.n)
    b.quad_le([conic.Affine(M[0]), conic.Affine(M[1])], b.x(s))
    b.nonneg(conic.Affine(M[0], -2.0))
    b.maximize(-b.x(s))
    sol = conic.solve(b.build())
    assert sol.x[s] == pytest.approx(4.0, abs=1e-6)


def test_infeasible_and_unbounded_status():
    b = ProgramBuilder()
    x = b.x(b.var("x")[0])
    b.nonneg(x - 2.0)
    b.nonneg(1.0 - x)
    b.maximize(x)
    assert conic.solve(b.build()).status is SolveStatus.INFEASIBLE
    b = ProgramBuilder()
    x = b.x(b.var("x")[0])
    b.nonneg(x)
    b.maximize(x)
    assert conic.solve(b.build()).status is SolveStatus.UNBOUNDED


@pytest.mark.parametrize("seed", range(20))
def test_random_program_kkt(seed):
    prog = random_program(seed)
    sol = conic.solve(prog, 1e-9)
    assert sol.status is SolveStatus.OPTIMAL
    rep = kkt_report(prog, sol.x, sol.y)
    assert rep["gap"] < 1e-7
    assert rep["primal_residual"] < 1e-7 and rep["dual_cone_residual"] < 1e-7
    assert rep["stationarity"] < 1e-7


def test_variable_scaling_does_not_change_answer():
    prog = random_program(3)
    a = conic.solve(prog, 1e-9)
    b = conic.solve(prog, 1e-9, var_scale=np.geomspace(1e-2, 1e2, prog.num_vars))
    assert np.allclose(a.x, b.x, atol=1e-6)
    with pytest.raises(ValueError):
        conic.solve(prog, var_scale=-np.ones(prog.num_vars))


def test_solve_is_deterministic():
    prog = random_program(5)
    assert conic.solve(prog).x.tobytes() == conic.solve(prog).x.tobytes()


def test_program_text_round_trip():
    prog = random_program(7)
    back = conic.loads_program(conic.dumps_program(prog))
    assert back.num_vars == prog.num_vars
    assert np.array_equal(back.objective, prog.objective)
    assert conic.solve(back).x.tobytes() == conic.solve(prog).x.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 5))
def test_weak_duality(shift, width):
    # maximize x s.t. x in [shift, shift + width]
    b = ProgramBuilder()
    x = b.x(b.var("x")[0])
    b.nonneg(x - shift)
    b.nonneg(shift + width - x)
    b.maximize(x)
    sol = conic.solve(b.build())
    assert sol.primal_objective <= sol.dual_objective + 1e-7
    assert sol.x[0] == pytest.approx(shift + width, abs=1e-6)
