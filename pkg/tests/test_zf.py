import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwave_swipt_ee.analog import AnalogPrecoder, AnalogStructure, digital_precoder
from mmwave_swipt_ee.conic import ProgramBuilder, kkt_report, solve
from mmwave_swipt_ee.metrics import check_constraints, spectral_efficiency
from mmwave_swipt_ee.zf import (ConditioningError, ZfConfig, ZfInit, build_zf_subproblem, initialize_zf,
                                solve_inner_zf, zf_exact_quantities, zf_unicast_precoders)
from mmwave_swipt_ee.experiments import ZF_INITS
from conftest import make_instance


def test_identity_channel_gives_scaled_unit_vectors():
    c = 3.0
    F = AnalogPrecoder(c * np.eye(2, dtype=complex), AnalogStructure.FULLY_CONNECTED)
    V = zf_unicast_precoders(np.eye(2), F)
    assert np.allclose(V, np.eye(2) / c)


def test_single_user_is_matched_filter(rng):
    h = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
    F = AnalogPrecoder(rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3)), AnalogStructure.FULLY_CONNECTED)
    v = zf_unicast_precoders(h, F)[0]
    ref = np.linalg.pinv(h)[:, 0]
    ref = ref / np.linalg.norm(F.matrix @ ref)
    assert abs(abs(np.vdot(ref, v)) - np.linalg.norm(ref) * np.linalg.norm(v)) < 1e-12
    assert np.linalg.norm(F.matrix @ v) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_no_leakage_between_unicast_streams(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    V = zf_unicast_precoders(H, digital_precoder(4))
    G = np.abs(H @ V.T)
    assert G[0, 1] < 1e-9 and G[1, 0] < 1e-9
    assert np.all(np.angle(np.diag(H @ V.T)) == pytest.approx(0.0, abs=1e-12))


def test_rank_deficient_channel_raises():
    H = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(ConditioningError):
        zf_unicast_precoders(H, digital_precoder(2))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 20.0))
def test_schur_block_gives_reciprocal(beta):
    # min g s.t. [[g, 1], [1, beta]] psd  ->  g = 1 / beta
    b = ProgramBuilder()
    g = b.x(b.var("g")[0])
    b.rsoc(g, b.const(beta), [b.const(1.0)], "schur", np.sqrt(1 / beta))
    b.maximize(-g)
    assert solve(b.build()).x[0] == pytest.approx(1.0 / beta, rel=1e-6)


@pytest.mark.parametrize("structure", ["fully_connected", "subarray", "digital"])
def test_expansion_point_is_feasible_for_surrogate(structure):
    inst = make_instance(1, structure)
    st = initialize_zf(inst)
    prog, V = build_zf_subproblem(st, 0.0, inst)
    x = np.zeros(prog.num_vars)
    ex = zf_exact_quantities(inst, {"v0": st.v0_hat, "p": st.p, "beta": st.beta, "gains": st.gains})
    x[V["vr"]], x[V["vi"]] = st.v0_hat.real, st.v0_hat.imag
    x[V["beta"]], x[V["p"]], x[V["g"]] = st.beta, st.p, 1 / st.beta
    x[V["o"]] = inst.e_min / (inst.config.eh_efficiency * (1 - st.beta))
    x[V["t"]] = ex["sinr_private"]
    x[V["t0"]] = ex["sinr_common"].min()
    x[V["s"]] = np.sum(np.abs(st.v0_hat @ inst.power_factor.T) ** 2)
    x[V["r"]] = np.log2(1 + np.r_[ex["sinr_common"].min(), ex["sinr_private"]])
    rep = kkt_report(prog, x, np.zeros(sum(c.b.size for c in prog.lowered().constraints)))
    assert rep["primal_residual"] < 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_monotone_feasible_and_leak_free(seed):
    inst = make_instance(seed, "subarray")
    res = solve_inner_zf(0.0, inst, ZfConfig(tol=0.0, t_max=30))
    assert np.all(np.diff(res.trace) >= -1e-8)
    # a discarded step near the fixed point may dip by solver round-off
    assert res.rejected_drop <= 1e-8 * abs(res.t_value)
    sol = res.solution
    assert check_constraints(sol, inst.eff_channels, inst.precoder, inst.config).ok
    G = np.abs(inst.eff_channels @ sol.v.T) ** 2
    assert G[0, 1] < 1e-12 * G[0, 0] and G[1, 0] < 1e-12 * G[1, 1]
    assert res.t_value == pytest.approx(spectral_efficiency(sol, inst.eff_channels, inst.config), rel=1e-9)


def test_zf_never_beats_general_precoding_by_much():
    inst = make_instance(3)
    from mmwave_swipt_ee.sca import solve_inner
    assert solve_inner(0.0, inst).t_value >= solve_inner_zf(0.0, inst).t_value - 1e-3


def test_every_initialization_is_feasible():
    inst = make_instance(2)
    for init in ZF_INITS:
        st = initialize_zf(inst, init)
        ex = zf_exact_quantities(inst, {"v0": st.v0_hat, "p": st.p, "beta": st.beta, "gains": st.gains})
        assert np.all(ex["eh"] >= inst.e_min) and ex["power"] <= inst.config.p_max * (1 + 1e-9)


def test_distinct_initializations():
    inst = make_instance(2)
    starts = [initialize_zf(inst, init) for init in ZF_INITS]
    keys = {(tuple(np.round(s.v0_hat, 6)), tuple(np.round(s.p, 6)), tuple(np.round(s.beta, 6))) for s in starts}
    assert len(keys) == len(ZF_INITS)


def test_bad_direction_name():
    with pytest.raises(ValueError):
        initialize_zf(make_instance(0), ZfInit(v0_direction="sideways"))
