import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopcv.compiler import GateProgram, compile_program, compile_squeezer
from loopcv.gaussian import (
    QPG,
    BeamSplitter,
    GaussianState,
    LossChannel,
    Phase,
    Squeeze,
    SymplecticOp,
    apply_loss,
    apply_symplectic,
    fidelity,
    make_gate,
)
from loopcv.machine import (
    ConfigError,
    LoopConfig,
    estimate_gate_matrix,
    ideal_output,
    make_ancilla,
    model_fidelity,
    run_program,
    run_schedule,
    step_gate,
    vbs_event,
)

REAL = LoopConfig()
IDEAL = LoopConfig.ideal_model()


def feedforward_oracle(state, sp, cfg):
    """Unconditional VBS event built from core operations only.

    Averaging over a homodyne outcome that is fed forward as a displacement
    is the same channel as a coherent controlled displacement, here the
    two-mode map x_ret += g x_tap, p_tap -= g p_ret.
    """
    anc = make_ancilla(cfg)
    s = state.tensor(anc)
    s = apply_symplectic(s, make_gate(BeamSplitter(sp.R_bs)))
    s = apply_loss(s, LossChannel(cfg.eta_feedforward, mode=1))
    g = sp.gain_amp
    m = np.eye(4)
    m[0, 2] = g
    m[3, 1] = -g
    s = apply_symplectic(s, SymplecticOp(m, np.zeros(4), (0, 1)))
    return s.drop(1)


def unrolled_oracle(gate, cfg, inp):
    sp = compile_squeezer(gate.r) if isinstance(gate, Squeeze) else None
    if sp is None:
        from loopcv.compiler import compile_qpg

        sp = compile_qpg(gate.kappa)
    s = apply_loss(inp, LossChannel(cfg.eta_roundtrip))
    s = apply_symplectic(s, make_gate(Phase(sp.theta1_deg)))
    s = feedforward_oracle(s, sp, cfg)
    s = apply_loss(s, LossChannel(cfg.eta_roundtrip))
    s = apply_symplectic(s, make_gate(Phase(sp.theta2_deg)))
    return apply_loss(s, LossChannel(cfg.eta_readout))


# ancilla


def test_ancilla_realistic():
    a = make_ancilla(REAL)
    assert a.cov[1, 1] == pytest.approx(0.93 * 10**-0.8 + 0.07, abs=1e-15)
    assert a.cov[1, 1] == pytest.approx(0.2174, abs=5e-5)


def test_ancilla_lossless():
    a = make_ancilla(REAL.replace(loss_opo_to_vbs=0.0))
    assert a.cov[1, 1] == pytest.approx(0.1585, abs=5e-5)
    assert a.cov[0, 0] == pytest.approx(6.3096, abs=5e-5)
    assert np.linalg.det(a.cov) == pytest.approx(1.0, abs=1e-12)


def test_ancilla_ideal_limit():
    assert np.array_equal(make_ancilla(IDEAL).cov, np.zeros((2, 2)))
    assert make_ancilla(IDEAL, capped=True).cov[1, 1] == 1e-12


# ideal limit


def test_ideal_step_is_exact_squeezer():
    out = step_gate(GaussianState.vacuum(), compile_squeezer(0.44), IDEAL)
    assert np.allclose(out.cov, np.diag([math.exp(0.88), math.exp(-0.88)]), atol=1e-14)


def test_ideal_qpg_step_on_coherent():
    from loopcv.compiler import compile_qpg

    out = step_gate(GaussianState.coherent(2.0, 0.0), compile_qpg(0.75), IDEAL)
    assert np.allclose(out.mean, [2.0, 3.0], atol=1e-13)


def test_ideal_runs_compose():
    out = run_program(GateProgram([Squeeze(0.44)], repeat=3), IDEAL).output
    assert out.allclose(GaussianState.squeezed(1.32), atol=1e-12)


def test_capped_ancilla_agrees_with_exact_limit():
    from loopcv.compiler import compile_qpg

    for sp in (compile_squeezer(0.44), compile_squeezer(-0.69), compile_qpg(0.75)):
        s = GaussianState.coherent(1.0, -0.5)
        exact = vbs_event(s, sp, IDEAL, make_ancilla(IDEAL))
        capped = vbs_event(s, sp, IDEAL, make_ancilla(IDEAL, capped=True))
        assert exact.allclose(capped, atol=1e-9)


def test_ideal_with_gain_scale_rejected():
    with pytest.raises(ConfigError):
        LoopConfig(ideal=True, gain_scale=0.9)


@pytest.mark.parametrize("bad", [{"loss_roundtrip": 1.0}, {"loss_readout": -0.1}, {"bin_ns": 0}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        LoopConfig(**bad)


# realistic model against an independent hand composition


@pytest.mark.parametrize("gate", [Squeeze(0.44), Squeeze(0.69), QPG(0.46), QPG(0.75)])
@pytest.mark.parametrize("lossy", [True, False])
def test_unrolled_composition_oracle(gate, lossy):
    cfg = REAL.replace(ff_path_lossy=lossy)
    inp = GaussianState.coherent(1.5, -0.7)
    got = run_program(GateProgram([gate]), cfg, inp).output
    assert got.allclose(unrolled_oracle(gate, cfg, inp), atol=1e-10)


def test_step_gate_matches_schedule():
    cfg = REAL
    inp = GaussianState.coherent(0.3, 0.2)
    sp = compile_squeezer(0.44)
    by_step = apply_loss(
        step_gate(apply_loss(inp, LossChannel(cfg.eta_roundtrip)), sp, cfg),
        LossChannel(cfg.eta_readout),
    )
    by_run = run_program(GateProgram([Squeeze(0.44)]), cfg, inp).output
    assert by_step.allclose(by_run, atol=1e-12)


def test_analytic_and_sampled_agree():
    prog = GateProgram([QPG(0.75)])
    inp = GaussianState.coherent(2.0, 1.0)
    s = compile_program(prog, REAL)
    ana = run_schedule(s, inp, REAL).output
    n = 100_000
    rec = run_schedule(s, inp, REAL, "sampled", np.random.default_rng(11), shots=n)
    # the mixture of conditioned shots has the unconditional moments
    m, c = rec.output.mean, rec.output.cov
    se_m = np.sqrt(np.diag(ana.cov) / n)
    assert np.all(np.abs(m - ana.mean) < 5 * se_m)
    se_c = np.sqrt((ana.cov**2 + np.outer(np.diag(ana.cov), np.diag(ana.cov))) / n)
    assert np.all(np.abs(c - ana.cov) < 5 * se_c)


def test_shot_prefix_is_stable():
    s = compile_program(GateProgram([Squeeze(0.44)], repeat=2), REAL)
    inp = GaussianState.vacuum()
    a = run_schedule(s, inp, REAL, "sampled", np.random.default_rng(5), shots=10)
    b = run_schedule(s, inp, REAL, "sampled", np.random.default_rng(5), shots=25)
    assert np.array_equal(a.outcomes, b.outcomes[:10])
    assert np.array_equal(a.shot_means, b.shot_means[:10])


def test_sampled_step_gate_returns_outcome():
    out, q = step_gate(GaussianState.vacuum(), compile_squeezer(0.44), REAL, "sampled", np.random.default_rng(0))
    assert np.isfinite(q) and out.is_physical()


@given(st.floats(0.0, 0.3), st.floats(0.01, 0.2))
def test_fidelity_degrades_with_loss(base, extra):
    prog = GateProgram([Squeeze(0.44)])
    f1 = model_fidelity(prog, REAL.replace(loss_roundtrip=base))
    f2 = model_fidelity(prog, REAL.replace(loss_roundtrip=base + extra))
    assert f2 < f1


@given(st.floats(2.0, 12.0), st.floats(0.5, 4.0))
def test_fidelity_improves_with_ancilla_squeezing(db, extra):
    prog = GateProgram([Squeeze(0.44)])
    f1 = model_fidelity(prog, REAL.replace(ancilla_squeezing_db=db))
    f2 = model_fidelity(prog, REAL.replace(ancilla_squeezing_db=db + extra))
    assert f2 > f1


def test_fidelity_degrades_with_steps():
    f = [model_fidelity(GateProgram([Squeeze(0.44)], repeat=n), REAL) for n in (1, 2, 3)]
    assert f[0] > f[1] > f[2]


@given(st.floats(-2, 2), st.floats(-3, 3))
def test_ideal_qpg_keeps_x_marginal(kappa, x0):
    inp = GaussianState.coherent(x0, 0.4)
    out = run_program(GateProgram([QPG(kappa)]), IDEAL, inp).output
    assert out.mean[0] == pytest.approx(x0, abs=1e-10)
    assert out.cov[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_realistic_output_is_physical():
    for prog in (GateProgram([QPG(0.75)]), GateProgram([Squeeze(0.44)], repeat=3)):
        assert run_program(prog, REAL).output.is_physical()


# gate matrix estimation


def test_estimate_ideal_squeezer():
    m = estimate_gate_matrix(Squeeze(0.44), IDEAL)
    assert np.allclose(m, [[math.exp(0.44), 0], [0, math.exp(-0.44)]], atol=1e-12)


def test_estimate_ideal_qpg():
    assert np.allclose(estimate_gate_matrix(QPG(0.46), IDEAL), [[1, 0], [0.92, 1]], atol=1e-12)


def test_estimate_realistic_squeezer_ideal_feedforward():
    cfg = REAL.replace(ff_path_lossy=False)
    shrink = math.sqrt(cfg.eta_roundtrip**2 * cfg.eta_readout)
    m = estimate_gate_matrix(Squeeze(0.44), cfg)
    assert np.allclose(m, shrink * np.diag([math.exp(0.44), math.exp(-0.44)]), atol=1e-12)


def test_estimate_realistic_squeezer_lossy_feedforward():
    cfg = REAL
    sp = compile_squeezer(0.44)
    shrink = math.sqrt(cfg.eta_roundtrip**2 * cfg.eta_readout)
    R, T = sp.R_bs, 1 - sp.R_bs
    gx = math.sqrt(R) + math.sqrt(cfg.eta_feedforward) * T / math.sqrt(R)
    m = estimate_gate_matrix(Squeeze(0.44), cfg)
    assert np.allclose(m, shrink * np.diag([gx, math.sqrt(R)]), atol=1e-12)


def test_ideal_output_helper():
    prog = GateProgram([QPG(0.5), Phase(30)])
    out = ideal_output(prog, GaussianState.coherent(1, 0))
    ref = apply_symplectic(apply_symplectic(GaussianState.coherent(1, 0), make_gate(QPG(0.5))), make_gate(Phase(30)))
    assert out.allclose(ref, atol=1e-14)
    assert fidelity(run_program(prog, IDEAL, GaussianState.coherent(1, 0)).output, ref) == pytest.approx(1.0, abs=1e-9)
