import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from loopcv.compiler import GateProgram
from loopcv.gaussian import (
    QPG,
    GaussianState,
    Phase,
    Squeeze,
    apply_symplectic,
    ellipse_summary,
    fidelity,
    make_gate,
    quadrature_marginal,
    wrap_tilt,
)
from loopcv.machine import LoopConfig, run_program
from loopcv.tomography import (
    DEFAULT_ANGLES,
    _pair_offsets,
    FitSettings,
    ModeFunctionParams,
    QuadratureSampleSet,
    calibrate_vacuum,
    ellipse_with_errors,
    matrix_estimate,
    mle_fit,
    mle_fit_moments,
    mode_function,
    mode_norm,
    mode_sample,
    nll_and_grad,
    paren_format,
    report,
    sample_state,
    synthetic_traces,
)

P = ModeFunctionParams()
REAL = LoopConfig()


def exact_moments(state, angles=DEFAULT_ANGLES):
    mv = np.array([quadrature_marginal(state, 0, a) for a in angles])
    return mv[:, 0], mv[:, 1]


# mode function


def test_mode_function_shape():
    t = np.array([-30e-9, -23e-9, -1e-9, 0.0, 1e-9, 22.9e-9, 23e-9])
    f = mode_function(t)
    assert f[0] == 0.0 and f[1] == 0.0 and f[-1] == 0.0
    assert f[3] == 0.0
    assert f[2] == pytest.approx(-f[4])
    assert f[5] > 0


def test_mode_norm_matches_integral():
    t1 = P.t1_ns * 1e-9
    integral, _ = quad(lambda t: float(mode_function(t)) ** 2, -t1, t1, points=[0.0], epsabs=0, epsrel=1e-12)
    assert mode_norm(P) == pytest.approx(integral, rel=1e-3)


def test_mode_sample_of_mode_itself():
    t = (P.times_ns() - P.t0_ns) * 1e-9
    v = mode_sample(mode_function(t))
    assert v > 0
    assert v == pytest.approx(mode_norm(P), rel=1e-12)


def test_constant_trace_gives_zero():
    for c in (1.0, -3.7, 1e6):
        assert abs(mode_sample(np.full(P.n_samples, c))) <= 1e-12 * abs(c)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 2**32 - 1))
def test_offset_invariance(c, seed):
    tr = synthetic_traces(np.array([1.3]), np.random.default_rng(seed))[0]
    _, _, w = _pair_offsets(P)
    scale = 2 * np.abs(w).sum() * 1e-9
    assert abs(mode_sample(tr + c) - mode_sample(tr)) <= 1e-12 * abs(c) * scale


def test_noiseless_trace_carries_its_value():
    tr = synthetic_traces(np.array([2.5, -1.0]), np.random.default_rng(0), noise_std=0.0)
    assert np.allclose(mode_sample(tr), [2.5, -1.0], atol=1e-12)


def test_mode_params_validation():
    with pytest.raises(ValueError):
        ModeFunctionParams(t1_ns=30.0)
    with pytest.raises(ValueError):
        mode_sample(np.zeros(10))


# calibration


def test_calibration_examples():
    rng = np.random.default_rng(3)
    z = rng.standard_normal(10_000)
    z = (z - z.mean()) / z.std()
    assert calibrate_vacuum(2 * z) == pytest.approx(0.5, abs=1e-12)
    assert calibrate_vacuum(z) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        calibrate_vacuum(z[:50])


@pytest.mark.parametrize("n,tol", [(10_000, 0.05), (1000, 0.1)])
def test_calibrated_vacuum_variance(n, tol):
    rng = np.random.default_rng(17)
    ref = mode_sample(synthetic_traces(np.zeros(n), rng, noise_std=0.3))
    scale = calibrate_vacuum(ref)
    fresh = scale * mode_sample(synthetic_traces(np.zeros(n), rng, noise_std=0.3))
    assert abs(fresh.var() - 1.0) < tol


# sampling


def test_sample_state_examples():
    rng = np.random.default_rng(4)
    v = sample_state(GaussianState.vacuum(), [0, 45, 90], 20_000, rng)
    assert np.all(np.abs(v.samples.mean(axis=1)) < 4 / math.sqrt(20_000))
    assert np.all(np.abs(v.samples.var(axis=1) - 1) < 4 * math.sqrt(2 / 20_000))
    s = sample_state(GaussianState.squeezed(0.44), [90.0], 20_000, rng)
    assert s.samples.var() == pytest.approx(math.exp(-0.88), abs=4 * 0.4148 * math.sqrt(2 / 20_000))
    c = sample_state(GaussianState.coherent(4, 0), [60.0], 20_000, rng)
    assert c.samples.mean() == pytest.approx(2.0, abs=4 / math.sqrt(20_000))


def test_samples_csv_roundtrip(tmp_path):
    s = sample_state(GaussianState.squeezed(0.3), DEFAULT_ANGLES, 20, np.random.default_rng(1))
    path = tmp_path / "s.csv"
    s.to_csv(path)
    back = QuadratureSampleSet.from_csv(path)
    assert np.array_equal(back.angles_deg, s.angles_deg)
    assert np.array_equal(back.samples, s.samples)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        QuadratureSampleSet([30.0, 0.0], np.zeros((2, 5)))
    with pytest.raises(ValueError):
        QuadratureSampleSet([0.0], np.zeros((2, 5)))


# maximum likelihood


@pytest.mark.parametrize(
    "state",
    [
        GaussianState.vacuum(),
        GaussianState.squeezed(0.69),
        GaussianState([1.2, -0.4], [[3.0, 1.5], [1.5, 1.4]]),
    ],
)
def test_infinite_data_recovery(state):
    mu, var = exact_moments(state)
    res = mle_fit_moments(DEFAULT_ANGLES, mu, var, n_per_angle=1000)
    assert np.allclose(res.mean, state.mean, atol=1e-8)
    assert np.allclose(res.cov, state.cov, atol=1e-8)


def test_vacuum_fit():
    res = mle_fit(sample_state(GaussianState.vacuum(), DEFAULT_ANGLES, 1000, np.random.default_rng(21)))
    assert np.all(np.abs(res.cov - np.eye(2)) < 0.1)
    assert np.all(np.abs(res.mean) < 0.1)
    assert res.grad_norm < 1e-8


def test_realistic_refit_fidelity():
    out = run_program(GateProgram([Squeeze(0.69)]), REAL).output
    res = mle_fit(sample_state(out, DEFAULT_ANGLES, 1000, np.random.default_rng(22)))
    assert fidelity(res.state, out) >= 0.99


def test_gradient_matches_finite_differences():
    s = sample_state(GaussianState([0.5, -0.2], [[2.0, 0.6], [0.6, 0.9]]), DEFAULT_ANGLES, 200, np.random.default_rng(5))
    for physical, theta in ((False, [0.4, -0.1, 0.3, 0.2, -0.1]), (True, [0.4, -0.1, 0.2, 0.3, 0.5])):
        theta = np.array(theta)
        _, g = nll_and_grad(theta, s, physical)
        for i in range(5):
            h = 1e-6
            e = np.zeros(5)
            e[i] = h
            fd = (nll_and_grad(theta + e, s, physical)[0] - nll_and_grad(theta - e, s, physical)[0]) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_error_shrinks_with_data():
    state = GaussianState([0.7, 0.3], [[2.5, 0.8], [0.8, 0.9]])
    truth = np.array([*state.mean, state.cov[0, 0], state.cov[0, 1], state.cov[1, 1]])

    def err(n, seed):
        r = mle_fit(sample_state(state, DEFAULT_ANGLES, n, np.random.default_rng(seed)), bootstrap=False)
        return np.linalg.norm(np.array([*r.mean, r.cov[0, 0], r.cov[0, 1], r.cov[1, 1]]) - truth)

    small = np.mean([err(1000, s) for s in range(5)])
    big = np.mean([err(100_000, s) for s in range(5)])
    assert big < small / 2


@given(st.floats(-90, 90))
def test_rotation_equivariance(phi):
    s = sample_state(GaussianState([0.5, 1.0], [[2.0, 0.4], [0.4, 0.8]]), DEFAULT_ANGLES, 100, np.random.default_rng(9))
    a = mle_fit(s, bootstrap=False)
    b = mle_fit(QuadratureSampleSet(s.angles_deg + phi, s.samples), bootstrap=False)
    rot = apply_symplectic(a.state, make_gate(Phase(phi)))
    assert np.allclose(b.mean, rot.mean, atol=1e-6)
    assert np.allclose(b.cov, rot.cov, atol=1e-6)


def test_bootstrap_is_deterministic():
    s = sample_state(GaussianState.squeezed(0.44), DEFAULT_ANGLES, 1000, np.random.default_rng(2))
    assert mle_fit(s).to_dict() == mle_fit(s).to_dict()
    assert len(mle_fit(s).subset_fits) == 10


def test_too_few_angles():
    with pytest.raises(ValueError):
        mle_fit(sample_state(GaussianState.vacuum(), [0.0, 180.0], 100, np.random.default_rng(0)))


def test_unphysical_optimum_is_constrained():
    # pure-state data: the unconstrained optimum can dip below the uncertainty bound
    s = sample_state(GaussianState.squeezed(0.44), DEFAULT_ANGLES, 1000, np.random.default_rng(30))
    res = mle_fit(s)
    assert res.state.is_physical()


# reporting


@pytest.mark.parametrize(
    "v,e,text",
    [(0.8612, 0.0213, "0.86(2)"), (1.0, 0.0, "1.000(0)"), (0.48, 0.03, "0.48(3)"), (0.9, 0.096, "0.9(1)"), (12.3, 1.2, "12(1)")],
)
def test_paren_format(v, e, text):
    assert paren_format(v, e) == text


def test_exact_ideal_result_reports_unit_fidelity():
    target = GaussianState.squeezed(0.44)
    mu, var = exact_moments(target)
    rep = report(mle_fit_moments(DEFAULT_ANGLES, mu, var), target)
    assert rep["fidelity_text"] == "1.000(0)"
    assert rep["format_version"] == 1


def test_realistic_squeezer_session_matches_model():
    out = run_program(GateProgram([Squeeze(0.44)]), REAL).output
    ideal = GaussianState.squeezed(0.44)
    rep = report(mle_fit(sample_state(out, DEFAULT_ANGLES, 1000, np.random.default_rng(40))), ideal)
    assert abs(rep["fidelity"] - fidelity(out, ideal)) <= rep["fidelity_err"]


def test_qpg_tilt_within_three_sigma():
    out = run_program(GateProgram([QPG(0.75)]), REAL).output
    e = ellipse_with_errors(mle_fit(sample_state(out, DEFAULT_ANGLES, 1000, np.random.default_rng(41))))
    ref = ellipse_summary(out).tilt_deg
    assert abs(wrap_tilt(e["tilt_deg"] - ref)) <= 3 * e["err"]["tilt_deg"]


def test_matrix_estimate_pairs_subsets():
    cfg = LoopConfig.ideal_model()
    prog = GateProgram([QPG(0.46)])
    rng = np.random.default_rng(50)
    xs = mle_fit(sample_state(run_program(prog, cfg, GaussianState.coherent(4, 0)).output, DEFAULT_ANGLES, 1000, rng))
    ps = mle_fit(sample_state(run_program(prog, cfg, GaussianState.coherent(0, 4)).output, DEFAULT_ANGLES, 1000, rng))
    M, err = matrix_estimate(xs, ps, 4.0)
    assert np.all(np.abs(M - [[1, 0], [0.92, 1]]) <= 3 * err)
    assert np.all(err > 0)
    with pytest.raises(ValueError):
        matrix_estimate(xs, ps, 0.0)


def test_fit_settings_default():
    s = FitSettings()
    assert (s.gtol, s.n_subsets) == (1e-8, 10)
