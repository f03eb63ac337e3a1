"""Acceptance criteria, one test per criterion.

Every test records a one-line PASS/FAIL verdict that is printed in the
terminal summary. Tolerances are the published ones; nothing is relaxed to
make a criterion pass. The squeezer-law check gates the Table 1 check and
therefore runs first.
"""

import math
import time
from fractions import Fraction

import numpy as np
from conftest import VERDICTS
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcv.compiler import GateProgram, compile_program, compile_qpg, compile_squeezer, qpg_angles
from loopcv.gaussian import (
    QPG,
    Arbitrary,
    Displace,
    GaussianState,
    Phase,
    Squeeze,
    qpg_matrix,
    rotation,
    squeeze_matrix,
)
from loopcv.machine import LoopConfig, model_fidelity, run_schedule
from loopcv.pipeline import TABLE1_GATES, TomoSettings, characterize
from loopcv.symbolic import derive_squeezer_law, ideal_limit_check, nullifier_solve, verify_cubic_identity
from loopcv.symbolic.cubic import random_rational_cases
from loopcv.tomography import ModeFunctionParams, _pair_offsets, mode_sample, synthetic_traces

# printed Table 1: gate -> (R %, theta1, theta2, gain dB)
TABLE1 = {
    "r = 0.44": (41, 0.0, 0.0, 1.6),
    "r = 0.69": (25, 0.0, 0.0, 4.8),
    "kappa = 0.46": (41, -32.7, 57.3, 1.6),
    "kappa = 0.75": (25, -26.6, 63.4, 4.8),
}

# printed model predictions and measured values (value, error bar)
PREDICTED = {
    "r = 0.44": (0.89, 0.03, (0.86, 0.02)),
    "r = 0.69": (0.80, 0.03, (0.75, 0.02)),
    "kappa = 0.46": (0.89, 0.03, (0.87, 0.03)),
    "kappa = 0.75": (0.80, 0.03, (0.77, 0.01)),
    "n = 1": (0.89, 0.05, (0.86, 0.02)),
    "n = 2": (0.73, 0.05, (0.67, 0.03)),
    "n = 3": (0.54, 0.05, (0.48, 0.03)),
}


def record(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def _params(label):
    v = float(label.split("=")[1])
    return compile_squeezer(v) if label.startswith("r") else compile_qpg(v)


def test_criterion_8_squeezer_law_derivation():
    t0 = time.perf_counter()
    law = derive_squeezer_law()
    problems = [] if law.record.passed else ["symbolic derivation failed: " + law.record.residual_text()]
    for label, (R_pct, _, _, g_db) in TABLE1.items():
        v = float(label.split("=")[1])
        r = v if label.startswith("r") else math.asinh(v)
        got = law.evaluate(r)
        sp = _params(label)
        # the compiler must implement the derived law
        if abs(got["R"] - sp.R_bs) > 1e-12 or abs(got["gain_amp"] - sp.gain_amp) > 1e-12:
            problems.append(f"{label}: compiler disagrees with the derived law")
        if abs(100 * got["R"] - R_pct) > 1.0:
            problems.append(f"{label}: R = {100 * got['R']:.2f}% vs {R_pct}% (tol 1 pp)")
        if abs(got["gain_db"] - g_db) > 0.1:
            problems.append(f"{label}: g = {got['gain_db']:.3f} dB vs {g_db} dB (tol 0.1 dB)")
    ok = not problems
    detail = "R = exp(-2r), gain = sqrt(T/R) derived symbolically"
    detail += "; Table 1 (R, g) reproduced" if ok else "; " + "; ".join(problems)
    record(8, ok, f"{detail} ({time.perf_counter() - t0:.2f} s)")
    assert ok, problems


def test_criterion_1_table1():
    t0 = time.perf_counter()
    problems = []
    for label, (R_pct, t1, t2, g_db) in TABLE1.items():
        sp = _params(label)
        if abs(100 * sp.R_bs - R_pct) > 1.0:
            problems.append(f"{label}: R {100 * sp.R_bs:.2f}% vs {R_pct}%")
        if abs(sp.theta1_deg - t1) > 0.1 or abs(sp.theta2_deg - t2) > 0.1:
            problems.append(f"{label}: angles ({sp.theta1_deg:.2f}, {sp.theta2_deg:.2f}) vs ({t1}, {t2})")
        if abs(sp.gain_db - g_db) > 0.1:
            problems.append(f"{label}: g {sp.gain_db:.3f} dB vs {g_db} dB")
    dt = time.perf_counter() - t0
    if dt >= 1.0:
        problems.append(f"runtime {dt:.2f} s >= 1 s")
    ok = not problems
    record(1, ok, ("all four rows within tolerance" if ok else "; ".join(problems)) + f" ({dt:.3f} s)")
    assert ok, problems


def test_criterion_2_qpg_decomposition_identity():
    rng = np.random.default_rng(2)
    kappas = [0.46, 0.75] + list(rng.uniform(-3, 3, 100))
    worst = 0.0
    for k in kappas:
        r, t1, t2 = qpg_angles(k)
        err = np.abs(rotation(t2) @ squeeze_matrix(r) @ rotation(t1) - qpg_matrix(k)).max()
        worst = max(worst, err)
    ok = worst < 1e-12
    record(2, ok, f"max |R(t2) S(r) R(t1) - U2(kappa)| = {worst:.1e} over {len(kappas)} values (tol 1e-12)")
    assert ok


def test_criterion_3_realistic_fidelities():
    t0 = time.perf_counter()
    programs = {
        "r = 0.44": GateProgram([Squeeze(0.44)]),
        "r = 0.69": GateProgram([Squeeze(0.69)]),
        "kappa = 0.46": GateProgram([QPG(0.46)]),
        "kappa = 0.75": GateProgram([QPG(0.75)]),
        "n = 1": GateProgram([Squeeze(0.44)], repeat=1),
        "n = 2": GateProgram([Squeeze(0.44)], repeat=2),
        "n = 3": GateProgram([Squeeze(0.44)], repeat=3),
    }
    cfgs = {"on": LoopConfig(ff_path_lossy=True), "off": LoopConfig(ff_path_lossy=False)}
    model_miss, bar_miss, table = [], [], []
    for label, prog in programs.items():
        pred, tol, (exp_v, exp_e) = PREDICTED[label]
        f = {k: model_fidelity(prog, c) for k, c in cfgs.items()}
        table.append(f"{label}: on {f['on']:.3f} off {f['off']:.3f}")
        if not any(abs(v - pred) <= tol for v in f.values()):
            model_miss.append(f"{label} ({pred}+-{tol})")
        # the default (ff path lossy) column against the measured value
        if abs(f["on"] - exp_v) > exp_e + 0.04:
            bar_miss.append(f"{label}: {f['on']:.3f} vs {exp_v}({exp_e}) + 0.04")
    dt = time.perf_counter() - t0
    ok = not model_miss and not bar_miss and dt < 10
    detail = "; ".join(table)
    if model_miss:
        detail += " | outside model tolerance: " + ", ".join(model_miss)
    else:
        detail += " | all within model tolerance"
    if bar_miss:
        detail += " | outside measured bar + 0.04: " + ", ".join(bar_miss)
    record(3, ok, f"{detail} ({dt:.2f} s)")
    assert not model_miss, model_miss
    assert not bar_miss, bar_miss
    assert dt < 10


@st.composite
def program_gates(draw):
    kind = draw(st.sampled_from(["squeeze", "qpg", "phase", "displace", "arbitrary"]))
    if kind == "squeeze":
        return Squeeze(draw(st.floats(-1, 1)))
    if kind == "qpg":
        return QPG(draw(st.floats(-1.5, 1.5)))
    if kind == "phase":
        return Phase(draw(st.floats(-180, 180)))
    if kind == "displace":
        return Displace(draw(st.floats(-2, 2)), draw(st.floats(-2, 2)))
    t1, t2 = draw(st.floats(-180, 180)), draw(st.floats(-180, 180))
    return Arbitrary(rotation(t2) @ squeeze_matrix(draw(st.floats(-1, 1))) @ rotation(t1))


def test_criterion_4_ideal_exactness():
    cfg = LoopConfig.ideal_model()
    worst = [0.0]

    @settings(max_examples=200, derandomize=True, deadline=None, database=None)
    @given(st.lists(program_gates(), min_size=0, max_size=5))
    def check(gates):
        prog = GateProgram(gates)
        s = compile_program(prog, cfg)
        outs = [run_schedule(s, inp, cfg).output for inp in (
            GaussianState.vacuum(), GaussianState.coherent(1.0, 0.0), GaussianState.coherent(0.0, 1.0))]
        M = np.column_stack([outs[1].mean - outs[0].mean, outs[2].mean - outs[0].mean])
        T = prog.target_matrix()
        err = max(
            np.abs(M - T).max(),
            np.abs(outs[0].mean - prog.target_displacement()).max(),
            np.abs(outs[0].cov - T @ T.T).max(),
        )
        worst[0] = max(worst[0], err)
        assert err < 1e-10

    t0 = time.perf_counter()
    failure = None
    try:
        check()
    except AssertionError as exc:
        failure = exc
    dt = time.perf_counter() - t0
    ok = failure is None and dt < 10
    record(4, ok, f"200 random programs (length <= 5), max deviation {worst[0]:.1e} (tol 1e-10) ({dt:.2f} s)")
    assert failure is None, failure
    assert dt < 10


def test_criterion_5_tomography_self_consistency():
    t0 = time.perf_counter()
    cfg = LoopConfig()
    problems, worst_f, worst_z = [], 1.0, 0.0
    for k, gate in enumerate(TABLE1_GATES):
        ch = characterize(GateProgram([gate]), cfg, seed=2024, tomo=TomoSettings(), tag=k)
        for name, rep in ch["inputs"].items():
            f = rep["model"]["fidelity_vs_model"]
            worst_f = min(worst_f, f)
            if f < 0.99:
                problems.append(f"{gate} {name}: F = {f:.4f}")
        M = np.array(ch["matrix"]["tomography"])
        E = np.array(ch["matrix"]["tomography_err"])
        A = np.array(ch["matrix"]["model"])
        z = np.abs(M - A) / E
        worst_z = max(worst_z, float(z.max()))
        if np.any(z > 3):
            problems.append(f"{gate}: matrix element off by {z.max():.2f} sigma")
    dt = time.perf_counter() - t0
    if dt >= 60:
        problems.append(f"runtime {dt:.1f} s >= 60 s")
    ok = not problems
    detail = f"min F(fit, model) = {worst_f:.4f} (>= 0.99), max matrix deviation {worst_z:.2f} sigma (<= 3)"
    record(5, ok, (detail if ok else "; ".join(problems)) + f" ({dt:.1f} s)")
    assert ok, problems


def test_criterion_6_offset_invariance():
    p = ModeFunctionParams()
    _, _, w = _pair_offsets(p)
    leak_scale = 2 * np.abs(w).sum() * 1e-9 / p.sample_rate
    rng = np.random.default_rng(6)
    worst = 0.0
    for values in (np.zeros(500), rng.normal(0, 2, 500)):
        tr = synthetic_traces(values, rng)
        q = mode_sample(tr)
        rms = float(np.sqrt(np.mean(q**2)))
        for c in np.concatenate([[0.0, 1.0, -1.0], rng.uniform(-1, 1, 20) * 10.0 ** rng.integers(-6, 10, 20)]):
            d = np.abs(mode_sample(tr + c) - q).max()
            # relative to the magnitude of what enters the extraction
            worst = max(worst, d / (rms + abs(c) * leak_scale))
    ok = worst < 1e-12
    record(6, ok, f"max offset-induced change {worst:.1e} relative (tol 1e-12), offsets up to 1e9")
    assert ok


def test_criterion_7_cubic_proof():
    t0 = time.perf_counter()
    results = {"symbolic R": verify_cubic_identity(None, "R").passed}
    cases = random_rational_cases(np.random.default_rng(7), 10)
    results["10 random (gamma, R)"] = all(verify_cubic_identity(g, r).passed for g, r in cases)
    results["ideal limit"] = ideal_limit_check().passed
    sol = nullifier_solve(Fraction(1, 10), Fraction(1, 10))
    results["nullifier R = 1/2"] = sol.exact and sol.R == Fraction(1, 2) and sol.check.passed
    dt = time.perf_counter() - t0
    ok = all(results.values()) and dt < 5
    record(7, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in results.items()) + f" ({dt:.2f} s)")
    assert all(results.values()), results
    assert dt < 5
