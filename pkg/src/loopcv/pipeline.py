"""End-to-end sessions: compile, run, sample, fit and summarise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .compiler import GateProgram, compile_program, compile_gate
from .gaussian import (
    QPG,
    GaussianState,
    Squeeze,
    ellipse_contour,
    ellipse_summary,
    fidelity,
)
from .io import substream
from .machine import LoopConfig, coherent_inputs, ideal_output, matrix_from_means, run_schedule
from .tomography import (
    DEFAULT_ANGLES,
    FitSettings,
    QuadratureSampleSet,
    TomographyResult,
    matrix_estimate,
    mle_fit,
    report,
    sample_state,
)

INPUTS = ("vacuum", "x_coherent", "p_coherent")

FIGURES = {
    "fig3": ("squeeze", [GateProgram([Squeeze(0.44)]), GateProgram([Squeeze(0.69)])], [0.44, 0.69]),
    "fig4": ("qpg", [GateProgram([QPG(0.46)]), GateProgram([QPG(0.75)])], [0.46, 0.75]),
    "fig5": ("steps", [GateProgram([Squeeze(0.44)], repeat=n) for n in (1, 2, 3)], [1, 2, 3]),
}

TABLE1_GATES = [Squeeze(0.44), Squeeze(0.69), QPG(0.46), QPG(0.75)]


@dataclass(frozen=True)
class TomoSettings:
    angles: Sequence[float] = DEFAULT_ANGLES
    shots: int = 1000
    subsets: int = 10
    method: str = "direct"  # or "trajectory"


def angle_grid(n: int) -> List[float]:
    """``n`` homodyne angles in 15 deg steps from 0."""
    if n < 3:
        raise ValueError("at least 3 homodyne angles are needed")
    return [15.0 * k for k in range(n)]


def sample_session(
    program: GateProgram,
    cfg: LoopConfig,
    input_state: GaussianState,
    seed: int,
    tomo: TomoSettings,
    tag: int = 0,
) -> QuadratureSampleSet:
    """Homodyne samples of the program output.

    ``direct`` draws from the analytic output state. ``trajectory`` runs the
    loop shot by shot in sampled mode and measures each exported state.
    Every angle has its own random streams, so more shots only append.
    """
    sched = compile_program(program, cfg)
    if tomo.method == "direct":
        out = run_schedule(sched, input_state, cfg).output
        rows = []
        for i, a in enumerate(tomo.angles):
            rows.append(sample_state(out, [a], tomo.shots, substream(seed, "sampling", tag, i)).samples[0])
        return QuadratureSampleSet(np.asarray(tomo.angles, float), np.array(rows))
    if tomo.method != "trajectory":
        raise ValueError(f"unknown sampling method {tomo.method!r}")
    rows = []
    for i, a in enumerate(tomo.angles):
        rec = run_schedule(
            sched, input_state, cfg, mode="sampled",
            rng=substream(seed, "trajectories", tag, i), shots=tomo.shots,
        )
        t = np.deg2rad(a)
        u = np.array([np.cos(t), np.sin(t)])
        z = substream(seed, "homodyne", tag, i).standard_normal(tomo.shots)
        rows.append(rec.shot_means @ u + np.sqrt(u @ rec.shot_cov @ u) * z)
    return QuadratureSampleSet(np.asarray(tomo.angles, float), np.array(rows))


def characterize(
    program: GateProgram,
    cfg: LoopConfig,
    seed: int,
    tomo: TomoSettings = None,
    tag: int = 0,
) -> dict:
    """Analytic and tomographed results for vacuum, X- and P-coherent inputs."""
    tomo = tomo or TomoSettings()
    amp = cfg.input_amplitude
    inputs = coherent_inputs(cfg)
    sched = compile_program(program, cfg)
    out: Dict[str, dict] = {"inputs": {}}
    fits: Dict[str, TomographyResult] = {}
    analytic: Dict[str, GaussianState] = {}
    for j, name in enumerate(INPUTS):
        st = inputs[name]
        analytic[name] = run_schedule(sched, st, cfg).output
        target = ideal_output(program, st)
        samples = sample_session(program, cfg, st, seed, tomo, tag=3 * tag + j)
        fits[name] = mle_fit(samples, FitSettings(n_subsets=tomo.subsets))
        rep = report(fits[name], target)
        rep["model"] = {
            "output": analytic[name].to_dict(),
            "fidelity": fidelity(analytic[name], target),
            "ellipse": ellipse_summary(analytic[name]).to_dict(),
            "fidelity_vs_model": fidelity(fits[name].state, analytic[name]),
        }
        rep["target"] = target.to_dict()
        out["inputs"][name] = rep
    M, err = matrix_estimate(fits["x_coherent"], fits["p_coherent"], amp)
    out["matrix"] = {
        "tomography": M.tolist(),
        "tomography_err": err.tolist(),
        "model": matrix_from_means(
            analytic["x_coherent"].mean - analytic["vacuum"].mean,
            analytic["p_coherent"].mean - analytic["vacuum"].mean,
            amp,
        ).tolist(),
        "target": program.target_matrix().tolist(),
    }
    out["_fits"] = fits
    out["_analytic"] = analytic
    return out


def table1_rows() -> List[dict]:
    rows = []
    for g in TABLE1_GATES:
        sp = compile_gate(g)
        row = {"gate": f"r = {g.r:g}" if isinstance(g, Squeeze) else f"kappa = {g.kappa:g}"}
        row.update(sp.table_row())
        rows.append(row)
    return rows


def contour_rows(state: GaussianState, n_points: int = 181) -> np.ndarray:
    return ellipse_contour(state, n_points)
