"""Virtual loop processor: executes compiled schedules bin by bin.

Loss placement:

* ancilla: ``loss_opo_to_vbs`` between the OPO and the VBS;
* loop: ``loss_roundtrip`` once per bin, after the feedforward displacement;
* readout: ``loss_readout`` on the exported state always, and on the
  in-loop feedforward measurement when ``ff_path_lossy`` is set.

The ideal model zeroes every loss and takes the ancilla squeezing to
infinity. That limit is handled exactly: with a lossless feedforward the
ancilla x quadrature cancels from the retained mode, so the ancilla is
represented by a zero covariance (``check=False``) rather than by a huge
finite number.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .compiler import (
    BIN_NS,
    Bin,
    GateProgram,
    Schedule,
    StepParams,
    compile_program,
)
from .gaussian import (
    Displace,
    GateSpec,
    GaussianState,
    LossChannel,
    Phase,
    apply_loss,
    apply_symplectic,
    fidelity,
    make_gate,
)

log = logging.getLogger(__name__)

CAPPED_VARIANCE = 1e-12


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LoopConfig:
    bin_ns: int = BIN_NS
    ancilla_squeezing_db: float = 8.0
    loss_opo_to_vbs: float = 0.07
    loss_roundtrip: float = 0.06
    loss_readout: float = 0.19
    ideal: bool = False
    ff_path_lossy: bool = True
    input_amplitude: float = 4.0
    gain_scale: float = 1.0

    def __post_init__(self):
        for name in ("loss_opo_to_vbs", "loss_roundtrip", "loss_readout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} = {v} outside [0, 1)")
        if self.ancilla_squeezing_db < 0:
            raise ConfigError("ancilla_squeezing_db must be >= 0")
        if self.bin_ns <= 0:
            raise ConfigError("bin_ns must be positive")
        if self.ideal and self.gain_scale != 1.0:
            raise ConfigError("the infinite-squeezing limit needs gain_scale = 1")

    @classmethod
    def ideal_model(cls, **kw) -> "LoopConfig":
        return cls(ideal=True, **kw)

    def replace(self, **kw) -> "LoopConfig":
        d = asdict(self)
        d.update(kw)
        return LoopConfig(**d)

    @property
    def eta_ancilla(self) -> float:
        return 1.0 if self.ideal else 1.0 - self.loss_opo_to_vbs

    @property
    def eta_roundtrip(self) -> float:
        return 1.0 if self.ideal else 1.0 - self.loss_roundtrip

    @property
    def eta_readout(self) -> float:
        return 1.0 if self.ideal else 1.0 - self.loss_readout

    @property
    def eta_feedforward(self) -> float:
        return self.eta_readout if self.ff_path_lossy else 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def make_ancilla(cfg: LoopConfig, capped: bool = False) -> GaussianState:
    """p-squeezed ancilla as it arrives at the VBS.

    For the ideal model ``capped=False`` returns the exact limit object
    (zero covariance); ``capped=True`` returns a squeezed vacuum with
    p-variance 1e-12 instead.
    """
    if cfg.ideal:
        if capped:
            v = CAPPED_VARIANCE
            return GaussianState(np.zeros(2), np.diag([1.0 / v, v]))
        return GaussianState(np.zeros(2), np.zeros((2, 2)), check=False)
    vp = 10.0 ** (-cfg.ancilla_squeezing_db / 10.0)
    pure = GaussianState(np.zeros(2), np.diag([1.0 / vp, vp]))
    return apply_loss(pure, LossChannel(cfg.eta_ancilla))


def _vbs_maps(R: float, gain: float, eta_ff: float, phi_deg: float):
    """Linear maps from (x, p, x_anc, p_anc, v_x, v_p) to the gate outputs.

    Returns ``(L, c)``: ``L`` (2x6) gives the retained mode after the
    feedforward displacement, ``c`` (6,) the measured tap quadrature. ``v``
    is the vacuum admitted by the loss in front of the in-loop detector.
    """
    a, b = np.sqrt(R), np.sqrt(1.0 - R)
    # retained = a loop - b anc ; tap = b loop + a anc (same for x and p)
    ret = np.zeros((2, 6))
    ret[0, [0, 2]] = a, -b
    ret[1, [1, 3]] = a, -b
    tap = np.zeros((2, 6))
    tap[0, [0, 2]] = b, a
    tap[1, [1, 3]] = b, a
    se, sl = np.sqrt(eta_ff), np.sqrt(1.0 - eta_ff)
    tap = se * tap
    tap[0, 4] += sl
    tap[1, 5] += sl
    t = np.deg2rad(phi_deg)
    c = np.cos(t) * tap[0] + np.sin(t) * tap[1]
    L = ret.copy()
    L[0] += gain * c
    return L, c


def _joint_cov(cov: np.ndarray, anc: GaussianState) -> np.ndarray:
    big = np.zeros((6, 6))
    big[:2, :2] = cov
    big[2:4, 2:4] = anc.cov
    big[4:, 4:] = np.eye(2)
    return big


def vbs_event(
    state: GaussianState, params: StepParams, cfg: LoopConfig, anc: GaussianState = None
) -> GaussianState:
    """Analytic (unconditional) output of ancilla coupling, measurement and
    feedforward, with the measured quadrature kept as a linear term."""
    anc = make_ancilla(cfg) if anc is None else anc
    L, _ = _vbs_maps(
        params.R_bs, cfg.gain_scale * params.gain_amp, cfg.eta_feedforward, params.phi_deg
    )
    big = _joint_cov(state.cov, anc)
    mean = L[:, :2] @ state.mean + L[:, 2:4] @ anc.mean
    return GaussianState(mean, L @ big @ L.T, check=state.check)


@dataclass
class ShotState:
    """Per-shot loop state: shot means share one conditional covariance."""

    means: np.ndarray  # (shots, 2)
    cov: np.ndarray  # (2, 2)

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the mixture over shots."""
        m = self.means.mean(axis=0)
        spread = np.cov(self.means.T, ddof=1) if len(self.means) > 1 else 0.0
        return m, self.cov + spread

    def as_state(self) -> GaussianState:
        m, c = self.moments()
        return GaussianState(m, c, check=False)


def vbs_event_sampled(
    shots: ShotState,
    params: StepParams,
    cfg: LoopConfig,
    normals: np.ndarray,
    anc: GaussianState = None,
) -> Tuple[ShotState, np.ndarray]:
    """Per-shot measurement and feedforward.

    ``normals`` holds one standard-normal draw per shot. Returns the
    conditioned shot states and the homodyne outcomes.
    """
    # the capped ancilla keeps the conditioning informative in the ideal model
    anc = make_ancilla(cfg, capped=True) if anc is None else anc
    L, c = _vbs_maps(
        params.R_bs, cfg.gain_scale * params.gain_amp, cfg.eta_feedforward, params.phi_deg
    )
    big = _joint_cov(shots.cov, anc)
    J = np.vstack([L, c])
    jc = J @ big @ J.T
    var_q = jc[2, 2]
    if not var_q > 0:
        raise RuntimeError(f"measured quadrature has variance {var_q}")
    mu_out = shots.means @ L[:, :2].T + L[:, 2:4] @ anc.mean
    mu_q = shots.means @ c[:2] + c[2:4] @ anc.mean
    q = mu_q + np.sqrt(var_q) * normals
    k = jc[:2, 2] / var_q
    means = mu_out + np.outer(q - mu_q, k)
    cov = jc[:2, :2] - np.outer(jc[:2, 2], jc[:2, 2]) / var_q
    return ShotState(means, 0.5 * (cov + cov.T)), q


def step_gate(
    state: GaussianState,
    params: StepParams,
    cfg: LoopConfig,
    mode: str = "analytic",
    rng: Optional[np.random.Generator] = None,
):
    """One measurement-induced gate on the loop mode.

    Phase(theta1), ancilla coupling at the VBS, tap measurement, feedforward,
    roundtrip loss, Phase(theta2). In ``sampled`` mode a single shot is drawn
    and the conditioned state is returned together with the outcome.
    """
    if state.n_modes != 1:
        raise ValueError("the loop holds a single mode")
    s = apply_symplectic(state, make_gate(Phase(params.theta1_deg)))
    if mode == "analytic":
        s = vbs_event(s, params, cfg)
        s = apply_loss(s, LossChannel(cfg.eta_roundtrip))
        return apply_symplectic(s, make_gate(Phase(params.theta2_deg)))
    if mode != "sampled":
        raise ValueError(f"mode must be analytic or sampled, not {mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    shots, q = vbs_event_sampled(
        ShotState(s.mean[None, :], np.array(s.cov)), params, cfg, rng.standard_normal(1)
    )
    out = GaussianState(shots.means[0], shots.cov)
    out = apply_loss(out, LossChannel(cfg.eta_roundtrip))
    return apply_symplectic(out, make_gate(Phase(params.theta2_deg))), float(q[0])


@dataclass
class RunRecord:
    output: GaussianState
    log: List[dict]
    mode: str = "analytic"
    outcomes: Optional[np.ndarray] = None  # (shots, gate bins)
    shot_means: Optional[np.ndarray] = None  # (shots, 2)
    shot_cov: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "output": self.output.to_dict(),
            "log": self.log,
        }
        if self.shot_means is not None:
            d["shots"] = int(len(self.shot_means))
            d["shot_cov"] = self.shot_cov.tolist()
        return d


def _roundtrip(state, b: Bin, cfg: LoopConfig, entry: dict):
    """Displacement, loss and loop phase of the roundtrip after a bin."""
    if b.displacement != (0.0, 0.0):
        state = apply_symplectic(state, make_gate(Displace(*b.displacement)))
        entry["ops"].append(f"displace {b.displacement[0]:g} {b.displacement[1]:g}")
    state = apply_loss(state, LossChannel(cfg.eta_roundtrip))
    entry["ops"].append(f"loss {1 - cfg.eta_roundtrip:g}")
    if b.loop_phase_deg != 0.0:
        state = apply_symplectic(state, make_gate(Phase(b.loop_phase_deg)))
        entry["ops"].append(f"phase {b.loop_phase_deg:g}")
    return state


def _bin_params(b: Bin) -> StepParams:
    return StepParams(b.vbs_R, 0.0, 0.0, b.homodyne_deg, b.gain_amp)


def run_schedule(
    s: Schedule,
    input_state: GaussianState,
    cfg: LoopConfig,
    mode: str = "analytic",
    rng: Optional[np.random.Generator] = None,
    shots: int = 1,
) -> RunRecord:
    """Run a schedule on the loop.

    The input bin swaps the input into the loop (R = 0; the port sign is
    absorbed into the input phase reference). The output bin swaps the loop
    content out and applies the readout loss. In ``sampled`` mode ``shots``
    independent trajectories are simulated together; draws are taken shot-
    major from ``rng`` so that a larger run extends a smaller one.
    """
    if input_state.n_modes != 1:
        raise ValueError("input must be a single-mode state")
    if s.bin_ns != cfg.bin_ns:
        raise ConfigError(f"schedule bin {s.bin_ns} ns != config bin {cfg.bin_ns} ns")
    if mode not in ("analytic", "sampled"):
        raise ValueError(f"mode must be analytic or sampled, not {mode!r}")
    anc = make_ancilla(cfg, capped=(mode == "sampled"))
    n_meas = sum(1 for b in s.bins if b.kind == "gate")
    if mode == "sampled":
        rng = np.random.default_rng() if rng is None else rng
        normals = rng.standard_normal((shots, n_meas))
        state = ShotState(
            np.repeat(input_state.mean[None, :], shots, axis=0), np.array(input_state.cov)
        )
        outcomes = np.zeros((shots, n_meas))
    else:
        state = input_state

    log_entries: List[dict] = []
    k_meas = 0
    for b in s.bins:
        entry = {"bin": b.index, "kind": b.kind, "label": b.label, "vbs_R": b.vbs_R, "ops": []}
        if b.kind == "output":
            if mode == "sampled":
                g = GaussianState(np.zeros(2), state.cov, check=False)
                g = apply_loss(g, LossChannel(cfg.eta_readout))
                state = ShotState(np.sqrt(cfg.eta_readout) * state.means, np.array(g.cov))
            else:
                state = apply_loss(state, LossChannel(cfg.eta_readout))
            entry["ops"].append(f"export, readout loss {1 - cfg.eta_readout:g}")
            log_entries.append(entry)
            break
        if b.kind == "input":
            entry["ops"].append("import input")
        elif b.kind == "gate":
            p = _bin_params(b)
            if mode == "sampled":
                state, q = vbs_event_sampled(state, p, cfg, normals[:, k_meas], anc)
                outcomes[:, k_meas] = q
            else:
                state = vbs_event(state, p, cfg, anc)
            k_meas += 1
            entry["ops"].append(f"ancilla + VBS R={b.vbs_R:.6g}, measure, feedforward g={b.gain_amp:.6g}")
        if mode == "sampled":
            state = _roundtrip_shots(state, b, cfg, entry)
        else:
            state = _roundtrip(state, b, cfg, entry)
        log_entries.append(entry)

    if mode == "sampled":
        return RunRecord(state.as_state(), log_entries, mode, outcomes, state.means, state.cov)
    return RunRecord(state, log_entries, mode)


def _roundtrip_shots(shots: ShotState, b: Bin, cfg: LoopConfig, entry: dict) -> ShotState:
    # the map is affine, so apply it to a template and reuse for every shot
    probe = GaussianState(np.zeros(2), shots.cov, check=False)
    out = _roundtrip(probe, b, cfg, entry)
    lin = np.sqrt(cfg.eta_roundtrip) * _rot(b.loop_phase_deg)
    offset = out.mean
    return ShotState(shots.means @ lin.T + offset, np.array(out.cov))


def _rot(theta_deg: float) -> np.ndarray:
    return make_gate(Phase(theta_deg)).matrix


def ideal_output(program: GateProgram, input_state: GaussianState) -> GaussianState:
    M = program.target_matrix()
    d = program.target_displacement()
    return GaussianState(M @ input_state.mean + d, M @ input_state.cov @ M.T)


def run_program(
    program: GateProgram,
    cfg: LoopConfig,
    input_state: GaussianState = None,
    **kw,
) -> RunRecord:
    input_state = GaussianState.vacuum() if input_state is None else input_state
    return run_schedule(compile_program(program, cfg), input_state, cfg, **kw)


def model_fidelity(program: GateProgram, cfg: LoopConfig, input_state: GaussianState = None) -> float:
    """Fidelity of the modelled output with the ideal gate output."""
    input_state = GaussianState.vacuum() if input_state is None else input_state
    out = run_program(program, cfg, input_state).output
    return fidelity(out, ideal_output(program, input_state))


def coherent_inputs(cfg: LoopConfig) -> dict:
    a = cfg.input_amplitude
    return {
        "vacuum": GaussianState.vacuum(),
        "x_coherent": GaussianState.coherent(a, 0.0),
        "p_coherent": GaussianState.coherent(0.0, a),
    }


def matrix_from_means(x_run_mean, p_run_mean, amplitude: float) -> np.ndarray:
    """Gate matrix from the output means of X- and P-coherent inputs."""
    if amplitude == 0:
        raise ValueError("input amplitude must be nonzero")
    return np.column_stack([np.asarray(x_run_mean), np.asarray(p_run_mean)]) / amplitude


def estimate_gate_matrix(gate: GateSpec, cfg: LoopConfig, amplitude: float = None) -> np.ndarray:
    """Matrix elements <x_out>/<x_in>, <p_out>/<x_in> (X-coherent input) and
    <x_out>/<p_in>, <p_out>/<p_in> (P-coherent input)."""
    a = cfg.input_amplitude if amplitude is None else amplitude
    if a == 0:
        raise ValueError("input amplitude must be nonzero")
    prog = GateProgram([gate])
    mx = run_program(prog, cfg, GaussianState.coherent(a, 0.0)).output.mean
    mp = run_program(prog, cfg, GaussianState.coherent(0.0, a)).output.mean
    return matrix_from_means(mx, mp, a)
