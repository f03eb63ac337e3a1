"""Compile single-mode Gaussian gate programs into per-bin loop settings.

Every gate is realised as phase shift, measurement-induced squeezer, phase
shift. The squeezer couples the loop mode to a p-squeezed ancilla on the
variable beam splitter (VBS) with reflectivity ``R = exp(-2 r)``, measures x
of the tapped port and feeds it forward onto x with gain ``sqrt((1-R)/R)``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .gaussian import (
    QPG,
    Arbitrary,
    Displace,
    GateSpec,
    Phase,
    Squeeze,
    qpg_matrix,
    rotation,
    squeeze_matrix,
)

BIN_NS = 66
FORMAT_VERSION = 1
R_MAX = 3.0
# feedforward window inside a bin: the central 46 ns of the 66 ns slot
FF_WINDOW_NS = (10, 56)


class CompileError(ValueError):
    pass


class DriverConstraintError(CompileError):
    """The program needs more VBS levels than the EOM driver provides."""


class DriverConstraintWarning(UserWarning):
    pass


def wrap_deg(angle: float) -> float:
    """Map an angle into (-180, 180]."""
    a = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if a == -180.0 else a


@dataclass(frozen=True)
class StepParams:
    """Hardware settings of one measurement-induced gate step."""

    R_bs: float
    theta1_deg: float = 0.0
    theta2_deg: float = 0.0
    phi_deg: float = 0.0
    gain_amp: float = 0.0

    @property
    def gain_db(self) -> float:
        return 20.0 * math.log10(self.gain_amp) if self.gain_amp > 0 else -math.inf

    @property
    def r(self) -> float:
        """Magnitude of the squeezing realised by the VBS setting."""
        return -0.5 * math.log(self.R_bs)

    def matrix(self) -> np.ndarray:
        """Ideal (lossless, infinite-squeezing) action on (x, p)."""
        return (
            rotation(self.theta2_deg)
            @ squeeze_matrix(self.r)
            @ rotation(self.theta1_deg)
        )

    def table_row(self) -> dict:
        return {
            "R_percent": 100.0 * self.R_bs,
            "theta1_deg": self.theta1_deg,
            "theta2_deg": self.theta2_deg,
            "gain_db": self.gain_db,
        }


def compile_squeezer(r: float, r_max: float = R_MAX) -> StepParams:
    if not math.isfinite(r):
        raise CompileError(f"non-finite squeezing parameter {r}")
    if abs(r) > r_max:
        raise CompileError(
            f"|r| = {abs(r)} exceeds r_max = {r_max}; the VBS reflectivity "
            f"{math.exp(-2 * abs(r)):.2e} is below the driver resolution"
        )
    R = math.exp(-2.0 * abs(r))
    gain = math.sqrt((1.0 - R) / R)
    if r < 0:
        # ancilla orientation is fixed: conjugate a positive squeezer by 90 deg
        return StepParams(R, 90.0, -90.0, 0.0, gain)
    return StepParams(R, 0.0, 0.0, 0.0, gain)


def qpg_angles(kappa: float) -> Tuple[float, float, float]:
    """(r, theta1_deg, theta2_deg) with R(theta2) S(r) R(theta1) = U2(kappa).

    r = asinh(kappa), cos 2theta1 = tanh r, sin 2theta1 = -1/cosh r and
    theta2 = theta1 + 90 deg. ``r`` carries the sign of ``kappa``.
    """
    r = math.asinh(kappa)
    theta1 = 0.5 * math.degrees(math.atan2(-1.0 / math.cosh(r), math.tanh(r)))
    return r, theta1, theta1 + 90.0


def compile_qpg(kappa: float, r_max: float = R_MAX) -> StepParams:
    if not math.isfinite(kappa):
        raise CompileError(f"non-finite QPG parameter {kappa}")
    r, t1, t2 = qpg_angles(kappa)
    sq = compile_squeezer(r, r_max)
    return StepParams(
        sq.R_bs,
        wrap_deg(t1 + sq.theta1_deg),
        wrap_deg(t2 + sq.theta2_deg),
        0.0,
        sq.gain_amp,
    )


def decompose_symplectic(M) -> Tuple[float, float, float]:
    """Split a unimodular 2x2 matrix as R(theta2) S(r) R(theta1).

    Returns ``(theta1_deg, r, theta2_deg)`` with ``r >= 0`` and theta1 in
    (-90, 90]. A rotation (r = 0) is assigned entirely to theta2.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2) or abs(np.linalg.det(M) - 1.0) >= 1e-9:
        raise CompileError("decomposition needs a 2x2 matrix with det 1")
    U, s, Vt = np.linalg.svd(M)
    if np.linalg.det(U) < 0:
        flip = np.diag([1.0, -1.0])
        U, Vt = U @ flip, flip @ Vt
    r = 0.5 * math.log(s[0] / s[1])
    if r < 1e-12:
        return 0.0, 0.0, wrap_deg(math.degrees(math.atan2(M[1, 0], M[0, 0])))
    t2 = math.degrees(math.atan2(U[1, 0], U[0, 0]))
    t1 = math.degrees(math.atan2(Vt[1, 0], Vt[0, 0]))
    # R(t2 + 180) S R(t1 + 180) is the same matrix
    if t1 <= -90.0 or t1 > 90.0:
        t1, t2 = t1 - math.copysign(180.0, t1), t2 + 180.0
    return t1, r, wrap_deg(t2)


def compile_matrix(M, r_max: float = R_MAX) -> StepParams:
    t1, r, t2 = decompose_symplectic(M)
    sq = compile_squeezer(r, r_max)
    return StepParams(sq.R_bs, t1, t2, 0.0, sq.gain_amp)


@dataclass
class GateProgram:
    gates: List[GateSpec]
    repeat: int = 1

    def __post_init__(self):
        if self.repeat < 1:
            raise CompileError("repeat count must be at least 1")
        for g in self.gates:
            for v in _gate_values(g):
                if not math.isfinite(v):
                    raise CompileError(f"non-finite parameter in {g}")

    def expanded(self) -> List[GateSpec]:
        return list(self.gates) * self.repeat

    def target_matrix(self) -> np.ndarray:
        out = np.eye(2)
        for g in self.expanded():
            out = gate_matrix(g) @ out
        return out

    def target_displacement(self) -> np.ndarray:
        """Constant offset accumulated by the ideal program."""
        d = np.zeros(2)
        for g in self.expanded():
            d = gate_matrix(g) @ d
            if isinstance(g, Displace):
                d = d + [g.dx, g.dp]
        return d


def _gate_values(g: GateSpec) -> Sequence[float]:
    if isinstance(g, Squeeze):
        return (g.r,)
    if isinstance(g, QPG):
        return (g.kappa,)
    if isinstance(g, Phase):
        return (g.theta_deg,)
    if isinstance(g, Displace):
        return (g.dx, g.dp)
    if isinstance(g, Arbitrary):
        return tuple(g.matrix.ravel())
    raise CompileError(f"gate {g!r} is not a single-mode program gate")


def gate_matrix(g: GateSpec) -> np.ndarray:
    if isinstance(g, Squeeze):
        return squeeze_matrix(g.r)
    if isinstance(g, QPG):
        return qpg_matrix(g.kappa)
    if isinstance(g, Phase):
        return rotation(g.theta_deg)
    if isinstance(g, Displace):
        return np.eye(2)
    if isinstance(g, Arbitrary):
        return g.matrix
    raise CompileError(f"gate {g!r} is not a single-mode program gate")


def compile_gate(g: GateSpec, r_max: float = R_MAX) -> Optional[StepParams]:
    """StepParams for squeezer-backed gates, None for phase/displacement."""
    if isinstance(g, Squeeze):
        return compile_squeezer(g.r, r_max)
    if isinstance(g, QPG):
        return compile_qpg(g.kappa, r_max)
    if isinstance(g, Arbitrary):
        return compile_matrix(g.matrix, r_max)
    return None


@dataclass
class Bin:
    """Settings of one 66 ns time bin.

    ``vbs_R`` acts when the wave packet reaches the VBS at the start of the
    bin. The remaining fields describe the roundtrip that follows: the
    feedforward (or constant) displacement, then the loop phase shift.
    """

    index: int
    kind: str  # input | gate | phase | displace | output
    vbs_R: float
    switch1: str  # input | ancilla | none
    loop_phase_deg: float = 0.0
    homodyne_deg: float = 0.0
    ff_enabled: bool = False
    gain_amp: float = 0.0
    displacement: Tuple[float, float] = (0.0, 0.0)
    export: bool = False
    label: str = ""

    @property
    def gain_db(self) -> float:
        return 20.0 * math.log10(self.gain_amp) if self.gain_amp > 0 else -math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["displacement"] = list(self.displacement)
        d["gain_db"] = self.gain_db if self.gain_amp > 0 else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Bin":
        d = dict(d)
        d.pop("gain_db", None)
        d["displacement"] = tuple(d["displacement"])
        return cls(**d)


@dataclass
class Schedule:
    bins: List[Bin]
    bin_ns: int = BIN_NS
    config: dict = field(default_factory=dict)
    steps: List[Optional[StepParams]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.bins) < 2:
            raise CompileError("a schedule needs at least input and output bins")
        first, last = self.bins[0], self.bins[-1]
        if first.kind != "input" or first.vbs_R != 0.0:
            raise CompileError("first bin must import the input with R = 0")
        if last.kind != "output" or last.vbs_R != 0.0 or not last.export:
            raise CompileError("last bin must export with R = 0")

    @property
    def gate_bins(self) -> List[Bin]:
        return [b for b in self.bins if b.kind == "gate"]

    def vbs_levels(self) -> List[float]:
        """Distinct nonzero reflectivities the driver has to provide."""
        levels: List[float] = []
        for b in self.bins:
            if b.vbs_R > 0 and not any(abs(b.vbs_R - v) < 1e-12 for v in levels):
                levels.append(b.vbs_R)
        return levels

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "bin_ns": self.bin_ns,
            "config": self.config,
            "bins": [b.to_dict() for b in self.bins],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        if d.get("format_version") != FORMAT_VERSION:
            raise CompileError(f"unsupported schedule format {d.get('format_version')}")
        return cls(
            [Bin.from_dict(b) for b in d["bins"]],
            d.get("bin_ns", BIN_NS),
            d.get("config", {}),
        )


def compile_program(
    program: GateProgram,
    cfg=None,
    driver_check: str = "off",
    r_max: float = R_MAX,
) -> Schedule:
    """Lay out the unrolled circuit: input bin, one bin per gate, output bin.

    ``driver_check`` is ``"off"``, ``"warn"`` or ``"error"``; the EOM-2 driver
    offers R = 0 plus a single other reflectivity.
    """
    if driver_check not in ("off", "warn", "error"):
        raise ValueError(f"driver_check must be off/warn/error, not {driver_check!r}")
    gates = program.expanded()
    # pre-phase of each bin (applied in the previous roundtrip) and post-phase
    pre: List[float] = [0.0]
    post: List[float] = [0.0]
    bins = [Bin(0, "input", 0.0, "input", label="input")]
    steps: List[Optional[StepParams]] = [None]
    for k, g in enumerate(gates, start=1):
        sp = compile_gate(g, r_max)
        steps.append(sp)
        if sp is not None:
            pre.append(sp.theta1_deg)
            post.append(sp.theta2_deg)
            bins.append(
                Bin(
                    k,
                    "gate",
                    sp.R_bs,
                    "ancilla",
                    homodyne_deg=sp.phi_deg,
                    ff_enabled=True,
                    gain_amp=sp.gain_amp,
                    label=_label(g),
                )
            )
        elif isinstance(g, Phase):
            pre.append(0.0)
            post.append(g.theta_deg)
            bins.append(Bin(k, "phase", 1.0, "none", label=_label(g)))
        else:
            pre.append(0.0)
            post.append(0.0)
            bins.append(
                Bin(k, "displace", 1.0, "none", displacement=(g.dx, g.dp), label=_label(g))
            )
    n = len(bins)
    bins.append(Bin(n, "output", 0.0, "none", export=True, label="output"))
    steps.append(None)
    pre.append(0.0)
    for k in range(n):
        bins[k].loop_phase_deg = wrap_deg(post[k] + pre[k + 1])

    cfg_dict = cfg.to_dict() if hasattr(cfg, "to_dict") else dict(cfg or {})
    sched = Schedule(bins, BIN_NS, cfg_dict, steps)
    if driver_check != "off" and len(sched.vbs_levels()) > 1:
        levels = ", ".join(f"{100 * v:.1f}%" for v in sched.vbs_levels())
        msg = (
            f"program needs {len(sched.vbs_levels())} nonzero VBS reflectivities "
            f"({levels}); the driver supports R = 0 and one other value"
        )
        if driver_check == "error":
            raise DriverConstraintError(msg)
        warnings.warn(msg, DriverConstraintWarning, stacklevel=2)
    return sched


def _label(g: GateSpec) -> str:
    if isinstance(g, Squeeze):
        return f"squeeze {g.r:g}"
    if isinstance(g, QPG):
        return f"qpg {g.kappa:g}"
    if isinstance(g, Phase):
        return f"phase {g.theta_deg:g}"
    if isinstance(g, Displace):
        return f"displace {g.dx:g} {g.dp:g}"
    return "arbitrary"


@dataclass(frozen=True)
class TimingEvent:
    t_ns: int
    component: str
    value: object
    unit: str


TIMING_COLUMNS = ("t_ns", "component", "value", "unit")


def emit_timing_chart(s: Schedule) -> List[TimingEvent]:
    """Event list of every component, in time order.

    Level-type components (VBS, loop phase, LO shift, Switch-1) get a row at
    t = 0 and whenever their value changes at a bin boundary. The feedforward
    channel gets an opening and a closing row per active bin.
    """
    events: List[TimingEvent] = []
    last = {}

    def level(t, comp, value, unit):
        if last.get(comp) != value:
            events.append(TimingEvent(t, comp, value, unit))
            last[comp] = value

    for b in s.bins:
        t0 = b.index * s.bin_ns
        level(t0, "switch1", b.switch1, "state")
        level(t0, "vbs", round(100.0 * b.vbs_R, 6), "percent")
        level(t0, "loop_phase", round(b.loop_phase_deg, 6), "deg")
        level(t0, "lo_shift", round(b.homodyne_deg, 6), "deg")
        if b.ff_enabled or b.displacement != (0.0, 0.0):
            value = round(b.gain_amp, 9) if b.ff_enabled else "const"
            events.append(TimingEvent(t0 + FF_WINDOW_NS[0], "feedforward", value, "gain"))
            events.append(TimingEvent(t0 + FF_WINDOW_NS[1], "feedforward", 0, "gain"))
    events.sort(key=lambda e: e.t_ns)
    return events


def write_timing_csv(events: Iterable[TimingEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(TIMING_COLUMNS)
        for e in events:
            w.writerow([e.t_ns, e.component, e.value, e.unit])
