"""Phase-space engine for Gaussian states.

Conventions: hbar = 2, so the vacuum covariance is the identity. Quadratures
are ordered ``(x1, p1, x2, p2, ...)``. Angles are degrees at every public
entry point and radians internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

SYM_TOL = 1e-12
PHYS_TOL = 1e-9


class GaussianError(ValueError):
    """Raised for malformed states, gates or channels."""


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def rotation(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    n = cov.shape[0] // 2
    eig = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    return np.sort(np.abs(eig.real))[::2]


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of ``n_modes`` optical modes.

    The covariance is symmetrised on construction. With ``check`` left on,
    the state must also satisfy the uncertainty relation (every symplectic
    eigenvalue at least 1). Internal limit objects such as an infinitely
    squeezed ancilla are built with ``check=False``.
    """

    mean: np.ndarray
    cov: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise GaussianError(
                f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}"
            )
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if self.check and mean.size and not self.is_physical():
            raise GaussianError("covariance violates the uncertainty relation")

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    @classmethod
    def vacuum(cls, n_modes: int = 1) -> "GaussianState":
        return cls(np.zeros(2 * n_modes), np.eye(2 * n_modes))

    @classmethod
    def coherent(cls, x: float, p: float) -> "GaussianState":
        return cls([x, p], np.eye(2))

    @classmethod
    def squeezed(cls, r: float) -> "GaussianState":
        """Pure state S(r)|0>; positive ``r`` squeezes p."""
        return cls(np.zeros(2), np.diag([np.exp(2 * r), np.exp(-2 * r)]))

    def is_physical(self, tol: float = PHYS_TOL) -> bool:
        if np.linalg.eigvalsh(self.cov).min() < -tol:
            return False
        return bool(symplectic_eigenvalues(self.cov).min() >= 1.0 - tol)

    def mode(self, k: int) -> "GaussianState":
        sl = slice(2 * k, 2 * k + 2)
        return GaussianState(self.mean[sl], self.cov[sl, sl], check=self.check)

    def tensor(self, other: "GaussianState") -> "GaussianState":
        n, m = self.mean.size, other.mean.size
        cov = np.zeros((n + m, n + m))
        cov[:n, :n] = self.cov
        cov[n:, n:] = other.cov
        return GaussianState(
            np.concatenate([self.mean, other.mean]),
            cov,
            check=self.check and other.check,
        )

    def drop(self, k: int) -> "GaussianState":
        """Partial trace over mode ``k``."""
        keep = [i for i in range(self.mean.size) if i // 2 != k]
        return GaussianState(
            self.mean[keep], self.cov[np.ix_(keep, keep)], check=self.check
        )

    def allclose(self, other: "GaussianState", atol: float = 1e-10) -> bool:
        return (
            self.mean.shape == other.mean.shape
            and np.allclose(self.mean, other.mean, rtol=0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0, atol=atol)
        )

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


# gate specifications


@dataclass(frozen=True)
class Squeeze:
    r: float


@dataclass(frozen=True)
class Phase:
    theta_deg: float


@dataclass(frozen=True)
class QPG:
    kappa: float


@dataclass(frozen=True)
class Displace:
    dx: float
    dp: float


@dataclass(frozen=True)
class BeamSplitter:
    R: float
    modes: Tuple[int, int] = (0, 1)


@dataclass(frozen=True, eq=False)
class Arbitrary:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise GaussianError("arbitrary gate must be a 2x2 matrix")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise GaussianError(f"det = {np.linalg.det(m):.12g}, expected 1")
        object.__setattr__(self, "matrix", m)


GateSpec = Union[Squeeze, Phase, QPG, Displace, BeamSplitter, Arbitrary]


@dataclass(frozen=True, eq=False)
class SymplecticOp:
    """Affine phase-space map ``z -> matrix @ z + displacement`` on ``modes``."""

    matrix: np.ndarray
    displacement: np.ndarray
    modes: Tuple[int, ...] = (0,)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        d = np.array(self.displacement, dtype=float).reshape(-1)
        if m.shape != (2 * len(self.modes),) * 2 or d.size != m.shape[0]:
            raise GaussianError("operator shape does not match its modes")
        if len(set(self.modes)) != len(self.modes):
            raise GaussianError(f"repeated mode index in {self.modes}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "displacement", d)

    def is_symplectic(self, tol: float = SYM_TOL) -> bool:
        om = symplectic_form(len(self.modes))
        return bool(np.abs(self.matrix @ om @ self.matrix.T - om).max() < tol)

    def then(self, other: "SymplecticOp") -> "SymplecticOp":
        """Composition: apply ``self`` first, ``other`` second (same modes)."""
        if self.modes != other.modes:
            raise GaussianError("cannot compose operators on different modes")
        return SymplecticOp(
            other.matrix @ self.matrix,
            other.matrix @ self.displacement + other.displacement,
            self.modes,
        )


def squeeze_matrix(r: float) -> np.ndarray:
    return np.diag([np.exp(r), np.exp(-r)])


def qpg_matrix(kappa: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [2.0 * kappa, 1.0]])


def beamsplitter_matrix(R: float) -> np.ndarray:
    """4x4 map for the (retained, tap) output ports of modes (first, second).

    retained = sqrt(R) first - sqrt(1-R) second
    tap      = sqrt(1-R) first + sqrt(R) second
    """
    a, b = np.sqrt(R), np.sqrt(1.0 - R)
    return np.kron(np.array([[a, -b], [b, a]]), np.eye(2))


def make_gate(spec: GateSpec, mode: int = 0) -> SymplecticOp:
    zero2 = np.zeros(2)
    if isinstance(spec, Squeeze):
        _finite(spec.r)
        return SymplecticOp(squeeze_matrix(spec.r), zero2, (mode,))
    if isinstance(spec, Phase):
        _finite(spec.theta_deg)
        return SymplecticOp(rotation(spec.theta_deg), zero2, (mode,))
    if isinstance(spec, QPG):
        _finite(spec.kappa)
        return SymplecticOp(qpg_matrix(spec.kappa), zero2, (mode,))
    if isinstance(spec, Displace):
        _finite(spec.dx, spec.dp)
        return SymplecticOp(np.eye(2), [spec.dx, spec.dp], (mode,))
    if isinstance(spec, Arbitrary):
        return SymplecticOp(spec.matrix, zero2, (mode,))
    if isinstance(spec, BeamSplitter):
        if not 0.0 <= spec.R <= 1.0:
            raise GaussianError(f"reflectivity {spec.R} outside [0, 1]")
        i, j = spec.modes
        if i == j or min(i, j) < 0:
            raise GaussianError(f"bad beam-splitter modes {spec.modes}")
        return SymplecticOp(beamsplitter_matrix(spec.R), np.zeros(4), (i, j))
    raise GaussianError(f"unknown gate {spec!r}")


def _finite(*values: float) -> None:
    if not all(np.isfinite(v) for v in values):
        raise GaussianError(f"non-finite gate parameter in {values}")


def _embed(op: SymplecticOp, n_modes: int) -> Tuple[np.ndarray, np.ndarray]:
    if max(op.modes) >= n_modes:
        raise GaussianError(
            f"operator acts on modes {op.modes} of a {n_modes}-mode state"
        )
    idx = [2 * m + q for m in op.modes for q in (0, 1)]
    big = np.eye(2 * n_modes)
    big[np.ix_(idx, idx)] = op.matrix
    d = np.zeros(2 * n_modes)
    d[idx] = op.displacement
    return big, d


def apply_linear(
    state: GaussianState, matrix: np.ndarray, shift=None, check: bool = None
) -> GaussianState:
    """Apply an arbitrary (not necessarily symplectic) linear map."""
    shift = np.zeros(state.mean.size) if shift is None else shift
    return GaussianState(
        matrix @ state.mean + shift,
        matrix @ state.cov @ matrix.T,
        check=state.check if check is None else check,
    )


def apply_symplectic(state: GaussianState, op: SymplecticOp) -> GaussianState:
    big, d = _embed(op, state.n_modes)
    return apply_linear(state, big, d)


@dataclass(frozen=True)
class LossChannel:
    """Pure-loss channel with transmissivity ``eta`` on ``mode``."""

    eta: float
    mode: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise GaussianError(f"transmissivity {self.eta} outside [0, 1]")


def apply_loss(state: GaussianState, ch: LossChannel) -> GaussianState:
    if ch.mode >= state.n_modes:
        raise GaussianError(f"loss on mode {ch.mode} of {state.n_modes}")
    scale = np.ones(state.mean.size)
    scale[2 * ch.mode : 2 * ch.mode + 2] = np.sqrt(ch.eta)
    noise = np.zeros_like(state.cov)
    sl = slice(2 * ch.mode, 2 * ch.mode + 2)
    noise[sl, sl] = (1.0 - ch.eta) * np.eye(2)
    return GaussianState(
        scale * state.mean,
        scale[:, None] * state.cov * scale[None, :] + noise,
        check=state.check,
    )


def quadrature_marginal(
    state: GaussianState, mode: int, angle_deg: float
) -> Tuple[float, float]:
    """Mean and variance of ``x cos(phi) + p sin(phi)`` on ``mode``."""
    t = np.deg2rad(angle_deg)
    u = np.array([np.cos(t), np.sin(t)])
    sl = slice(2 * mode, 2 * mode + 2)
    return float(u @ state.mean[sl]), float(u @ state.cov[sl, sl] @ u)


def homodyne_project(
    state: GaussianState, mode: int, angle_deg: float, outcome: float
) -> GaussianState:
    """Condition the other modes on ``outcome`` of a homodyne measurement.

    The measured mode is removed. For a single-mode state the result is an
    empty (zero-mode) state.
    """
    if not np.isfinite(angle_deg):
        raise GaussianError("homodyne angle must be finite")
    if mode >= state.n_modes:
        raise GaussianError(f"no mode {mode} in a {state.n_modes}-mode state")
    t = np.deg2rad(angle_deg)
    u = np.zeros(state.mean.size)
    u[2 * mode : 2 * mode + 2] = [np.cos(t), np.sin(t)]
    keep = [i for i in range(state.mean.size) if i // 2 != mode]
    var = float(u @ state.cov @ u)
    if not var > 0.0:
        raise RuntimeError(f"measured quadrature has variance {var}")
    c = state.cov[keep] @ u
    mu = float(u @ state.mean)
    mean = state.mean[keep] + c * (outcome - mu) / var
    cov = state.cov[np.ix_(keep, keep)] - np.outer(c, c) / var
    return GaussianState(mean, cov, check=state.check)


def homodyne_measure(
    state: GaussianState, mode: int, angle_deg: float, rng: np.random.Generator
) -> Tuple[float, GaussianState]:
    if state.n_modes < 1:
        raise GaussianError("nothing to measure")
    mu, var = quadrature_marginal(state, mode, angle_deg)
    if not var > 0.0:
        raise RuntimeError(f"measured quadrature has variance {var}")
    outcome = float(rng.normal(mu, np.sqrt(var)))
    return outcome, homodyne_project(state, mode, angle_deg, outcome)


def _excess_det(v: np.ndarray) -> float:
    """det V - 1, snapped to 0 when within rounding of a pure state.

    sqrt(d) turns a 1e-16 rounding residue into a 1e-8 fidelity error.
    """
    e = float(np.linalg.det(v)) - 1.0
    return 0.0 if abs(e) <= 64 * np.finfo(float).eps * float(np.abs(v).max()) ** 2 else e


def fidelity(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity (squared-overlap convention) of two one-mode states.

    F = 2 / (sqrt(D + d) - sqrt(d)) * exp(-1/2 dm^T (Va + Vb)^-1 dm)
    with D = det(Va + Vb) and d = (det Va - 1)(det Vb - 1), hbar = 2.
    """
    if a.n_modes != 1 or b.n_modes != 1:
        raise GaussianError("fidelity is implemented for single-mode states")
    s = a.cov + b.cov
    big = np.linalg.det(s)
    small = max(0.0, _excess_det(a.cov) * _excess_det(b.cov))
    dm = a.mean - b.mean
    f = 2.0 / (np.sqrt(big + small) - np.sqrt(small))
    return float(min(1.0, f * np.exp(-0.5 * dm @ np.linalg.solve(s, dm))))


@dataclass(frozen=True)
class EllipseSummary:
    center: Tuple[float, float]
    var_major: float
    var_minor: float
    tilt_deg: float

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "var_major": self.var_major,
            "var_minor": self.var_minor,
            "tilt_deg": self.tilt_deg,
        }


def wrap_tilt(angle_deg: float) -> float:
    """Map an axis direction into (-90, 90]."""
    a = (angle_deg + 90.0) % 180.0 - 90.0
    return 90.0 if a == -90.0 else a


def ellipse_summary(state: GaussianState, tie_tol: float = 1e-12) -> EllipseSummary:
    if state.n_modes != 1:
        raise GaussianError("ellipse summary needs a single-mode state")
    vals, vecs = np.linalg.eigh(state.cov)
    minor, major = vals
    if major - minor <= tie_tol * max(1.0, major):
        tilt = 0.0
    else:
        v = vecs[:, 1]
        tilt = wrap_tilt(np.rad2deg(np.arctan2(v[1], v[0])))
    return EllipseSummary(
        (float(state.mean[0]), float(state.mean[1])),
        float(major),
        float(minor),
        float(tilt),
    )


def ellipse_contour(state: GaussianState, n_points: int = 181) -> np.ndarray:
    """1-sigma contour of the Wigner function (relative height 1/sqrt(e)).

    Returns an ``(n_points, 2)`` closed polyline of (x, p) points.
    """
    vals, vecs = np.linalg.eigh(state.cov)
    t = np.linspace(0.0, 2.0 * np.pi, n_points)
    circle = np.stack([np.cos(t), np.sin(t)])
    pts = vecs @ (np.sqrt(np.clip(vals, 0.0, None))[:, None] * circle)
    return (pts + state.mean[:2, None]).T


def compose_matrices(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Product for gates applied in list order (first gate rightmost)."""
    out = np.eye(2)
    for m in matrices:
        out = m @ out
    return out
