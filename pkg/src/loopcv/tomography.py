"""Homodyne tomography of single-mode Gaussian states.

Raw traces are turned into quadrature samples with an odd mode function,
calibrated against vacuum and fitted by maximum likelihood under a Gaussian
Wigner-function assumption. Statistical errors come from refitting
contiguous subsets of the data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .gaussian import (
    EllipseSummary,
    GaussianState,
    ellipse_summary,
    fidelity,
    quadrature_marginal,
    wrap_tilt,
)

FORMAT_VERSION = 1
DEFAULT_ANGLES = tuple(15.0 * k for k in range(12))
PARAM_NAMES = ("x", "p", "var_x", "cov_xp", "var_p")


class TomographyError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeFunctionParams:
    gamma: float = 6e7  # 1/s
    t1_ns: float = 23.0
    window_ns: float = 46.0
    bin_ns: float = 66.0
    sample_rate: float = 1.0  # samples per ns

    def __post_init__(self):
        if self.t1_ns > self.window_ns / 2:
            raise ValueError("t1 must lie inside the analysis window")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def t0_ns(self) -> float:
        return self.bin_ns / 2

    @property
    def n_samples(self) -> int:
        return int(round(self.bin_ns * self.sample_rate))

    def times_ns(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate


def mode_function(t_s, p: ModeFunctionParams = ModeFunctionParams()) -> np.ndarray:
    """f(t) = t exp(-gamma^2 t^2) for |t| < t1, else 0 (t in seconds)."""
    t = np.asarray(t_s, dtype=float)
    inside = np.abs(t) < p.t1_ns * 1e-9
    return np.where(inside, t * np.exp(-(p.gamma * t) ** 2), 0.0)


def _pair_offsets(p: ModeFunctionParams) -> Tuple[int, np.ndarray, np.ndarray]:
    c = p.t0_ns * p.sample_rate
    if abs(c - round(c)) > 1e-9:
        raise ValueError("bin centre must fall on a sample")
    c = int(round(c))
    k = np.arange(1, int(math.ceil(p.t1_ns * p.sample_rate)) + 1)
    w = mode_function(k / p.sample_rate * 1e-9, p)
    keep = w != 0
    return c, k[keep], w[keep]


def mode_sample(trace, p: ModeFunctionParams = ModeFunctionParams()) -> np.ndarray:
    """Inner product of trace(s) with f(t - t0), uncalibrated.

    ``trace`` holds samples at ``times_ns()``; a 2-D array is a batch of
    traces. Samples symmetric about t0 are paired before weighting, so a
    constant offset cancels exactly.
    """
    tr = np.asarray(trace, dtype=float)
    if tr.shape[-1] < p.n_samples:
        raise ValueError(f"trace has {tr.shape[-1]} samples, need {p.n_samples}")
    c, k, w = _pair_offsets(p)
    dt = 1e-9 / p.sample_rate
    diff = tr[..., c + k] - tr[..., c - k]
    return diff @ w * dt


def mode_norm(p: ModeFunctionParams = ModeFunctionParams()) -> float:
    """Discrete integral of f^2, the response of mode_sample to f itself."""
    _, _, w = _pair_offsets(p)
    return float(2.0 * np.sum(w * w) * 1e-9 / p.sample_rate)


def synthetic_traces(
    values: np.ndarray,
    rng: np.random.Generator,
    p: ModeFunctionParams = ModeFunctionParams(),
    noise_std: float = 1.0,
    offset: float = 0.0,
) -> np.ndarray:
    """Traces carrying quadrature ``values`` in the mode f plus white noise.

    With ``values`` all zero the traces are pure shot noise (vacuum).
    """
    values = np.asarray(values, dtype=float)
    t = (p.times_ns() - p.t0_ns) * 1e-9
    shape = mode_function(t, p) / mode_norm(p)
    noise = rng.standard_normal((values.size, p.n_samples)) * noise_std
    return offset + values[:, None] * shape[None, :] + noise


def calibrate_vacuum(raw) -> float:
    """Scale factor that maps the raw vacuum samples to unit variance."""
    raw = np.asarray(raw, dtype=float).reshape(-1)
    if raw.size < 100:
        raise ValueError("need at least 100 vacuum samples")
    var = float(np.var(raw))
    if var <= 0:
        raise ValueError("vacuum samples have zero variance")
    return 1.0 / math.sqrt(var)


@dataclass
class QuadratureSampleSet:
    angles_deg: np.ndarray
    samples: np.ndarray  # (angles, shots)
    scale: float = 1.0

    def __post_init__(self):
        self.angles_deg = np.asarray(self.angles_deg, dtype=float)
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.angles_deg.size == 0:
            raise ValueError("empty angle list")
        if np.any(np.diff(self.angles_deg) <= 0):
            raise ValueError("angles must be strictly increasing")
        if self.samples.shape[0] != self.angles_deg.size:
            raise ValueError("one row of samples per angle")

    @property
    def n_per_angle(self) -> int:
        return self.samples.shape[1]

    def calibrated(self) -> np.ndarray:
        return self.samples * self.scale

    def subset(self, k: int, n_subsets: int) -> "QuadratureSampleSet":
        """Contiguous block ``k`` of ``n_subsets`` (acquisition order)."""
        n = self.n_per_angle
        if n % n_subsets:
            raise ValueError(f"{n} shots do not split into {n_subsets} equal blocks")
        b = n // n_subsets
        return QuadratureSampleSet(self.angles_deg, self.samples[:, k * b : (k + 1) * b], self.scale)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# format_version: {FORMAT_VERSION}\n")
            w = csv.writer(fh)
            w.writerow(["angle_deg", "shot_index", "value"])
            data = self.calibrated()
            for a, row in zip(self.angles_deg, data):
                for i, v in enumerate(row):
                    w.writerow([f"{a:g}", i, repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "QuadratureSampleSet":
        rows: Dict[float, Dict[int, float]] = {}
        with open(path, newline="") as fh:
            for r in csv.DictReader(line for line in fh if not line.startswith("#")):
                rows.setdefault(float(r["angle_deg"]), {})[int(r["shot_index"])] = float(r["value"])
        angles = sorted(rows)
        n = len(rows[angles[0]])
        data = np.array([[rows[a][i] for i in range(n)] for a in angles])
        return cls(np.array(angles), data)


def sample_state(
    state: GaussianState,
    angles_deg: Sequence[float] = DEFAULT_ANGLES,
    n_per_angle: int = 1000,
    rng: np.random.Generator = None,
) -> QuadratureSampleSet:
    if state.n_modes != 1:
        raise ValueError("tomography is single-mode")
    if len(angles_deg) == 0:
        raise ValueError("empty angle list")
    rng = np.random.default_rng() if rng is None else rng
    mv = np.array([quadrature_marginal(state, 0, a) for a in angles_deg])
    z = rng.standard_normal((len(angles_deg), n_per_angle))
    return QuadratureSampleSet(np.asarray(angles_deg, float), mv[:, :1] + np.sqrt(mv[:, 1:]) * z)


# maximum likelihood


@dataclass(frozen=True)
class _Stats:
    u: np.ndarray  # (A, 2) measurement directions
    n: np.ndarray  # counts
    s1: np.ndarray  # sums
    s2: np.ndarray  # sums of squares

    @classmethod
    def from_samples(cls, s: QuadratureSampleSet) -> "_Stats":
        data = s.calibrated()
        return cls(
            _directions(s.angles_deg),
            np.full(len(data), data.shape[1], dtype=float),
            data.sum(axis=1),
            (data * data).sum(axis=1),
        )


def _directions(angles_deg) -> np.ndarray:
    t = np.deg2rad(np.asarray(angles_deg, float))
    return np.column_stack([np.cos(t), np.sin(t)])


def _unpack(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    L = np.array([[math.exp(theta[2]), 0.0], [theta[3], math.exp(theta[4])]])
    return theta[:2], L


def _pack(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return np.array([mean[0], mean[1], math.log(L[0, 0]), L[1, 0], math.log(L[1, 1])])


# physical coordinates: C = (1 + a^2) K with K = L L^T, det K = 1


def _unpack_phys(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    h = math.exp(0.5 * theta[2])
    L = np.array([[h, 0.0], [theta[3] * h, 1.0 / h]])
    return theta[:2], L, 1.0 + theta[4] ** 2


def _pack_phys(mean: np.ndarray, cov: np.ndarray, a: float = 0.0) -> np.ndarray:
    K = cov / math.sqrt(np.linalg.det(cov))
    u = math.log(K[0, 0])
    return np.array([mean[0], mean[1], u, K[0, 1] / K[0, 0], a])


def _cov(theta: np.ndarray, physical: bool) -> Tuple[np.ndarray, np.ndarray]:
    if physical:
        m, L, nu = _unpack_phys(theta)
        return m, nu * (L @ L.T)
    m, L = _unpack(theta)
    return m, L @ L.T


def _nll_grad(theta: np.ndarray, st: _Stats, physical: bool = False) -> Tuple[float, np.ndarray]:
    """Negative log-likelihood per sample, and its gradient."""
    m, C = _cov(theta, physical)
    mu = st.u @ m
    v = np.einsum("ai,ij,aj->a", st.u, C, st.u)
    if np.any(v <= 0):
        return math.inf, np.full(5, np.nan)
    Q = st.s2 - 2 * mu * st.s1 + st.n * mu * mu
    N = st.n.sum()
    f = 0.5 * np.sum(st.n * np.log(2 * np.pi * v) + Q / v) / N
    d_mu = -(st.s1 - st.n * mu) / v / N
    d_v = 0.5 * (st.n / v - Q / (v * v)) / N
    g_m = st.u.T @ d_mu
    # v_a = u_a^T C u_a, so dNLL/dC = sum_a d_v[a] u_a u_a^T
    G_C = np.einsum("a,ai,aj->ij", d_v, st.u, st.u)
    if physical:
        _, L, nu = _unpack_phys(theta)
        G = 2 * nu * G_C @ L
        g = np.array([
            g_m[0],
            g_m[1],
            0.5 * (G[0, 0] * L[0, 0] + G[1, 0] * L[1, 0] - G[1, 1] * L[1, 1]),
            G[1, 0] * L[0, 0],
            2 * theta[4] * float(np.sum(G_C * (L @ L.T))),
        ])
        return float(f), g
    _, L = _unpack(theta)
    G = 2 * G_C @ L
    g = np.array([g_m[0], g_m[1], G[0, 0] * L[0, 0], G[1, 0], G[1, 1] * L[1, 1]])
    return float(f), g


def _moment_start(st: _Stats) -> Tuple[np.ndarray, np.ndarray]:
    mu = st.s1 / st.n
    var = st.s2 / st.n - mu * mu
    m = np.linalg.lstsq(st.u, mu, rcond=None)[0]
    A = np.column_stack([st.u[:, 0] ** 2, 2 * st.u[:, 0] * st.u[:, 1], st.u[:, 1] ** 2])
    c = np.linalg.lstsq(A, var, rcond=None)[0]
    C = np.array([[c[0], c[1]], [c[1], c[2]]])
    w, V = np.linalg.eigh(C)
    floor = max(1e-6, 1e-3 * float(np.max(var)))
    C = V @ np.diag(np.maximum(w, floor)) @ V.T
    return m, C


@dataclass
class FitSettings:
    gtol: float = 1e-8
    max_iter: int = 500
    n_subsets: int = 10


@dataclass
class TomographyResult:
    mean: np.ndarray
    cov: np.ndarray
    stderr: Dict[str, float]
    loglik: float
    grad_norm: float
    n_samples: int
    subset_fits: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    constrained: bool = False  # True when the physicality bound was active

    @property
    def state(self) -> GaussianState:
        return GaussianState(self.mean, self.cov)

    def subset_states(self) -> List[GaussianState]:
        return [GaussianState(m, c) for m, c in self.subset_fits]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "stderr": self.stderr,
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "n_samples": self.n_samples,
            "constrained": self.constrained,
        }


def _minimize(st: _Stats, settings: FitSettings, theta: np.ndarray, physical: bool):
    fun = lambda t: _nll_grad(t, st, physical)  # noqa: E731
    res = optimize.minimize(
        fun, theta, jac=True, method="BFGS",
        options={"gtol": settings.gtol * 0.1, "maxiter": settings.max_iter},
    )
    theta = res.x
    f, g = fun(theta)
    # Newton polish with a finite-difference Hessian of the exact gradient
    for _ in range(50):
        if np.linalg.norm(g) < settings.gtol:
            break
        h = 1e-6
        H = np.empty((5, 5))
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            H[:, i] = (fun(theta + e)[1] - fun(theta - e)[1]) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-6:
            f_new, g_new = fun(theta - t * step)
            if np.isfinite(f_new) and (f_new <= f + 1e-15 or np.linalg.norm(g_new) < np.linalg.norm(g)):
                break
            t *= 0.5
        theta = theta - t * step
        f, g = f_new, g_new
    gn = float(np.linalg.norm(g))
    if not gn < settings.gtol:
        raise TomographyError(f"MLE did not converge: gradient norm {gn:.3g}")
    return theta, f, gn


def _physical(C: np.ndarray) -> bool:
    return GaussianState(np.zeros(2), C, check=False).is_physical()


def _fit_stats(st: _Stats, settings: FitSettings):
    """Log-Cholesky fit; if the optimum violates the uncertainty relation the
    fit is repeated over physical covariances only (C = (1 + a^2) K, det K = 1)."""
    m0, C0 = _moment_start(st)
    theta, f, gn = _minimize(st, settings, _pack(m0, C0), False)
    m, C = _cov(theta, False)
    if _physical(C):
        return m, C, -f * st.n.sum(), gn, False
    theta, f, gn = _minimize(st, settings, _pack_phys(m, C, a=0.1), True)
    m, C = _cov(theta, True)
    return m, C, -f * st.n.sum(), gn, True


def _params(m: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.array([m[0], m[1], C[0, 0], C[0, 1], C[1, 1]])


def mle_fit(
    samples: QuadratureSampleSet, settings: FitSettings = None, bootstrap: bool = True
) -> TomographyResult:
    settings = settings or FitSettings()
    if len(set(np.round(samples.angles_deg % 180.0, 9))) < 3:
        raise ValueError("need at least 3 distinct angles (mod 180 deg)")
    st = _Stats.from_samples(samples)
    m, C, ll, gn, constrained = _fit_stats(st, settings)
    subsets: List[Tuple[np.ndarray, np.ndarray]] = []
    stderr = {k: 0.0 for k in PARAM_NAMES}
    if bootstrap and settings.n_subsets > 1:
        for k in range(settings.n_subsets):
            sub = _Stats.from_samples(samples.subset(k, settings.n_subsets))
            sm, sC = _fit_stats(sub, settings)[:2]
            subsets.append((sm, sC))
        P = np.array([_params(a, b) for a, b in subsets])
        stderr = dict(zip(PARAM_NAMES, P.std(axis=0, ddof=1).tolist()))
    return TomographyResult(m, C, stderr, ll, gn, int(st.n.sum()), subsets, constrained)


def mle_fit_moments(
    angles_deg: Sequence[float], means, variances, n_per_angle: float = 1.0, settings: FitSettings = None
) -> TomographyResult:
    """Fit from exact per-angle moments (the infinite-data limit)."""
    settings = settings or FitSettings()
    u = _directions(angles_deg)
    mu, var = np.asarray(means, float), np.asarray(variances, float)
    n = np.full(len(mu), float(n_per_angle))
    st = _Stats(u, n, n * mu, n * (var + mu * mu))
    m, C, ll, gn, constrained = _fit_stats(st, settings)
    return TomographyResult(m, C, {k: 0.0 for k in PARAM_NAMES}, ll, gn, int(n.sum()), [], constrained)


def nll_and_grad(theta, samples: QuadratureSampleSet, physical: bool = False) -> Tuple[float, np.ndarray]:
    """Per-sample negative log-likelihood and gradient.

    Coordinates are ``(x, p, log L11, L21, log L22)`` (log-Cholesky) or, with
    ``physical``, ``(x, p, u, w, a)`` for ``C = (1 + a^2) K`` with
    ``K = [[e^u, e^u w], [e^u w, e^u w^2 + e^-u]]``.
    """
    return _nll_grad(np.asarray(theta, float), _Stats.from_samples(samples), physical)


# reporting


def paren_format(value: float, err: float) -> str:
    """``0.8612 +- 0.0213`` -> ``0.86(2)``; a zero error keeps 3 decimals."""
    if not err > 0:
        return f"{value:.3f}(0)"
    digits = -int(math.floor(math.log10(err)))
    e = round(err, digits)
    if e >= 10 ** (-digits + 1):  # rounding carried into the next digit
        digits -= 1
        e = round(err, digits)
    if digits <= 0:
        return f"{round(value, digits):.0f}({e:.0f})"
    return f"{value:.{digits}f}({int(round(e * 10 ** digits))})"


def _spread(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _tilt_spread(center: float, tilts: Sequence[float]) -> float:
    return _spread([center + wrap_tilt(t - center) for t in tilts])


def ellipse_with_errors(result: TomographyResult) -> dict:
    e = ellipse_summary(result.state)
    subs = [ellipse_summary(s) for s in result.subset_states()]
    out = e.to_dict()
    out["err"] = {
        "var_major": _spread([s.var_major for s in subs]),
        "var_minor": _spread([s.var_minor for s in subs]),
        "tilt_deg": _tilt_spread(e.tilt_deg, [s.tilt_deg for s in subs]),
    }
    return out


def matrix_estimate(
    x_run: TomographyResult, p_run: TomographyResult, amplitude: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Gate matrix from X- and P-coherent runs with bootstrap errors.

    Subset ``k`` of one run is paired with subset ``k`` of the other.
    """
    if amplitude == 0:
        raise ValueError("input amplitude must be nonzero")
    M = np.column_stack([x_run.mean, p_run.mean]) / amplitude
    pairs = list(zip(x_run.subset_fits, p_run.subset_fits))
    if len(pairs) > 1:
        Ms = np.array([np.column_stack([a[0], b[0]]) / amplitude for a, b in pairs])
        err = Ms.std(axis=0, ddof=1)
    else:
        err = np.zeros((2, 2))
    return M, err


def report(
    result: TomographyResult,
    ideal_target: GaussianState,
    x_run: TomographyResult = None,
    p_run: TomographyResult = None,
    amplitude: float = None,
) -> dict:
    F = fidelity(result.state, ideal_target)
    F_err = _spread([fidelity(s, ideal_target) for s in result.subset_states()])
    out = {
        "format_version": FORMAT_VERSION,
        "ellipse": ellipse_with_errors(result),
        "fidelity": F,
        "fidelity_err": F_err,
        "fidelity_text": paren_format(F, F_err),
        "fit": result.to_dict(),
    }
    if x_run is not None and p_run is not None:
        M, err = matrix_estimate(x_run, p_run, amplitude)
        out["matrix"] = M.tolist()
        out["matrix_err"] = err.tolist()
    return out


def write_contour_csv(points: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["x", "p"])
        for x, p in points:
            w.writerow([repr(float(x)), repr(float(p))])


def write_json(obj: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
