"""Dense Fock-space oracle for the closed-form Gaussian fidelity.

States are built as density matrices in a truncated number basis from the
ladder operators alone. Their moments are checked against the intended
covariance before the Uhlmann fidelity is taken with matrix square roots.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm, sqrtm

from loopcv.gaussian import GaussianState, fidelity, rotation

N = 90
a = np.diag(np.sqrt(np.arange(1, N)), 1)
ad = a.T
X = a + ad
P = -1j * (a - ad)
VAC = np.zeros(N)
VAC[0] = 1.0

# frozen oracle values (computed by this module at N = 90)
F_SQUEEZED_VS_THERMAL = 0.91262


def _squeeze_op(r):
    # the sign is fixed by the moment check below: positive r squeezes p
    return expm(0.5 * r * (ad @ ad - a @ a))


def _rot_op(theta_deg):
    return expm(1j * math.radians(theta_deg) * (ad @ a))


def _disp_op(x, p):
    alpha = (x + 1j * p) / 2
    return expm(alpha * ad - np.conj(alpha) * a)


def _thermal(nu):
    nbar = (nu - 1) / 2
    k = np.arange(N)
    w = nbar**k / (1 + nbar) ** (k + 1) if nbar > 0 else (k == 0).astype(float)
    return np.diag(w / w.sum()).astype(complex)


def fock_state(nu, r, theta_deg=0.0, x=0.0, p=0.0):
    u = _disp_op(x, p) @ _rot_op(theta_deg) @ _squeeze_op(r)
    return u @ _thermal(nu) @ u.conj().T


def moments(rho):
    ex = np.trace(rho @ X).real
    ep = np.trace(rho @ P).real
    dx, dp = X - ex * np.eye(N), P - ep * np.eye(N)
    vxx = np.trace(rho @ dx @ dx).real
    vpp = np.trace(rho @ dp @ dp).real
    vxp = 0.5 * np.trace(rho @ (dx @ dp + dp @ dx)).real
    return np.array([ex, ep]), np.array([[vxx, vxp], [vxp, vpp]])


def uhlmann(r1, r2):
    s = sqrtm(r1)
    return float(np.trace(sqrtm(s @ r2 @ s)).real ** 2)


def gaussian(nu, r, theta_deg=0.0, x=0.0, p=0.0):
    S = rotation(theta_deg) @ np.diag([math.exp(r), math.exp(-r)])
    return GaussianState([x, p], nu * S @ S.T)


CASES = [
    ((1.0, 0.44), (math.sqrt(2.10 * 0.65), 0.25 * math.log(2.10 / 0.65))),
    ((1.0, 0.0), (1.0, 0.44)),
    ((1.0, 0.0, 0.0, 1.0, -0.5), (1.0, 0.0)),
    ((1.5, 0.3, 20.0, 0.4, 0.2), (1.2, -0.2, -35.0, -0.3, 0.1)),
    ((2.0, 0.0), (1.0, 0.35, 60.0)),
]


@pytest.mark.parametrize("pa,pb", CASES)
def test_closed_form_matches_fock_oracle(pa, pb):
    ra, rb = fock_state(*pa), fock_state(*pb)
    ga, gb = gaussian(*pa), gaussian(*pb)
    for rho, g in ((ra, ga), (rb, gb)):
        m, v = moments(rho)
        assert np.allclose(m, g.mean, atol=1e-8)
        assert np.allclose(v, g.cov, atol=1e-7)
    assert fidelity(ga, gb) == pytest.approx(uhlmann(ra, rb), abs=1e-6)


def test_squeezed_vs_squeezed_thermal_value():
    target = GaussianState.squeezed(0.44)
    other = GaussianState([0, 0], np.diag([2.10, 0.65]))
    assert fidelity(target, other) == pytest.approx(F_SQUEEZED_VS_THERMAL, abs=5e-5)
