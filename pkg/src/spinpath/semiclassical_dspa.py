"""Gauge-section geometry and the stationary-phase propagator in the stereographic chart.

The semiclassical amplitude is built on the complexified stationary path:
zeta(s) runs forward from the ket, zetabar(s) runs backward from the bra, and
the two are independent unless a real classical path joins the endpoints.
For H = B.S both are Moebius images of the boundary data under the 2x2
propagator, so no ODE solve is involved.  Convention used for the amplitude
(fixed against the exact propagator, see tests):

    log K = 1/2 [log(1 + zetabar'' zeta(t)) + log(1 + zetabar(0) zeta')]
            - 1/2 [log(1 + |zeta''|^2) + log(1 + |zeta'|^2)]
            + int_0^t ds { -1/2 (zetabar zeta' - zetabar' zeta)/(1 + zetabar zeta) - i H(zetabar, zeta, s) }

where H(zetabar, zeta) = (zetabar|H|zeta)/(zetabar|zeta) is the covariant
symbol.  The result is in the chi = -phi section and is converted to the
sections of the requested labels at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .classical_flow import hamiltonian_vector_field
from .exact_oracle import FieldProtocol, propagator_series
from .su2_core import (
    CHI_MINUS_PHI, CHI_ZERO, CoherentLabel, GaugeSection, InfinitePole, stereo_coordinate,
)
from .trotter_evaluator import SphereGrid

POLE_FLOOR = 1e-12
DEFAULT_SAMPLES = 2048
KINETIC_SIGN = -1.0
REFINE_TOL = 1e-11
MAX_SAMPLES = 1 << 17
CONVENTION = ("log K = 1/2[log(1+zb''z(t)) + log(1+zb(0)z')] - 1/2[log(1+|z''|^2) + log(1+|z'|^2)]"
              " + int ds {-1/2 (zb z' - zb' z)/(1+zb z) - i H_cov}; chi = -phi section;"
              " boundary log continued along the path")

__all__ = [
    "CHI_MINUS_PHI", "CHI_ZERO", "CONVENTION", "ComplexPath", "GaugeSection", "PoleCrossing", "dspa_element",
    "dspa_residual", "potential_closure_defect", "potential_components", "solve_complex_bvp",
]


class PoleCrossing(ArithmeticError):
    """The stationary path reaches the south pole of the stereographic chart."""


def potential_components(section: GaugeSection, point) -> tuple[float, float]:
    """(theta_theta, theta_phi) of theta = 1/2 (cos(theta) dphi + dchi) in the given section."""
    theta, phi = point
    _, dchi_dtheta, dchi_dphi = section.chi_and_partials(theta, phi)
    return 0.5 * float(dchi_dtheta), 0.5 * (math.cos(theta) + float(dchi_dphi))


def potential_closure_defect(section: GaugeSection, n: int = 64, h: float = 1e-5) -> float:
    """max |d_theta(theta_phi) - d_phi(theta_theta) + sin(theta)/2| on an n x n interior grid.

    Central differences; zero means -d(theta) equals the area form.
    """
    thetas = np.linspace(0.0, math.pi, n + 2)[1:-1]
    phis = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    worst = 0.0
    for th in thetas:
        for ph in phis:
            d_theta_phi = (potential_components(section, (th + h, ph))[1]
                           - potential_components(section, (th - h, ph))[1]) / (2 * h)
            d_phi_theta = (potential_components(section, (th, ph + h))[0]
                           - potential_components(section, (th, ph - h))[0]) / (2 * h)
            worst = max(worst, abs(d_theta_phi - d_phi_theta + 0.5 * math.sin(th)))
    return worst


def dspa_residual(B, section: GaugeSection, grid: SphereGrid) -> float:
    """max over grid nodes of |theta(X_H) - H|.

    theta(X_H) = H everywhere is the condition under which the stationary
    phase evaluation is exact by invariance; it fails for transverse fields.
    """
    B = np.asarray(B, dtype=float)
    worst = 0.0
    for theta, phi in zip(grid.theta.tolist(), grid.phi.tolist()):
        th_dot, ph_dot = hamiltonian_vector_field(B, (theta, phi))
        p_theta, p_phi = potential_components(section, (theta, phi))
        n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        worst = max(worst, abs(p_theta * th_dot + p_phi * ph_dot - 0.5 * float(B @ n)))
    return worst


@dataclass(frozen=True)
class ComplexPath:
    s: np.ndarray
    zeta: np.ndarray
    zetabar: np.ndarray
    zeta_start: complex
    zetabar_end: complex
    forward_norm: np.ndarray   # U11 + U12 zeta': U(s)(1, zeta') = forward_norm (1, zeta(s))
    backward_norm: np.ndarray  # V11 + zetabar'' V21: (1, zetabar'')U(t,s) = backward_norm (1, zetabar(s))
    hamiltonians: np.ndarray
    propagators: np.ndarray


@lru_cache(maxsize=16)
def _series(field, samples, substeps):
    # the same protocol is evaluated for many boundary pairs
    s, U = propagator_series(field, samples, substeps)
    s.flags.writeable = False
    U.flags.writeable = False
    return s, U


def _riccati_rates(H, zeta, zetabar):
    h11, h12, h21, h22 = H[..., 0, 0], H[..., 0, 1], H[..., 1, 0], H[..., 1, 1]
    zeta_dot = -1j * (h21 + (h22 - h11) * zeta - h12 * zeta ** 2)
    zetabar_dot = 1j * (h12 + (h22 - h11) * zetabar - h21 * zetabar ** 2)
    return zeta_dot, zetabar_dot


def solve_complex_bvp(zeta_start: complex, zetabar_end: complex, field: FieldProtocol,
                      samples: int = DEFAULT_SAMPLES, substeps: int = 16) -> ComplexPath:
    """Stationary path with zeta(0) = zeta_start and zetabar(t) = zetabar_end."""
    zeta_start, zetabar_end = complex(zeta_start), complex(zetabar_end)
    if not (math.isfinite(abs(zeta_start)) and math.isfinite(abs(zetabar_end))):
        raise PoleCrossing("boundary data at the south pole")
    s, U = _series(field, samples, substeps)
    V = U[-1] @ np.conj(np.swapaxes(U, -1, -2))  # U(t) U(s)^-1
    fwd = U[:, 0, 0] + U[:, 0, 1] * zeta_start
    bwd = V[:, 0, 0] + zetabar_end * V[:, 1, 0]
    if np.min(np.abs(fwd)) < POLE_FLOOR or np.min(np.abs(bwd)) < POLE_FLOOR:
        raise PoleCrossing("stationary path passes through the south pole")
    zeta = (U[:, 1, 0] + U[:, 1, 1] * zeta_start) / fwd
    zetabar = (V[:, 0, 1] + zetabar_end * V[:, 1, 1]) / bwd
    zeta[0] = zeta_start
    zetabar[-1] = zetabar_end
    return ComplexPath(s, zeta, zetabar, zeta_start, zetabar_end, fwd, bwd, field.hamiltonian(s), U)


def _boundary_log(path: ComplexPath) -> complex:
    """log(1 + zetabar'' zeta(t)) + log(1 + zetabar(0) zeta').

    Both factors are values of D(s) = 1 + zetabar(s) zeta(s) at the ends of
    the path, so the first logarithm is continued along the path from the
    principal value of the second.  Taking both principal values instead can
    flip the sign of the amplitude.
    """
    D = 1.0 + path.zetabar * path.zeta
    log_start = complex(np.log(D[0]))
    winding = float(np.sum(np.angle(D[1:] / D[:-1])))
    log_end = complex(math.log(abs(D[-1])), log_start.imag + winding)
    return log_start + log_end


def semiclassical_log_amplitude(path: ComplexPath, kinetic_sign: float = KINETIC_SIGN) -> complex:
    """log of the stationary-phase amplitude between stereographic states (chi = -phi section)."""
    z, zb = path.zeta, path.zetabar
    H = path.hamiltonians
    z_dot, zb_dot = _riccati_rates(H, z, zb)
    denom = 1.0 + zb * z
    kinetic = 0.5 * kinetic_sign * (zb * z_dot - zb_dot * z) / denom
    h_cov = (H[:, 0, 0] + H[:, 0, 1] * z + zb * H[:, 1, 0] + zb * H[:, 1, 1] * z) / denom
    dynamical = simpson(kinetic - 1j * h_cov, x=path.s)
    norm = 0.5 * (math.log1p(abs(path.zetabar_end) ** 2) + math.log1p(abs(path.zeta_start) ** 2))
    return 0.5 * _boundary_log(path) - norm + dynamical


def _refined_amplitude(z_ket, zbar_bra, field, samples, kinetic_sign):
    """Double the Simpson resolution until successive amplitudes agree to REFINE_TOL."""
    path = solve_complex_bvp(z_ket, zbar_bra, field, samples)
    amp = np.exp(semiclassical_log_amplitude(path, kinetic_sign))
    while samples < MAX_SAMPLES:
        samples *= 2
        path = solve_complex_bvp(z_ket, zbar_bra, field, samples)
        finer = np.exp(semiclassical_log_amplitude(path, kinetic_sign))
        converged = abs(finer - amp) <= REFINE_TOL
        amp = finer
        if converged:
            break
    return amp


def dspa_element(bra: CoherentLabel, ket: CoherentLabel, field: FieldProtocol,
                 section: GaugeSection | None = None, samples: int = DEFAULT_SAMPLES,
                 kinetic_sign: float = KINETIC_SIGN) -> complex:
    """Stationary-phase approximation to <bra|U(t)|ket>.

    ``section`` relabels both endpoints (e.g. CHI_ZERO or CHI_MINUS_PHI);
    None keeps the chi carried by the labels.
    """
    if section is not None:
        bra, ket = section.label(bra.theta, bra.phi), section.label(ket.theta, ket.phi)
    try:
        z_ket = stereo_coordinate(ket.theta, ket.phi)
        z_bra = stereo_coordinate(bra.theta, bra.phi)
    except InfinitePole as exc:
        raise PoleCrossing(str(exc)) from exc
    amp = _refined_amplitude(z_ket, z_bra.conjugate(), field, samples, kinetic_sign)
    # |Omega(theta, phi, chi)> = exp(-i (chi + phi)/2) |zeta>
    gauge = np.exp(0.5j * ((bra.chi + bra.phi) - (ket.chi + ket.phi)))
    return complex(gauge * amp)
