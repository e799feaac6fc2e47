"""Spin-1/2 algebra, coherent states and gauge sections.

Conventions: hbar = 1, S_i = sigma_i / 2, and a coherent state with Euler
labels (theta, phi, chi) is

    |Omega> = exp(-i chi/2) exp(-i phi S_z) exp(-i theta S_y) |up>
            = exp(-i chi/2) (cos(theta/2) e^{-i phi/2}, sin(theta/2) e^{+i phi/2}).

The stereographic state |zeta> = (1, zeta)/sqrt(1 + |zeta|^2) with
zeta = tan(theta/2) e^{i phi} is the same ray in the section chi = -phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi
ANGLE_TOL = 1e-12
OVERLAP_FLOOR = 1e-14

SX = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
SY = np.array([[0, -0.5j], [0.5j, 0]], dtype=complex)
SZ = np.array([[0.5, 0], [0, -0.5]], dtype=complex)
S_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
S_PLUS = S_MINUS.T.copy()
IDENTITY = np.eye(2, dtype=complex)
GENERATORS = np.stack([SX, SY, SZ])


class InvalidLabel(ValueError):
    pass


class InfinitePole(ValueError):
    """The stereographic chart has no finite coordinate at theta = pi."""


class DegenerateOverlap(ZeroDivisionError):
    pass


def field_operator(B) -> np.ndarray:
    """B . S as a 2x2 matrix."""
    B = np.asarray(B, dtype=float)
    return np.tensordot(B, GENERATORS, axes=(-1, 0))


@dataclass(frozen=True)
class SpinorState:
    c_up: complex
    c_down: complex

    def __post_init__(self):
        norm = math.hypot(abs(self.c_up), abs(self.c_down))
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError("spinor must have finite nonzero norm")
        object.__setattr__(self, "c_up", complex(self.c_up) / norm)
        object.__setattr__(self, "c_down", complex(self.c_down) / norm)

    @classmethod
    def from_array(cls, v) -> "SpinorState":
        return cls(complex(v[0]), complex(v[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c_up, self.c_down], dtype=complex)

    def bloch_vector(self) -> np.ndarray:
        v = self.as_array()
        return np.real(np.einsum("i,aij,j->a", v.conj(), GENERATORS, v)) * 2.0


@dataclass(frozen=True)
class CoherentLabel:
    theta: float
    phi: float = 0.0
    chi: float = 0.0

    def __post_init__(self):
        theta, phi, chi = float(self.theta), float(self.phi), float(self.chi)
        if not (math.isfinite(theta) and math.isfinite(phi) and math.isfinite(chi)):
            raise InvalidLabel(f"non-finite label ({theta}, {phi}, {chi})")
        if theta < -ANGLE_TOL or theta > math.pi + ANGLE_TOL:
            raise InvalidLabel(f"theta={theta} outside [0, pi]")
        theta = min(max(theta, 0.0), math.pi)
        phi = phi % TWO_PI
        if phi == TWO_PI:  # -tiny % 2pi rounds up
            phi = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "chi", chi)

    @classmethod
    def from_bloch(cls, n, chi: float = 0.0) -> "CoherentLabel":
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        theta = math.acos(min(1.0, max(-1.0, n[2])))
        phi = math.atan2(n[1], n[0])
        return cls(theta, phi, chi)

    def bloch_vector(self) -> np.ndarray:
        return bloch_vectors(self.theta, self.phi)

    def with_chi(self, chi: float) -> "CoherentLabel":
        return CoherentLabel(self.theta, self.phi, chi)


def coherent_spinors(theta, phi, chi=0.0) -> np.ndarray:
    """Vectorized coherent-state amplitudes, shape (..., 2)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    gauge = np.exp(-0.5j * np.asarray(chi, dtype=float))
    up = gauge * np.cos(0.5 * theta) * np.exp(-0.5j * phi)
    down = gauge * np.sin(0.5 * theta) * np.exp(0.5j * phi)
    up, down = np.broadcast_arrays(up, down)
    return np.stack([up, down], axis=-1)


def bloch_vectors(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def angles_from_bloch(n) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) with phi in [0, 2pi) for unit vectors of shape (..., 3)."""
    n = np.asarray(n, dtype=float)
    theta = np.arccos(np.clip(n[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(n[..., 1], n[..., 0]), TWO_PI)
    return theta, phi


def coherent_state(label: CoherentLabel) -> SpinorState:
    v = coherent_spinors(label.theta, label.phi, label.chi)
    return SpinorState(complex(v[0]), complex(v[1]))


def spinor(label: CoherentLabel) -> np.ndarray:
    return coherent_spinors(label.theta, label.phi, label.chi)


def overlap(a: CoherentLabel, b: CoherentLabel) -> complex:
    """<Psi_a|Psi_b>, gauge phases included."""
    return complex(np.vdot(spinor(a), spinor(b)))


def expectation(a: CoherentLabel, b: CoherentLabel, B) -> complex:
    """Covariant symbol <Psi_a|B.S|Psi_b> / <Psi_a|Psi_b>."""
    va, vb = spinor(a), spinor(b)
    ov = np.vdot(va, vb)
    if abs(ov) < OVERLAP_FLOOR:
        raise DegenerateOverlap(f"|<a|b>| = {abs(ov):.3e} below {OVERLAP_FLOOR}")
    return complex(np.vdot(va, field_operator(B) @ vb) / ov)


def stereo_coordinate(theta: float, phi: float) -> complex:
    if math.pi - theta < ANGLE_TOL:
        raise InfinitePole("theta = pi maps to zeta = infinity")
    return math.tan(0.5 * theta) * complex(math.cos(phi), math.sin(phi))


def stereo_to_angles(zeta: complex) -> tuple[float, float]:
    theta = 2.0 * math.atan(abs(zeta))
    phi = math.atan2(zeta.imag, zeta.real) % TWO_PI
    return theta, phi


def stereo_state(zeta: complex) -> SpinorState:
    """(1, zeta)/sqrt(1+|zeta|^2), i.e. exp(zeta S_-)|up> normalized."""
    zeta = complex(zeta)
    if not math.isfinite(abs(zeta)):
        raise InfinitePole("zeta must be finite")
    return SpinorState(1.0, zeta)


def stereo_spinors(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    norm = np.sqrt(1.0 + np.abs(zeta) ** 2)
    return np.stack([1.0 / norm + 0j * zeta, zeta / norm], axis=-1)


def geodesic_distance(n1, n2) -> np.ndarray:
    """Great-circle angle between unit vectors (stable for small and large angles)."""
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    cross = np.linalg.norm(np.cross(n1, n2), axis=-1)
    dot = np.sum(n1 * n2, axis=-1)
    return np.arctan2(cross, dot)


@dataclass(frozen=True)
class GaugeSection:
    """A choice of fibre phase chi(theta, phi) for every point of the sphere.

    ``chi_fn`` returns (chi, dchi/dtheta, dchi/dphi); only needed for ``custom``.
    """

    kind: str = "chi_zero"
    chi_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("chi_zero", "chi_minus_phi", "custom"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.kind == "custom" and self.chi_fn is None:
            raise ValueError("custom section needs chi_fn")

    def chi_and_partials(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        zero = np.zeros(np.broadcast(theta, phi).shape)
        if self.kind == "chi_zero":
            return zero, zero, zero
        if self.kind == "chi_minus_phi":
            return -phi + zero, zero, zero - 1.0
        chi, d_theta, d_phi = self.chi_fn(theta, phi)
        return (np.asarray(chi, dtype=float) + zero, np.asarray(d_theta, dtype=float) + zero,
                np.asarray(d_phi, dtype=float) + zero)

    def chi(self, theta, phi):
        return self.chi_and_partials(theta, phi)[0]

    def label(self, theta: float, phi: float) -> CoherentLabel:
        base = CoherentLabel(theta, phi)
        return base.with_chi(float(self.chi(base.theta, base.phi)))


CHI_ZERO = GaugeSection("chi_zero")
CHI_MINUS_PHI = GaugeSection("chi_minus_phi")
