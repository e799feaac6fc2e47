"""Classical spin dynamics on the sphere.

With omega = (1/2) sin(theta) dtheta ^ dphi and H = <Omega|B.S|Omega> = B.n/2,
the Hamiltonian vector field solving omega(X_H, .) = dH is

    theta' =  (2/sin theta) dH/dphi,     phi' = -(2/sin theta) dH/dtheta,

which is the chart form of n' = B x n.  Integration is done in the Cartesian
form so the poles need no special treatment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_oracle import FieldProtocol
from .su2_core import CoherentLabel, angles_from_bloch, geodesic_distance

POLE_SIN = 1e-9


class PoleChart(ValueError):
    """The (theta, phi) chart is degenerate at the poles."""


@dataclass(frozen=True)
class SymplecticStructure:
    """Area form and metric of the spin-1/2 phase space in the (theta, phi) chart."""

    def omega_coeff(self, theta):
        return 0.5 * np.sin(theta)

    def omega_matrix(self, theta) -> np.ndarray:
        c = self.omega_coeff(theta)
        return np.array([[0.0, c], [-c, 0.0]])

    def metric(self, theta) -> np.ndarray:
        return np.diag([0.25, 0.25 * math.sin(theta) ** 2])


@dataclass(frozen=True)
class ClassicalTrajectory:
    s: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    n: np.ndarray
    energy: np.ndarray

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.s.tolist(), self.theta.tolist(), self.phi.tolist()))

    def relative_energy_drift(self) -> float:
        """max |H(s) - H(0)| relative to max |H| along the run."""
        scale = np.max(np.abs(self.energy)) if np.any(self.energy) else 1.0
        return float(np.max(np.abs(self.energy - self.energy[0])) / scale)

    def endpoint(self) -> CoherentLabel:
        return CoherentLabel.from_bloch(self.n[-1])


@dataclass(frozen=True)
class ShootResult:
    status: str
    residual: float
    initial_guess_used: tuple[float, float]
    endpoint: CoherentLabel | None = None


def classical_symbol(B, label: CoherentLabel) -> float:
    """<Omega|B.S|Omega> = (1/2) B.n."""
    return 0.5 * float(np.dot(np.asarray(B, dtype=float), label.bloch_vector()))


def symbol_partials(B, theta, phi) -> tuple[float, float]:
    """(dH/dtheta, dH/dphi) of the classical symbol, analytic."""
    bx, by, bz = (float(x) for x in B)
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    dtheta = 0.5 * (bx * ct * cp + by * ct * sp - bz * st)
    dphi = 0.5 * (-bx * st * sp + by * st * cp)
    return dtheta, dphi


def hamiltonian_vector_field(B, point) -> tuple[float, float]:
    theta, phi = point
    st = math.sin(theta)
    if st < POLE_SIN:
        raise PoleChart(f"sin(theta) = {st:.2e} at theta = {theta}")
    dtheta, dphi = symbol_partials(B, theta, phi)
    return 2.0 * dphi / st, -2.0 * dtheta / st


def chart_velocity_from_bloch(n, n_dot) -> tuple[float, float]:
    """Project a Cartesian velocity onto (theta', phi') at the point n."""
    theta, phi = angles_from_bloch(n)
    st = math.sin(theta)
    e_theta = np.array([math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), -st])
    e_phi = np.array([-math.sin(phi), math.cos(phi), 0.0])
    return float(np.dot(n_dot, e_theta)), float(np.dot(n_dot, e_phi) / st)


def _rk4_bloch(n0, field: FieldProtocol, t_end, steps: int, record: bool = False):
    """Classical RK4 for n' = B(s) x n, renormalized each step; batched over leading axis of n0."""
    n = np.array(n0, dtype=float)
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), n.shape[:-1])
    h = t_end / steps
    hh = h[..., None]
    history = [n.copy()] if record else None
    for k in range(steps):
        s = k * h
        b0 = field.field(s)
        bm = field.field(s + 0.5 * h)
        b1 = field.field(s + h)
        k1 = np.cross(b0, n)
        k2 = np.cross(bm, n + 0.5 * hh * k1)
        k3 = np.cross(bm, n + 0.5 * hh * k2)
        k4 = np.cross(b1, n + hh * k3)
        n = n + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        if record:
            history.append(n.copy())
    return np.stack(history) if record else n


def integrate_flow(start: CoherentLabel, field: FieldProtocol, steps: int = 10_000) -> ClassicalTrajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ns = _rk4_bloch(start.bloch_vector(), field, field.duration, steps, record=True)
    s = np.linspace(0.0, field.duration, steps + 1)
    theta, phi = angles_from_bloch(ns)
    energy = 0.5 * np.sum(field.field(s) * ns, axis=-1)
    return ClassicalTrajectory(s, theta, phi, ns, energy)


def flow_endpoints(starts, field: FieldProtocol, durations, steps: int = 2000) -> np.ndarray:
    """Batched endpoints n(t_i) for Bloch vectors starts[i] flowed for durations[i]."""
    return _rk4_bloch(np.asarray(starts, dtype=float), field, durations, steps)


def shoot_boundary(start: CoherentLabel, end: CoherentLabel, field: FieldProtocol, tol: float,
                   steps: int = 10_000) -> ShootResult:
    """Both endpoints fixed: the flow from ``start`` either lands on ``end`` or it does not."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n_end = _rk4_bloch(start.bloch_vector(), field, field.duration, steps)
    residual = float(geodesic_distance(n_end, end.bloch_vector()))
    status = "solution" if residual <= tol else "infeasible"
    return ShootResult(status, residual, (start.theta, start.phi), CoherentLabel.from_bloch(n_end))


def shoot_many(starts, ends, field: FieldProtocol, durations, tol: float,
               steps: int = 10_000) -> list[ShootResult]:
    """shoot_boundary for many (start, end, duration) triples in one batched integration."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n_start = np.stack([lab.bloch_vector() for lab in starts])
    n_goal = np.stack([lab.bloch_vector() for lab in ends])
    n_end = _rk4_bloch(n_start, field, durations, steps)
    residual = geodesic_distance(n_end, n_goal)
    return [ShootResult("solution" if r <= tol else "infeasible", float(r), (a.theta, a.phi),
                        CoherentLabel.from_bloch(e))
            for a, r, e in zip(starts, residual.tolist(), n_end)]


def trajectory_rows(traj: ClassicalTrajectory):
    for k in range(traj.s.size):
        yield (traj.s[k], traj.theta[k], traj.phi[k], *traj.n[k], traj.energy[k])


def to_stereo(theta, phi) -> np.ndarray:
    return np.tan(0.5 * np.asarray(theta)) * np.exp(1j * np.asarray(phi))

