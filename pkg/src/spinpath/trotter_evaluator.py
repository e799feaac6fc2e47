"""Discrete coherent-state path integral on a product quadrature of the sphere.

The identity is resolved as I = (1/2pi) \\int sin(theta) dtheta dphi |Omega><Omega|;
the quadrature uses Gauss-Legendre nodes in cos(theta) and a uniform phi
rule.  The amplitude <bra|U(t)|ket> is approximated by chaining ``n`` short-time
kernels with ``n - 1`` identity resolutions in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_oracle import FieldProtocol
from .su2_core import (
    CHI_ZERO, GENERATORS, OVERLAP_FLOOR, TWO_PI, CoherentLabel, GaugeSection, coherent_spinors,
    spinor,
)


class InvalidGrid(ValueError):
    pass


@dataclass(frozen=True)
class SphereGrid:
    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    theta_weights: np.ndarray  # Gauss-Legendre weights in cos(theta), per node

    @property
    def size(self) -> int:
        return self.theta.size

    @property
    def nodes(self) -> list[tuple[float, float]]:
        return list(zip(self.theta.tolist(), self.phi.tolist()))

    def spinors(self, section: GaugeSection = CHI_ZERO) -> np.ndarray:
        return coherent_spinors(self.theta, self.phi, section.chi(self.theta, self.phi))


def build_grid(n_theta: int, n_phi: int) -> SphereGrid:
    if int(n_theta) != n_theta or int(n_phi) != n_phi or n_theta < 1 or n_phi < 2:
        raise InvalidGrid(f"need n_theta >= 1 and n_phi >= 2, got ({n_theta}, {n_phi})")
    x, w = np.polynomial.legendre.leggauss(int(n_theta))
    theta_1d = np.arccos(x)
    phi_1d = TWO_PI * np.arange(n_phi) / n_phi
    theta, phi = np.meshgrid(theta_1d, phi_1d, indexing="ij")
    w_theta = np.repeat(w, n_phi)
    weights = w_theta * (TWO_PI / n_phi) / TWO_PI
    return SphereGrid(int(n_theta), int(n_phi), theta.ravel(), phi.ravel(), weights, w_theta)


def measure_weights_from_symplectic_form(grid: SphereGrid) -> np.ndarray:
    """Per-node weight sqrt(det omega_ij) dtheta dphi / pi, built from the 2x2 form matrix.

    The Gauss-Legendre weight lives in cos(theta), so the dtheta weight is
    w / sin(theta).
    """
    half_sin = 0.5 * np.sin(grid.theta)
    omega = np.zeros(grid.theta.shape + (2, 2))
    omega[..., 0, 1] = half_sin
    omega[..., 1, 0] = -half_sin
    sqrt_det = np.sqrt(np.linalg.det(omega))
    d_theta = grid.theta_weights / np.sin(grid.theta)
    d_phi = TWO_PI / grid.n_phi
    return sqrt_det * d_theta * d_phi / math.pi


def resolve_identity(grid: SphereGrid, section: GaugeSection = CHI_ZERO) -> np.ndarray:
    psi = grid.spinors(section)
    return np.einsum("j,ja,jb->ab", grid.weights, psi, psi.conj())


DEGENERATE_POLICIES = ("linear", "zero")
EXPONENT_CAP = 1.0


def _kernel_from_parts(ov, num, eps, degenerate="linear"):
    """ov * exp(-i eps num/ov), the exponentiated short-time kernel.

    The exponent has an essential singularity where ov -> 0.  With
    ``linear`` (default) every pair whose exponent exceeds EXPONENT_CAP in
    magnitude, zero-overlap pairs included, takes the first-order value
    ov - i eps num that the exponent expands to; this keeps
    |K| <= 1 + eps |B|.  ``zero`` keeps the exponential everywhere except
    |ov| < OVERLAP_FLOOR, where the pair contributes 0.
    """
    if degenerate not in DEGENERATE_POLICIES:
        raise ValueError(f"degenerate must be one of {DEGENERATE_POLICIES}")
    ov = np.asarray(ov)
    num = np.asarray(num)
    abs_ov = np.abs(ov)
    if degenerate == "linear":
        live = (abs_ov >= OVERLAP_FLOOR) & (eps * np.abs(num) <= EXPONENT_CAP * abs_ov)
        fallback = ov - 1j * eps * num
    else:
        live = abs_ov >= OVERLAP_FLOOR
        fallback = 0.0
    safe = np.where(live, ov, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        val = safe * np.exp(-1j * eps * np.where(live, num, 0.0) / safe)
    return np.where(live, val, fallback)


def slice_kernel(next_label: CoherentLabel, cur_label: CoherentLabel, eps: float, B_mid,
                 degenerate: str = "linear") -> complex:
    """exp{log<next|cur> + (i/2)(chi_next - chi_cur) - i eps <next|H|cur>/<next|cur>}.

    The gauge-phase term is carried by the spinors themselves, so this is
    overlap * exp(-i eps * covariant symbol), with no branch of log needed.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a, b = spinor(next_label), spinor(cur_label)
    H = np.tensordot(np.asarray(B_mid, dtype=float), GENERATORS, axes=(-1, 0))
    return complex(_kernel_from_parts(np.vdot(a, b), np.vdot(a, H @ b), eps, degenerate))


def slice_fields(field: FieldProtocol, n: int, sampling: str = "midpoint") -> np.ndarray:
    eps = field.duration / n
    if sampling == "midpoint":
        s = (np.arange(n) + 0.5) * eps
    elif sampling == "left":
        s = np.arange(n) * eps
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    return field.field(s)


class _Kernels:
    """Precomputed bilinears <a|b>, <a|S_i|b> between two sets of spinors."""

    def __init__(self, left: np.ndarray, right: np.ndarray):
        self.ov = left.conj() @ right.T
        self.gen = np.einsum("ia,kab,jb->kij", left.conj(), GENERATORS, right)

    def at(self, B, eps, degenerate="linear"):
        num = np.tensordot(np.asarray(B, dtype=float), self.gen, axes=(-1, 0))
        return _kernel_from_parts(self.ov, num, eps, degenerate)


def trotter_propagator(field: FieldProtocol, n: int, grid: SphereGrid, bra: CoherentLabel,
                       ket: CoherentLabel, section: GaugeSection = CHI_ZERO,
                       sampling: str = "midpoint", degenerate: str = "linear") -> complex:
    """Contract bra <- slices <- ket with one identity resolution between slices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(grid, SphereGrid):
        raise InvalidGrid("grid must come from build_grid")
    eps = field.duration / n
    B = slice_fields(field, n, sampling)
    psi_ket = spinor(ket)[None, :]
    psi_bra = spinor(bra)[None, :]
    if n == 1:
        return complex(_Kernels(psi_bra, psi_ket).at(B[0], eps, degenerate)[0, 0])
    nodes = grid.spinors(section)
    w = grid.weights
    first = _Kernels(nodes, psi_ket)
    inner = _Kernels(nodes, nodes)
    last = _Kernels(psi_bra, nodes)
    v = first.at(B[0], eps, degenerate)[:, 0]
    fixed = inner.at(B[0], eps, degenerate) if np.all(B == B[0]) else None
    for k in range(1, n - 1):
        K = fixed if fixed is not None else inner.at(B[k], eps, degenerate)
        v = np.sum(K * (w * v)[None, :], axis=1)
    return complex(np.sum(last.at(B[n - 1], eps, degenerate)[0] * (w * v)))
