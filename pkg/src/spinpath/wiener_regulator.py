"""Wiener-measure regularized path integral, sampled with spherical Brownian bridges.

Paths are chains of unit Bloch vectors pinned at both ends.  Each
intermediate point is drawn from a tangent-plane Gaussian centred on the
geodesic interpolant towards the far endpoint and pushed to the sphere with
the exponential map; the resulting density is evaluated exactly (all
preimages of the exponential map are summed), so

    estimate = mean( prod(kernels) * regulator_weight / bridge_density )

is an unbiased estimator of the regulated discrete integral.  The overall
normalization is fixed by dividing by the same estimator at B = 0, bra = ket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_oracle import FieldProtocol
from .su2_core import CoherentLabel, angles_from_bloch, coherent_spinors, geodesic_distance, spinor
from .trotter_evaluator import SphereGrid, _kernel_from_parts, _Kernels, slice_fields

CHUNK = 4096
WRAP_SIGMAS = 12.0


@dataclass(frozen=True)
class SpherePath:
    labels: tuple[CoherentLabel, ...]
    eps: float

    @classmethod
    def from_vectors(cls, vectors, eps: float) -> "SpherePath":
        theta, phi = angles_from_bloch(vectors)
        return cls(tuple(CoherentLabel(t, p) for t, p in zip(theta.tolist(), phi.tolist())), float(eps))

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([lab.theta for lab in self.labels]), np.array([lab.phi for lab in self.labels]))

    def vectors(self) -> np.ndarray:
        return np.stack([lab.bloch_vector() for lab in self.labels])

    def step_lengths(self) -> np.ndarray:
        v = self.vectors()
        return geodesic_distance(v[1:], v[:-1])


@dataclass(frozen=True)
class RegulatedEstimate:
    mean: complex
    std_error: float
    n_samples: int
    nu: float
    seed: int
    high_variance: bool = False


def _wrap(dphi):
    """Map to (-pi, pi]."""
    return math.pi - np.mod(math.pi - dphi, 2.0 * math.pi)


def kinetic_sum(theta, phi, eps) -> np.ndarray:
    """sum_k [ (dtheta^2)/4 + sin^2(theta_mid) (dphi^2)/4 ] / eps along the last axis."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dtheta = np.diff(theta, axis=-1)
    dphi = _wrap(np.diff(phi, axis=-1))
    mid = 0.5 * (theta[..., 1:] + theta[..., :-1])
    return np.sum(0.25 * dtheta ** 2 + 0.25 * np.sin(mid) ** 2 * dphi ** 2, axis=-1) / eps


def regulator_weight(path: SpherePath, nu: float) -> float:
    if nu <= 0:
        raise ValueError("nu must be positive")
    if math.isinf(nu):
        return 1.0
    theta, phi = path.angles()
    return float(np.exp(-kinetic_sum(theta, phi, path.eps) / nu))


def step_variance(nu: float, eps: float) -> float:
    """Per-component tangent variance matching exp(-d^2 / (4 nu eps)) of the regulator."""
    return 2.0 * nu * eps


def _perpendicular(c):
    """A unit vector orthogonal to each row of c."""
    axis = np.where(np.abs(c[..., :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    e = np.cross(c, axis)
    return e / np.linalg.norm(e, axis=-1, keepdims=True)


def _slerp_toward(a, b, frac):
    """Point a fraction of the way along the geodesic from a to b (rows)."""
    ang = geodesic_distance(a, b)
    tangent = b - np.sum(a * b, axis=-1, keepdims=True) * a
    tn = np.linalg.norm(tangent, axis=-1, keepdims=True)
    degenerate = tn[..., 0] < 1e-12
    if np.any(degenerate):
        tangent = np.where(degenerate[..., None], _perpendicular(a), tangent / np.where(tn > 0, tn, 1.0))
    else:
        tangent = tangent / tn
    step = (frac * ang)[..., None]
    return np.cos(step) * a + np.sin(step) * tangent


def _exp_map(c, v_coords):
    """Exponential map at c of the tangent vector with coordinates v_coords in a fixed basis."""
    e1 = _perpendicular(c)
    e2 = np.cross(c, e1)
    v = v_coords[..., :1] * e1 + v_coords[..., 1:] * e2
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    return np.cos(r) * c + np.sin(r) * v / safe


def _log_exp_map_density(d, var):
    """log density (w.r.t. area) at geodesic distance d of exp-map pushed 2D Gaussian."""
    d = np.asarray(d, dtype=float)
    s = math.sqrt(var)
    m_max = int(math.ceil((WRAP_SIGMAS * s + math.pi) / (2.0 * math.pi)))
    sin_d = np.maximum(np.sin(d), 1e-300)
    total = np.zeros_like(d)
    for m in range(m_max + 1):
        for r in ((d + 2.0 * math.pi * m),) if m == 0 else (d + 2.0 * math.pi * m, 2.0 * math.pi * m - d):
            # r / sin(d) -> 1 as d -> 0 on the principal branch
            jac = np.where(d < 1e-8, 1.0, r / sin_d) if m == 0 else r / sin_d
            total = total + np.exp(-r ** 2 / (2.0 * var)) * jac
    return np.log(total) - math.log(2.0 * math.pi * var)


def _sample_bridges(start, end, m, var, rng, size):
    """size bridges with m intermediate points; returns (vectors (size, m+2, 3), log_density (size,)).

    log_density is with respect to the product of dmu = dA / (2 pi) over the
    intermediate points.
    """
    start = np.broadcast_to(np.asarray(start, dtype=float), (size, 3))
    end = np.broadcast_to(np.asarray(end, dtype=float), (size, 3))
    out = np.empty((size, m + 2, 3))
    out[:, 0] = start
    out[:, -1] = end
    log_p = np.zeros(size)
    x = start
    for k in range(1, m + 1):
        remaining = m + 2 - k
        centre = _slerp_toward(x, end, 1.0 / remaining)
        var_k = var * (remaining - 1) / remaining
        z = rng.standard_normal((size, 2)) * math.sqrt(var_k)
        x = _exp_map(centre, z)
        x = x / np.linalg.norm(x, axis=-1, keepdims=True)
        log_p += _log_exp_map_density(geodesic_distance(centre, x), var_k) + math.log(2.0 * math.pi)
        out[:, k] = x
    return out, log_p


def sample_bridge(start: CoherentLabel, end: CoherentLabel, n: int, nu: float, eps: float,
                  seed: int) -> SpherePath:
    """One pinned path with n intermediate points (n + 1 steps of length eps)."""
    if n < 1 or nu <= 0 or eps <= 0:
        raise ValueError("need n >= 1, nu > 0, eps > 0")
    rng = np.random.default_rng(seed)
    vecs, _ = _sample_bridges(start.bloch_vector(), end.bloch_vector(), n, step_variance(nu, eps), rng, 1)
    path = SpherePath.from_vectors(vecs[0], eps)
    # pin the endpoints to the caller's labels exactly (no round trip through Bloch vectors)
    return SpherePath((start,) + path.labels[1:-1] + (end,), eps)


def _bilinears(a, b, B):
    """<a|b> and <a|B.S|b> for spinor arrays a, b (..., 2) and fields B (..., 3)."""
    ac = a.conj()
    p11, p12 = ac[..., 0] * b[..., 0], ac[..., 0] * b[..., 1]
    p21, p22 = ac[..., 1] * b[..., 0], ac[..., 1] * b[..., 1]
    num = 0.5 * (B[..., 0] * (p12 + p21) + B[..., 1] * (-1j * p12 + 1j * p21) + B[..., 2] * (p11 - p22))
    return p11 + p22, num


def _path_amplitudes(vecs, bra, ket, B_slices, eps):
    """prod_k kernel(x_{k+1}, x_k) along each path; endpoint spinors come from the labels."""
    theta, phi = angles_from_bloch(vecs)
    theta[:, 0], phi[:, 0] = ket.theta, ket.phi
    theta[:, -1], phi[:, -1] = bra.theta, bra.phi
    psi = coherent_spinors(theta, phi)
    psi[:, 0] = coherent_spinors(ket.theta, ket.phi, ket.chi)
    psi[:, -1] = coherent_spinors(bra.theta, bra.phi, bra.chi)
    ov, num = _bilinears(psi[:, 1:], psi[:, :-1], B_slices)
    return np.prod(_kernel_from_parts(ov, num, eps), axis=-1), theta, phi


def _weights(field, n, nu, bra, ket, rng, size, with_calibration):
    """Importance weights f/p for the field and (same paths) for B = 0."""
    eps = field.duration / n
    var = step_variance(nu, eps)
    vecs, log_p = _sample_bridges(ket.bloch_vector(), bra.bloch_vector(), n - 1, var, rng, size)
    B = slice_fields(field, n)
    amp, theta, phi = _path_amplitudes(vecs, bra, ket, B, eps)
    log_w = -kinetic_sum(theta, phi, eps) / nu if math.isfinite(nu) else 0.0
    # constant shift: the bridge density never exceeds ~prod(1/var_k); it cancels in the calibration ratio
    shift = sum(math.log(var * (n - k) / (n - k + 1)) for k in range(1, n))
    scale = np.exp(log_w - log_p + shift)
    w_field = amp * scale
    if not with_calibration:
        return w_field, None
    amp0, _, _ = _path_amplitudes(vecs, bra, ket, np.zeros_like(B), eps)
    return w_field, amp0 * scale


def regulated_propagator(field: FieldProtocol, n: int, nu: float, n_samples: int, bra: CoherentLabel,
                         ket: CoherentLabel, seed: int = 0, chunk: int = CHUNK) -> RegulatedEstimate:
    """Calibrated Monte Carlo estimate of <bra|U(t)|ket> from the regulated integral.

    Random numbers come from one child stream per chunk of the master seed, so
    the result does not depend on how chunks are scheduled.
    """
    if n < 1 or n_samples < 1 or nu <= 0:
        raise ValueError("n, n_samples and nu must be positive")
    same_ends = bra == ket
    n_chunks = -(-n_samples // chunk)
    streams = np.random.SeedSequence(seed).spawn(2 * n_chunks)
    xs, ys = [], []
    for c in range(n_chunks):
        size = min(chunk, n_samples - c * chunk)
        x, y = _weights(field, n, nu, bra, ket, np.random.default_rng(streams[c]), size, same_ends)
        if not same_ends:
            zero = FieldProtocol.constant([0.0, 0.0, 0.0], field.duration)
            y, _ = _weights(zero, n, nu, ket, ket, np.random.default_rng(streams[n_chunks + c]), size, False)
        xs.append(x)
        ys.append(y)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    x_bar, y_bar = x.mean(), y.mean()
    ratio = x_bar / y_bar
    if same_ends:
        resid = (x - ratio * y) / y_bar
        var = np.mean(np.abs(resid - resid.mean()) ** 2)
    else:
        var = (np.var(x) + abs(ratio) ** 2 * np.var(y)) / abs(y_bar) ** 2
    std_error = float(math.sqrt(var / n_samples))
    return RegulatedEstimate(complex(ratio), std_error, int(n_samples), float(nu), int(seed),
                             high_variance=bool(std_error > 0.1 * abs(ratio)))


def _raw_quadrature(field, n, nu, grid, bra, ket):
    eps = field.duration / n
    B = slice_fields(field, n)
    theta = np.concatenate([[ket.theta], grid.theta, [bra.theta]])
    phi = np.concatenate([[ket.phi], grid.phi, [bra.phi]])
    # damping[i, j] for the step j -> i
    pair_theta = np.stack(np.broadcast_arrays(theta[None, :], theta[:, None]), axis=-1)
    pair_phi = np.stack(np.broadcast_arrays(phi[None, :], phi[:, None]), axis=-1)
    if math.isfinite(nu):
        damping = np.exp(-kinetic_sum(pair_theta, pair_phi, eps) / nu)
    else:
        damping = np.ones(pair_theta.shape[:2])
    g = grid.size
    d_first, d_inner, d_last = damping[1:g + 1, 0], damping[1:g + 1, 1:g + 1], damping[g + 1, 1:g + 1]
    nodes = grid.spinors()
    first = _Kernels(nodes, spinor(ket)[None, :])
    inner = _Kernels(nodes, nodes)
    last = _Kernels(spinor(bra)[None, :], nodes)
    w = grid.weights
    v = first.at(B[0], eps)[:, 0] * d_first
    for k in range(1, n - 1):
        v = np.sum(inner.at(B[k], eps) * d_inner * (w * v)[None, :], axis=1)
    return complex(np.sum(last.at(B[n - 1], eps)[0] * d_last * (w * v)))


def regulated_quadrature(field: FieldProtocol, n: int, nu: float, grid: SphereGrid, bra: CoherentLabel,
                         ket: CoherentLabel) -> complex:
    """Deterministic counterpart of regulated_propagator.

    Same calibrated regulated integral, contracted on a product grid instead
    of sampled; used to check the Monte Carlo estimator independently.
    """
    if n < 2:
        raise ValueError("quadrature needs at least one intermediate point (n >= 2)")
    zero = FieldProtocol.constant([0.0, 0.0, 0.0], field.duration)
    return _raw_quadrature(field, n, nu, grid, bra, ket) / _raw_quadrature(zero, n, nu, grid, ket, ket)
