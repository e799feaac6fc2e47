"""Time-ordered 2x2 propagators for H(s) = B(s).S.

Every approximate amplitude in the package is checked against
``matrix_element(bra, propagate(field, steps), ket)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .su2_core import GENERATORS, IDENTITY, CoherentLabel, field_operator, spinor

DEFAULT_STEPS = 4096
KINDS = ("constant", "rotating", "linear_sweep", "tabulated")

PROTOCOL_KEYS = {
    "constant": {"kind", "B", "duration"},
    "rotating": {"kind", "b_perp", "omega", "b_z", "duration"},
    "linear_sweep": {"kind", "B_start", "B_end", "duration"},
    "tabulated": {"kind", "times", "B"},
}


class ProtocolError(ValueError):
    pass


def _vec3(v, name) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ProtocolError(f"{name} must be a finite 3-vector, got {v!r}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class FieldProtocol:
    """Magnetic field B(s) on [0, duration].

    Build with the classmethods; ``params`` holds the kind-specific values as
    plain Python numbers/tuples so instances hash and echo cleanly.
    """

    kind: str
    duration: float
    params: tuple

    @classmethod
    def constant(cls, B, duration: float) -> "FieldProtocol":
        return cls._checked("constant", duration, (_vec3(B, "B"),))

    @classmethod
    def rotating(cls, b_perp: float, omega: float, b_z: float, duration: float) -> "FieldProtocol":
        """B(s) = (b_perp cos(omega s), b_perp sin(omega s), b_z)."""
        return cls._checked("rotating", duration, (float(b_perp), float(omega), float(b_z)))

    @classmethod
    def linear_sweep(cls, B_start, B_end, duration: float) -> "FieldProtocol":
        return cls._checked("linear_sweep", duration, (_vec3(B_start, "B_start"), _vec3(B_end, "B_end")))

    @classmethod
    def tabulated(cls, times, B) -> "FieldProtocol":
        times = np.asarray(times, dtype=float)
        values = np.asarray(B, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ProtocolError("tabulated protocol needs at least two sample times")
        if values.shape != (times.size, 3):
            raise ProtocolError(f"B samples must have shape ({times.size}, 3)")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ProtocolError("sample times must start at 0 and increase strictly")
        if not np.all(np.isfinite(values)):
            raise ProtocolError("non-finite field sample")
        return cls._checked("tabulated", float(times[-1]),
                            (tuple(times.tolist()), tuple(tuple(r) for r in values.tolist())))

    @classmethod
    def _checked(cls, kind, duration, params):
        duration = float(duration)
        if not math.isfinite(duration) or duration < 0:
            raise ProtocolError(f"duration must be finite and >= 0, got {duration}")
        for p in params:
            if isinstance(p, float) and not math.isfinite(p):
                raise ProtocolError("non-finite protocol parameter")
        return cls(kind, duration, params)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FieldProtocol":
        kind = d.get("kind")
        if kind not in KINDS:
            raise ProtocolError(f"unknown field kind {kind!r}; expected one of {KINDS}")
        unknown = set(d) - PROTOCOL_KEYS[kind]
        if unknown:
            raise ProtocolError(f"unknown key(s) for {kind} field: {sorted(unknown)}")
        missing = PROTOCOL_KEYS[kind] - set(d)
        if missing:
            raise ProtocolError(f"missing key(s) for {kind} field: {sorted(missing)}")
        if kind == "constant":
            return cls.constant(d["B"], d["duration"])
        if kind == "rotating":
            return cls.rotating(d["b_perp"], d["omega"], d["b_z"], d["duration"])
        if kind == "linear_sweep":
            return cls.linear_sweep(d["B_start"], d["B_end"], d["duration"])
        return cls.tabulated(d["times"], d["B"])

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "B": list(self.params[0]), "duration": self.duration}
        if self.kind == "rotating":
            b_perp, omega, b_z = self.params
            return {"kind": "rotating", "b_perp": b_perp, "omega": omega, "b_z": b_z,
                    "duration": self.duration}
        if self.kind == "linear_sweep":
            return {"kind": "linear_sweep", "B_start": list(self.params[0]),
                    "B_end": list(self.params[1]), "duration": self.duration}
        return {"kind": "tabulated", "times": list(self.params[0]),
                "B": [list(r) for r in self.params[1]]}

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def field(self, s) -> np.ndarray:
        """B(s), vectorized: shape (..., 3) for s of shape (...)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(np.array(self.params[0]), s.shape + (3,)).copy()
        if self.kind == "rotating":
            b_perp, omega, b_z = self.params
            return np.stack([b_perp * np.cos(omega * s), b_perp * np.sin(omega * s),
                             np.full_like(s, b_z)], axis=-1)
        if self.kind == "linear_sweep":
            b0, b1 = np.array(self.params[0]), np.array(self.params[1])
            frac = s / self.duration if self.duration > 0 else np.zeros_like(s)
            return b0 + frac[..., None] * (b1 - b0)
        times = np.array(self.params[0])
        values = np.array(self.params[1])
        return np.stack([np.interp(s, times, values[:, a]) for a in range(3)], axis=-1)

    def hamiltonian(self, s) -> np.ndarray:
        return field_operator(self.field(s))


def su2_exponential(B, dt) -> np.ndarray:
    """exp(-i dt B.S) = cos(a/2) I - 2i sin(a/2) n.S with a = dt|B|, vectorized over B."""
    B = np.asarray(B, dtype=float)
    dt = np.asarray(dt, dtype=float)
    mag = np.linalg.norm(B, axis=-1)
    angle = mag * dt
    # sin(a/2)/|B| without dividing by zero
    safe = np.where(mag > 0, mag, 1.0)
    coef = np.where(mag > 0, np.sin(0.5 * angle) / safe, 0.5 * dt)
    gen = np.tensordot(B, GENERATORS, axes=(-1, 0))
    return np.cos(0.5 * angle)[..., None, None] * IDENTITY - 2j * coef[..., None, None] * gen


def _ordered_product(factors: np.ndarray) -> np.ndarray:
    """factors[-1] @ ... @ factors[0] by pairwise reduction (fixed order)."""
    mats = factors
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            head = mats[1::2] @ mats[0:-1:2]
            mats = np.concatenate([head, mats[-1:]], axis=0)
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def propagate(field: FieldProtocol, steps: int = DEFAULT_STEPS, t_start: float = 0.0,
              t_end: float | None = None) -> np.ndarray:
    """Midpoint-sampled time-ordered product over [t_start, t_end]."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t_end = field.duration if t_end is None else float(t_end)
    eps = (t_end - t_start) / steps
    if eps == 0.0:
        return IDENTITY.copy()
    if field.is_constant:
        # the factors commute, so their product is the single exponential
        return su2_exponential(np.array(field.params[0]), t_end - t_start)
    mids = t_start + (np.arange(steps) + 0.5) * eps
    return _ordered_product(su2_exponential(field.field(mids), eps))


def propagator_series(field: FieldProtocol, samples: int, substeps: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """U(s_k) at s_k = k t / samples, k = 0..samples; returns (times, U) with U of shape (samples+1, 2, 2).

    Constant and rotating protocols use their closed forms; other kinds
    accumulate ``substeps`` midpoint factors per sample interval.
    """
    times = np.linspace(0.0, field.duration, samples + 1)
    closed = closed_form_propagator(field, times)
    if closed is not None:
        return times, closed
    eps = field.duration / (samples * substeps)
    mids = (np.arange(samples * substeps) + 0.5) * eps
    factors = su2_exponential(field.field(mids), eps).reshape(samples, substeps, 2, 2)
    blocks = np.stack([_ordered_product(f) for f in factors])
    out = np.empty((samples + 1, 2, 2), dtype=complex)
    out[0] = IDENTITY
    for k in range(samples):
        out[k + 1] = blocks[k] @ out[k]
    return times, out


def closed_form_propagator(field: FieldProtocol, times) -> np.ndarray | None:
    """Analytic U(s) for constant fields and for the rotating field (via the rotating frame)."""
    times = np.asarray(times, dtype=float)
    if field.kind == "constant":
        B = np.broadcast_to(np.array(field.params[0]), times.shape + (3,))
        return su2_exponential(B, times)
    if field.kind == "rotating":
        b_perp, omega, b_z = field.params
        frame = su2_exponential(np.broadcast_to([0.0, 0.0, omega], times.shape + (3,)), times)
        body = su2_exponential(np.broadcast_to([b_perp, 0.0, b_z - omega], times.shape + (3,)), times)
        return frame @ body
    return None


def matrix_element(bra: CoherentLabel, U, ket: CoherentLabel) -> complex:
    """<Psi_bra|U|Psi_ket> including both gauge phases."""
    return complex(np.vdot(spinor(bra), np.asarray(U) @ spinor(ket)))


def unitarity_defect(U) -> float:
    U = np.asarray(U)
    return float(np.linalg.norm(U.conj().T @ U - IDENTITY))

