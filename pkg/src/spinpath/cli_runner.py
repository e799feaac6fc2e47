"""Config ingestion, experiment dispatch and CSV/JSON report emission.

    spinpath run <config.json> [--out DIR] [--seed N] [--jobs K]
    spinpath validate <config.json>

Exit codes: 0 all checks pass, 1 a declared tolerance failed, 2 usage or
config error.  SPINPATH_OUT overrides the config's output_dir (``--out``
overrides both).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import classical_flow, semiclassical_dspa
from .exact_oracle import PROTOCOL_KEYS, FieldProtocol, ProtocolError, matrix_element, propagate
from .semiclassical_dspa import PoleCrossing, dspa_element, dspa_residual
from .su2_core import CHI_MINUS_PHI, CHI_ZERO, CoherentLabel, InvalidLabel, SpinorState, geodesic_distance, spinor
from .trotter_evaluator import build_grid, resolve_identity, trotter_propagator
from .wiener_regulator import regulated_propagator

EXPERIMENTS = ("identity_check", "trotter_convergence", "wiener_study", "classical_demo",
               "overspec_scan", "residual_scan", "dspa_exactness")
SECTIONS = {"chi_zero": CHI_ZERO, "chi_minus_phi": CHI_MINUS_PHI}
OUT_ENV = "SPINPATH_OUT"
HALF_PI = 0.5 * math.pi


class ConfigError(ValueError):
    """Base class for config problems; ``line`` is 1-based when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class RangeError(ConfigError):
    pass


# --------------------------------------------------------------------------- config

def _rotating_default():
    return FieldProtocol.rotating(1.0, 2.0, 0.5, 1.0)


def _z_default(duration=1.0):
    return FieldProtocol.constant([0.0, 0.0, 1.0], duration)


# experiment -> knob defaults; a key not listed for an experiment is rejected
_DEFAULTS: dict[str, dict[str, Any]] = {
    "identity_check": {
        "grids": ((16, 16),),
        "sections": ("chi_zero", "chi_minus_phi"),
        "tolerances": {"identity_frobenius": 1e-13},
    },
    "trotter_convergence": {
        "field_protocol": _rotating_default(),
        "grids": ((12, 12),),
        "n_values": (8, 16, 32, 64, 128, 256),
        "bra": CoherentLabel(HALF_PI, 0.0),
        "ket": CoherentLabel(HALF_PI, 0.0),
        "sampling": "midpoint",
        "degenerate": "linear",
        "oracle_steps": 65536,
        "tolerances": {"slope_min": -1.3, "slope_max": -0.7, "final_abs_err": 5e-3},
    },
    "wiener_study": {
        "field_protocol": _z_default(),
        "n": 64,
        "nu": (1.0, 10.0, 100.0),
        "n_samples": 100_000,
        "replicas": 1,
        "grids": ((16, 16),),
        "bra": CoherentLabel(HALF_PI, 0.0),
        "ket": CoherentLabel(HALF_PI, 0.0),
        "tolerances": {"sigma_mult": 3.0, "abs_floor": 2e-2},
    },
    "classical_demo": {
        "field_protocol": _z_default(math.pi),
        "start": CoherentLabel(HALF_PI, 0.0),
        "steps": 10_000,
        "oracle_steps": 65536,
        "tolerances": {"endpoint": 1e-8, "energy_drift": 1e-10, "norm_defect": 1e-12},
    },
    "overspec_scan": {
        "field_protocol": _z_default(2.0 * math.pi),
        "triples": 1000,
        "controls": 100,
        "steps": 10_000,
        "tolerances": {"shoot_tol": 1e-6},
    },
    "residual_scan": {
        "fields": ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 1.0)),
        "sections": ("chi_zero", "chi_minus_phi"),
        "grids": ((64, 64),),
        "tolerances": {"parallel_max": 1e-12, "transverse_min_ratio": 0.4},
    },
    "dspa_exactness": {
        "field_protocols": (_z_default(), FieldProtocol.constant([1.0, 0.0, 0.0], 1.0), _rotating_default()),
        "pairs": 100,
        "dspa_samples": 2048,
        "oracle_steps": 65536,
        "tolerances": {"abs_err": 1e-8, "max_exclusion_rate": 0.1},
    },
}
_COMMON = {"experiment", "seed", "output_dir", "tolerances"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; unused knobs keep their neutral defaults."""

    experiment: str
    seed: int = 0
    output_dir: str = "spinpath_out"
    tolerances: dict = field(default_factory=dict)
    field_protocol: FieldProtocol | None = None
    field_protocols: tuple = ()
    grids: tuple = ()
    sections: tuple = ()
    n: int = 0
    n_values: tuple = ()
    nu: tuple = ()
    n_samples: int = 0
    replicas: int = 0
    bra: CoherentLabel | None = None
    ket: CoherentLabel | None = None
    start: CoherentLabel | None = None
    sampling: str = "midpoint"
    degenerate: str = "linear"
    steps: int = 0
    oracle_steps: int = 0
    dspa_samples: int = 0
    triples: int = 0
    controls: int = 0
    pairs: int = 0
    fields: tuple = ()

    def keys(self) -> list[str]:
        return sorted(_COMMON | set(_DEFAULTS[self.experiment]))

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready echo of every knob used by this experiment."""
        out = {}
        for key in self.keys():
            out[key] = _echo(getattr(self, key))
        return out


def _echo(value):
    if isinstance(value, FieldProtocol):
        return value.to_dict()
    if isinstance(value, CoherentLabel):
        return [value.theta, value.phi, value.chi]
    if isinstance(value, dict):
        return {k: _echo(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_echo(v) for v in value]
    return value


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _int(value, key, text, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", key, _line_of(text, key))
    if value < minimum:
        raise RangeError(f"must be >= {minimum}, got {value}", key, _line_of(text, key))
    return value


def _float(value, key, text, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", key, _line_of(text, key))
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise RangeError(f"must be finite{' and > 0' if positive else ''}, got {value}", key,
                         _line_of(text, key))
    return value


def _list(value, key, text):
    if not isinstance(value, list) or not value:
        raise ParseError("expected a non-empty list", key, _line_of(text, key))
    return value


def _label(value, key, text):
    if not isinstance(value, list) or len(value) not in (2, 3):
        raise ParseError("expected [theta, phi] or [theta, phi, chi]", key, _line_of(text, key))
    nums = [_float(v, key, text, positive=False) for v in value]
    try:
        return CoherentLabel(*nums)
    except InvalidLabel as exc:
        raise RangeError(str(exc), key, _line_of(text, key)) from exc


def _protocol(value, key, text):
    line = _line_of(text, key)
    if not isinstance(value, dict):
        raise ParseError("expected a field protocol object", key, line)
    kind = value.get("kind")
    if kind not in PROTOCOL_KEYS:
        raise ParseError(f"unknown field kind {kind!r}; expected one of {sorted(PROTOCOL_KEYS)}", key, line)
    unknown = sorted(set(value) - PROTOCOL_KEYS[kind])
    if unknown:
        raise UnknownKey(f"not a {kind} field parameter", f"{key}.{unknown[0]}", _line_of(text, unknown[0]))
    if "duration" in value:
        _float(value["duration"], f"{key}.duration", text)
    try:
        return FieldProtocol.from_dict(value)
    except (ProtocolError, TypeError, ValueError) as exc:
        raise ParseError(str(exc), key, line) from exc


def _tolerances(value, defaults, text):
    if not isinstance(value, dict):
        raise ParseError("expected an object", "tolerances", _line_of(text, "tolerances"))
    out = dict(defaults)
    for name, tol in value.items():
        if name not in defaults:
            raise UnknownKey(f"not a tolerance of this experiment; known: {sorted(defaults)}",
                             f"tolerances.{name}", _line_of(text, name))
        out[name] = _float(tol, f"tolerances.{name}", text, positive=False)
    return out


def _grid_pair(value, key, text):
    if not isinstance(value, list) or len(value) != 2:
        raise ParseError("expected [n_theta, n_phi]", key, _line_of(text, key))
    return (_int(value[0], key, text, 1), _int(value[1], key, text, 2))


def _convert(key, value, defaults, text):
    if key == "tolerances":
        return _tolerances(value, defaults["tolerances"], text)
    if key in ("seed",):
        return _int(value, key, text, minimum=0)
    if key == "output_dir":
        if not isinstance(value, str) or not value:
            raise ParseError("expected a non-empty path string", key, _line_of(text, key))
        return value
    if key == "field_protocol":
        return _protocol(value, key, text)
    if key == "field_protocols":
        return tuple(_protocol(v, key, text) for v in _list(value, key, text))
    if key == "grids":
        return tuple(_grid_pair(v, key, text) for v in _list(value, key, text))
    if key == "sections":
        out = tuple(_list(value, key, text))
        bad = [s for s in out if s not in SECTIONS]
        if bad:
            raise ParseError(f"unknown section {bad[0]!r}; expected one of {sorted(SECTIONS)}", key,
                             _line_of(text, key))
        return out
    if key == "n_values":
        return tuple(_int(v, key, text) for v in _list(value, key, text))
    if key == "nu":
        return tuple(_float(v, key, text) for v in _list(value, key, text))
    if key == "fields":
        out = []
        for v in _list(value, key, text):
            if not isinstance(v, list) or len(v) != 3:
                raise ParseError("expected a list of 3-vectors", key, _line_of(text, key))
            out.append(tuple(_float(x, key, text, positive=False) for x in v))
        return tuple(out)
    if key in ("bra", "ket", "start"):
        return _label(value, key, text)
    if key == "sampling":
        if value not in ("midpoint", "left"):
            raise ParseError("expected 'midpoint' or 'left'", key, _line_of(text, key))
        return value
    if key == "degenerate":
        if value not in ("linear", "zero"):
            raise ParseError("expected 'linear' or 'zero'", key, _line_of(text, key))
        return value
    if key == "n":
        # a single slice has no intermediate point to regulate
        return _int(value, key, text, minimum=2)
    return _int(value, key, text)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON document and fill per-experiment defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object", line=1)
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ParseError(f"expected one of {list(EXPERIMENTS)}, got {experiment!r}", "experiment",
                         _line_of(text, "experiment"))
    defaults = _DEFAULTS[experiment]
    allowed = _COMMON | set(defaults)
    for key in doc:
        if key not in allowed:
            raise UnknownKey(f"not used by {experiment}; allowed: {sorted(allowed)}", key, _line_of(text, key))
    values = {k: v for k, v in defaults.items()}
    values["tolerances"] = dict(defaults["tolerances"])
    for key, raw in doc.items():
        if key == "experiment":
            continue
        values[key] = _convert(key, raw, defaults, text)
    return ExperimentConfig(experiment=experiment, **values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------- output

@dataclass
class Check:
    name: str
    value: float
    comparison: str  # "<=", ">=", "=="
    threshold: float
    passed: bool


def _check(name, value, comparison, threshold) -> Check:
    value, threshold = float(value), float(threshold)
    if comparison == "<=":
        ok = value <= threshold
    elif comparison == ">=":
        ok = value >= threshold
    else:
        ok = value == threshold
    return Check(name, value, comparison, threshold, bool(ok))


@dataclass
class RunReport:
    config: dict
    csv_paths: dict
    summary: dict
    checks: list
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"config": self.config, "csv_paths": self.csv_paths, "summary": self.summary,
                "checks": [asdict(c) for c in self.checks], "passed": self.passed,
                "wall_clock_s": self.wall_clock}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _pmap(fn, items, jobs):
    """Ordered map; results do not depend on ``jobs``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _sphere_labels(rng, size):
    theta = np.arccos(rng.uniform(-1.0, 1.0, size))
    phi = rng.uniform(0.0, 2.0 * math.pi, size)
    return [CoherentLabel(t, p) for t, p in zip(theta.tolist(), phi.tolist())]


# --------------------------------------------------------------------------- experiments

def _identity_check(cfg, out, jobs):
    rows = []
    for n_theta, n_phi in cfg.grids:
        grid = build_grid(n_theta, n_phi)
        for name in cfg.sections:
            err = np.linalg.norm(resolve_identity(grid, SECTIONS[name]) - np.eye(2))
            rows.append((n_theta, n_phi, name, float(np.sum(grid.weights)), float(err)))
    path = out / "identity_check.csv"
    write_csv(path, ["n_theta", "n_phi", "section", "weight_sum", "frobenius_error"], rows)
    worst = max(r[-1] for r in rows)
    checks = [_check("identity_frobenius", worst, "<=", cfg.tolerances["identity_frobenius"])]
    return {"identity_check": str(path)}, {"max_frobenius_error": worst}, checks


def _trotter_point(args):
    field, n, grid_shape, bra, ket, sampling, degenerate = args
    return trotter_propagator(field, n, build_grid(*grid_shape), bra, ket,
                              sampling=sampling, degenerate=degenerate)


def _trotter_convergence(cfg, out, jobs):
    exact = matrix_element(cfg.bra, propagate(cfg.field_protocol, cfg.oracle_steps), cfg.ket)
    tasks = [(cfg.field_protocol, n, g, cfg.bra, cfg.ket, cfg.sampling, cfg.degenerate)
             for g in cfg.grids for n in cfg.n_values]
    values = _pmap(_trotter_point, tasks, jobs)
    rows = [(t[1], t[2][0], t[2][1], v.real, v.imag, abs(v - exact)) for t, v in zip(tasks, values)]
    path = out / "trotter_convergence.csv"
    write_csv(path, ["n", "n_theta", "n_phi", "re", "im", "abs_err_vs_oracle"], rows)
    tol = cfg.tolerances
    summary = {"exact_re": exact.real, "exact_im": exact.imag, "slopes": {}, "final_abs_err": {}}
    checks = []
    for g in cfg.grids:
        sub = [(r[0], r[5]) for r in rows if (r[1], r[2]) == g]
        ns, errs = np.array([s[0] for s in sub], float), np.array([s[1] for s in sub])
        tag = f"{g[0]}x{g[1]}"
        final = float(errs[np.argmax(ns)])
        summary["final_abs_err"][tag] = final
        checks.append(_check(f"final_abs_err[{tag}]", final, "<=", tol["final_abs_err"]))
        if ns.size >= 2:
            slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
            summary["slopes"][tag] = slope
            checks.append(_check(f"slope_min[{tag}]", slope, ">=", tol["slope_min"]))
            checks.append(_check(f"slope_max[{tag}]", slope, "<=", tol["slope_max"]))
    return {"trotter_convergence": str(path)}, summary, checks


def _wiener_point(args):
    field, n, nu, n_samples, bra, ket, seed = args
    return regulated_propagator(field, n, nu, n_samples, bra, ket, seed=seed)


def _wiener_study(cfg, out, jobs):
    grid = build_grid(*cfg.grids[0])
    ref = trotter_propagator(cfg.field_protocol, cfg.n, grid, cfg.bra, cfg.ket)
    seeds = [cfg.seed + r for r in range(cfg.replicas)]
    tasks = [(cfg.field_protocol, cfg.n, nu, cfg.n_samples, cfg.bra, cfg.ket, s) for s in seeds for nu in cfg.nu]
    estimates = _pmap(_wiener_point, tasks, jobs)
    rows = [(e.nu, cfg.n, e.n_samples, e.mean.real, e.mean.imag, e.std_error, ref.real, ref.imag, e.seed)
            for e in estimates]
    path = out / "wiener_study.csv"
    write_csv(path, ["nu", "n", "n_samples", "mean_re", "mean_im", "std_error",
                     "trotter_ref_re", "trotter_ref_im", "seed"], rows)
    tol = cfg.tolerances
    nu_max = max(cfg.nu)
    checks = []
    for e in estimates:
        if e.nu == nu_max:
            allowed = max(tol["sigma_mult"] * e.std_error, tol["abs_floor"])
            checks.append(_check(f"agreement[nu={e.nu:g},seed={e.seed}]", abs(e.mean - ref), "<=", allowed))
    aggregate = {nu: float(np.mean([abs(e.mean - ref) for e in estimates if e.nu == nu])) for nu in cfg.nu}
    order = sorted(cfg.nu)
    decreasing = all(aggregate[a] > aggregate[b] for a, b in zip(order, order[1:]))
    checks.append(_check("aggregate_error_decreasing_in_nu", int(decreasing), "==", 1))
    summary = {"trotter_ref_re": ref.real, "trotter_ref_im": ref.imag,
               "mean_abs_err_by_nu": {f"{k:g}": v for k, v in aggregate.items()},
               "high_variance_runs": sum(e.high_variance for e in estimates)}
    return {"wiener_study": str(path)}, summary, checks


def _classical_demo(cfg, out, jobs):
    traj = classical_flow.integrate_flow(cfg.start, cfg.field_protocol, cfg.steps)
    path = out / "classical_demo.csv"
    write_csv(path, ["s", "theta", "phi", "n_x", "n_y", "n_z", "energy"], classical_flow.trajectory_rows(traj))
    # spin-1/2 Bloch vectors follow the classical flow exactly, for any B(s)
    psi = propagate(cfg.field_protocol, cfg.oracle_steps) @ spinor(cfg.start)
    quantum = SpinorState.from_array(psi).bloch_vector()
    endpoint_err = float(geodesic_distance(traj.n[-1], quantum))
    norm_defect = float(np.max(np.abs(np.linalg.norm(traj.n, axis=-1) - 1.0)))
    tol = cfg.tolerances
    checks = [_check("endpoint", endpoint_err, "<=", tol["endpoint"]),
              _check("norm_defect", norm_defect, "<=", tol["norm_defect"])]
    summary = {"endpoint_error_vs_quantum_bloch": endpoint_err, "norm_defect": norm_defect}
    if cfg.field_protocol.is_constant:
        drift = traj.relative_energy_drift()
        summary["relative_energy_drift"] = drift
        checks.append(_check("energy_drift", drift, "<=", tol["energy_drift"]))
    return {"classical_demo": str(path)}, summary, checks


def _rotate(n, axis, angle):
    """Rodrigues rotation of the rows of n about the unit vector axis."""
    c, s = np.cos(angle)[:, None], np.sin(angle)[:, None]
    return n * c + np.cross(axis, n) * s + axis * (n @ axis)[:, None] * (1 - c)


def _overspec_scan(cfg, out, jobs):
    fp = cfg.field_protocol
    if not fp.is_constant:
        raise RangeError("overspec_scan needs a constant field protocol", "field_protocol")
    B = np.array(fp.params[0])
    rng = np.random.default_rng(cfg.seed)
    t_rand = rng.uniform(0.0, fp.duration, cfg.triples)
    starts = _sphere_labels(rng, cfg.triples)
    ends = _sphere_labels(rng, cfg.triples)
    # positive control: the endpoint of the exact precession about B
    t_ctrl = rng.uniform(0.0, fp.duration, cfg.controls)
    ctrl_starts = _sphere_labels(rng, cfg.controls)
    b = float(np.linalg.norm(B))
    n0 = np.stack([lab.bloch_vector() for lab in ctrl_starts])
    n1 = _rotate(n0, B / b, b * t_ctrl) if b > 0 else n0
    ctrl_ends = [CoherentLabel.from_bloch(v) for v in n1]
    tol = cfg.tolerances["shoot_tol"]
    results = classical_flow.shoot_many(starts + ctrl_starts, ends + ctrl_ends, fp,
                                        np.concatenate([t_rand, t_ctrl]), tol, cfg.steps)
    kinds = ["random"] * cfg.triples + ["control"] * cfg.controls
    rows = [(k, a.theta, a.phi, e.theta, e.phi, t, r.status, r.residual)
            for k, a, e, t, r in zip(kinds, starts + ctrl_starts, ends + ctrl_ends,
                                     np.concatenate([t_rand, t_ctrl]).tolist(), results)]
    path = out / "overspec_scan.csv"
    write_csv(path, ["kind", "from_theta", "from_phi", "to_theta", "to_phi", "t", "status", "residual"], rows)
    random_hits = sum(r[6] == "solution" for r in rows if r[0] == "random")
    control_hits = sum(r[6] == "solution" for r in rows if r[0] == "control")
    checks = [_check("random_solutions", random_hits, "==", 0),
              _check("control_solutions", control_hits, "==", cfg.controls)]
    summary = {"random_solutions": random_hits, "control_solutions": control_hits,
               "min_random_residual": min((r[7] for r in rows if r[0] == "random"), default=float("nan"))}
    return {"overspec_scan": str(path)}, summary, checks


def _residual_scan(cfg, out, jobs):
    rows = []
    for n_theta, n_phi in cfg.grids:
        grid = build_grid(n_theta, n_phi)
        for B in cfg.fields:
            for name in cfg.sections:
                rows.append((name, *B, n_theta, n_phi, dspa_residual(B, SECTIONS[name], grid)))
    path = out / "residual_scan.csv"
    write_csv(path, ["section", "bx", "by", "bz", "n_theta", "n_phi", "residual"], rows)
    tol = cfg.tolerances
    checks = []
    for name, bx, by, bz, n_theta, n_phi, res in rows:
        if name != "chi_zero":
            continue
        tag = f"B=({bx:g},{by:g},{bz:g}),{n_theta}x{n_phi}"
        if math.hypot(bx, by) == 0.0:
            checks.append(_check(f"parallel_max[{tag}]", res, "<=", tol["parallel_max"]))
        else:
            norm = math.sqrt(bx * bx + by * by + bz * bz)
            checks.append(_check(f"transverse_min_ratio[{tag}]", res / norm, ">=", tol["transverse_min_ratio"]))
    return {"residual_scan": str(path)}, {"rows": len(rows)}, checks


def _dspa_point(args):
    bra, ket, fp, samples = args
    try:
        return dspa_element(bra, ket, fp, samples=samples)
    except PoleCrossing:
        return None


def _protocol_tag(i, fp):
    return f"p{i}_{fp.kind}"


def _dspa_exactness(cfg, out, jobs):
    rng = np.random.default_rng(cfg.seed)
    tasks, meta = [], []
    for i, fp in enumerate(cfg.field_protocols):
        U = propagate(fp, cfg.oracle_steps)
        bras, kets = _sphere_labels(rng, cfg.pairs), _sphere_labels(rng, cfg.pairs)
        for bra, ket in zip(bras, kets):
            tasks.append((bra, ket, fp, cfg.dspa_samples))
            meta.append((i, fp, bra, ket, matrix_element(bra, U, ket)))
    values = _pmap(_dspa_point, tasks, jobs)
    rows = []
    for (i, fp, bra, ket, exact), d in zip(meta, values):
        pole = d is None
        d = complex("nan") if pole else d
        rows.append((_protocol_tag(i, fp), bra.theta, bra.phi, ket.theta, ket.phi, d.real, d.imag,
                     exact.real, exact.imag, abs(d - exact), int(pole)))
    path = out / "dspa_exactness.csv"
    write_csv(path, ["protocol", "bra_theta", "bra_phi", "ket_theta", "ket_phi", "dspa_re", "dspa_im",
                     "exact_re", "exact_im", "abs_err", "pole_crossing_flag"], rows)
    tol = cfg.tolerances
    checks, summary = [], {"kinetic_convention": semiclassical_dspa.CONVENTION, "protocols": {}}
    for i, fp in enumerate(cfg.field_protocols):
        tag = _protocol_tag(i, fp)
        sub = [r for r in rows if r[0] == tag]
        kept = [r[9] for r in sub if not r[10]]
        excluded = len(sub) - len(kept)
        worst = max(kept) if kept else float("nan")
        rate = excluded / len(sub)
        summary["protocols"][tag] = {"field": fp.to_dict(), "max_abs_err": worst, "pole_crossings": excluded,
                                     "exclusion_rate": rate}
        checks.append(_check(f"abs_err[{tag}]", worst if kept else float("inf"), "<=", tol["abs_err"]))
        checks.append(_check(f"exclusion_rate[{tag}]", rate, "<=", tol["max_exclusion_rate"]))
    return {"dspa_exactness": str(path)}, summary, checks


_RUNNERS = {
    "identity_check": _identity_check,
    "trotter_convergence": _trotter_convergence,
    "wiener_study": _wiener_study,
    "classical_demo": _classical_demo,
    "overspec_scan": _overspec_scan,
    "residual_scan": _residual_scan,
    "dspa_exactness": _dspa_exactness,
}


def resolve_output_dir(cfg: ExperimentConfig, out: str | None = None) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUT_ENV) or cfg.output_dir)


def run(cfg: ExperimentConfig, out: str | None = None, jobs: int = 1) -> RunReport:
    """Run one experiment, write its CSV and summary.json, return the report."""
    out_dir = resolve_output_dir(cfg, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    paths, summary, checks = _RUNNERS[cfg.experiment](cfg, out_dir, max(1, int(jobs)))
    report = RunReport(cfg.to_dict(), paths, summary, checks, time.perf_counter() - t0)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return report


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


# --------------------------------------------------------------------------- entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinpath", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config and $" + OUT_ENV + ")")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    p_val = sub.add_parser("validate", help="parse and echo a config without running it")
    p_val.add_argument("config")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            if args.seed is not None:
                if args.seed < 0:
                    raise RangeError("must be >= 0", "--seed")
                cfg = replace(cfg, seed=args.seed)
            if args.jobs < 1:
                raise RangeError("must be >= 1", "--jobs")
    except ConfigError as exc:
        print(f"spinpath: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(json.dumps({"experiment": cfg.experiment, "config": cfg.to_dict()}, indent=2, sort_keys=True))
        return 0
    report = run(cfg, args.out, args.jobs)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} {c.comparison} {c.threshold:.6g}")
    print(f"{cfg.experiment}: {'pass' if report.passed else 'FAIL'} ({report.wall_clock:.1f} s)")
    return 0 if report.passed else 1
