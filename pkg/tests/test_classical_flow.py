import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fields, interior_thetas, labels, phis, random_labels
from spinpath.classical_flow import (
    PoleChart, SymplecticStructure, chart_velocity_from_bloch, classical_symbol, flow_endpoints,
    hamiltonian_vector_field, integrate_flow, shoot_boundary, shoot_many, symbol_partials, trajectory_rows,
)
from spinpath.exact_oracle import FieldProtocol, matrix_element, propagate
from spinpath.su2_core import CoherentLabel, SpinorState, expectation, geodesic_distance, spinor

EQ = CoherentLabel(math.pi / 2, 0.0)


def test_symbol_examples():
    b0 = 1.4
    assert classical_symbol([0, 0, b0], CoherentLabel(0, 0)) == pytest.approx(b0 / 2, abs=1e-16)
    assert abs(classical_symbol([0, 0, b0], EQ)) < 1e-16
    assert classical_symbol([b0, 0, 0], EQ) == pytest.approx(b0 / 2, abs=1e-16)


@given(labels(), fields)
def test_symbol_is_the_diagonal_expectation(a, B):
    assert classical_symbol(B, a) == pytest.approx(expectation(a, a, B).real, abs=1e-14)


@given(interior_thetas, phis, fields)
def test_analytic_partials(theta, phi, B):
    h = 1e-6
    num_t = (classical_symbol(B, CoherentLabel(theta + h, phi)) - classical_symbol(B, CoherentLabel(theta - h, phi))) / (2 * h)
    num_p = (classical_symbol(B, CoherentLabel(theta, phi + h)) - classical_symbol(B, CoherentLabel(theta, phi - h))) / (2 * h)
    dt, dp = symbol_partials(B, theta, phi)
    assert dt == pytest.approx(num_t, abs=1e-8)
    assert dp == pytest.approx(num_p, abs=1e-8)


def test_vector_field_sign_convention():
    # phi' = +B0 for B along z pins the orientation of omega
    b0 = 0.7
    for theta in (0.3, 1.5, 2.9):
        assert hamiltonian_vector_field([0, 0, b0], (theta, 1.0)) == pytest.approx((0.0, b0), abs=1e-15)
    assert hamiltonian_vector_field([0, 0, 0], (1.0, 2.0)) == (0.0, 0.0)
    assert hamiltonian_vector_field([b0, 0, 0], (math.pi / 2, math.pi / 2)) == pytest.approx((-b0, 0.0), abs=1e-15)


def test_vector_field_solves_omega_equation():
    # omega(X_H, v) = dH(v) for both basis vectors v
    B, theta, phi = np.array([0.3, -1.2, 0.8]), 1.1, 4.0
    X = np.array(hamiltonian_vector_field(B, (theta, phi)))
    omega = SymplecticStructure().omega_matrix(theta)
    assert np.allclose(X @ omega, symbol_partials(B, theta, phi), atol=1e-15)


def test_pole_chart_error():
    with pytest.raises(PoleChart):
        hamiltonian_vector_field([1, 0, 0], (0.0, 0.0))


def test_symplectic_structure():
    s = SymplecticStructure()
    assert s.omega_coeff(math.pi / 2) == 0.5
    assert np.all(s.omega_coeff(np.linspace(0.01, math.pi - 0.01, 50)) > 0)
    assert np.allclose(s.metric(1.0), np.diag([0.25, 0.25 * math.sin(1.0) ** 2]))


def test_field_equation_consistency():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        theta, phi = math.acos(rng.uniform(-0.99, 0.99)), rng.uniform(0, 2 * math.pi)
        B = rng.normal(size=3)
        n = CoherentLabel(theta, phi).bloch_vector()
        chart = np.array(chart_velocity_from_bloch(n, np.cross(B, n)))
        worst = max(worst, np.max(np.abs(chart - hamiltonian_vector_field(B, (theta, phi)))))
    assert worst <= 1e-10


def test_z_precession_endpoint():
    b0 = 1.3
    traj = integrate_flow(EQ, FieldProtocol.constant([0, 0, b0], math.pi / b0), 10_000)
    end = traj.endpoint()
    assert abs(end.theta - math.pi / 2) <= 1e-8
    assert abs(end.phi - math.pi) <= 1e-8


def test_free_trajectory_is_constant():
    traj = integrate_flow(CoherentLabel(1.0, 2.0), FieldProtocol.constant([0, 0, 0], 3.0), 100)
    assert np.all(traj.n == traj.n[0])


def test_pole_is_a_fixed_point():
    traj = integrate_flow(CoherentLabel(0, 0), FieldProtocol.constant([0, 0, 2.0], 5.0), 1000)
    assert np.max(traj.theta) <= 1e-15


@pytest.mark.parametrize("B", [[0, 0, 1], [1, 0, 0], [0.4, -2.0, 1.1]])
def test_energy_and_norm_conservation(B):
    traj = integrate_flow(CoherentLabel(1.2, 0.4), FieldProtocol.constant(B, 4.0), 10_000)
    assert traj.relative_energy_drift() <= 1e-10
    assert np.max(np.abs(np.linalg.norm(traj.n, axis=1) - 1)) <= 1e-12
    assert np.all((traj.theta >= 0) & (traj.theta <= math.pi))


@pytest.mark.parametrize("field", [FieldProtocol.rotating(1.0, 2.0, 0.5, 1.0),
                                   FieldProtocol.linear_sweep([1, 0, -1], [0.3, 0.8, 1.5], 2.0)])
def test_flow_tracks_the_quantum_bloch_vector(field):
    start = CoherentLabel(0.8, 2.5)
    psi = propagate(field, 65536) @ spinor(start)
    quantum = SpinorState.from_array(psi).bloch_vector()
    traj = integrate_flow(start, field, 4000)
    assert geodesic_distance(traj.n[-1], quantum) <= 1e-9


def test_trajectory_rows_layout():
    traj = integrate_flow(EQ, FieldProtocol.constant([0, 0, 1], 1.0), 10)
    rows = list(trajectory_rows(traj))
    assert len(rows) == 11 and len(rows[0]) == 7
    assert rows[-1][0] == 1.0


def test_shoot_examples():
    f = FieldProtocol.constant([0, 0, 1], 1.0)
    hit = shoot_boundary(EQ, CoherentLabel(math.pi / 2, 1.0), f, 1e-6)
    assert hit.status == "solution" and hit.residual < 1e-8
    miss = shoot_boundary(EQ, CoherentLabel(math.pi / 3, 1.0), f, 1e-6)
    assert miss.status == "infeasible"
    assert miss.residual == pytest.approx(math.pi / 2 - math.pi / 3, abs=1e-8)
    same = shoot_boundary(EQ, EQ, FieldProtocol.constant([0, 0, 0], 1.0), 1e-6)
    assert same.status == "solution" and same.residual == 0.0
    assert same.initial_guess_used == (EQ.theta, EQ.phi)
    with pytest.raises(ValueError):
        shoot_boundary(EQ, EQ, f, 0.0)


def test_overspecification():
    rng = np.random.default_rng(0)
    starts, ends = random_labels(rng, 1000), random_labels(rng, 1000)
    t = rng.uniform(0, 2 * math.pi, 1000)
    f = FieldProtocol.constant([0, 0, 1], 1.0)
    results = shoot_many(starts, ends, f, t, 1e-6, steps=2000)
    assert sum(r.status == "solution" for r in results) == 0
    # positive control: aim at where the precession actually lands
    reach = [CoherentLabel(a.theta, a.phi + dt) for a, dt in zip(starts[:100], t[:100])]
    results = shoot_many(starts[:100], reach, f, t[:100], 1e-6, steps=2000)
    assert all(r.status == "solution" for r in results)


@settings(max_examples=20)
@given(labels(), labels(), st.floats(0.1, 3.0))
def test_status_matches_residual(a, b, t):
    r = shoot_boundary(a, b, FieldProtocol.constant([0.3, 0.1, 1.0], t), 1e-3, steps=200)
    assert (r.status == "solution") == (r.residual <= 1e-3)


def test_batched_endpoints_match_single_runs():
    f = FieldProtocol.constant([0.2, 0.5, 1.0], 1.0)
    starts = np.stack([CoherentLabel(0.5, 1.0).bloch_vector(), CoherentLabel(2.0, 3.0).bloch_vector()])
    batch = flow_endpoints(starts, f, [1.0, 2.5], steps=500)
    single = integrate_flow(CoherentLabel(2.0, 3.0), FieldProtocol.constant([0.2, 0.5, 1.0], 2.5), 500).n[-1]
    assert np.allclose(batch[1], single, atol=1e-14)
