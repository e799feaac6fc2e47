import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fields, interior_thetas, labels, phis, random_labels
from spinpath.classical_flow import integrate_flow, to_stereo
from spinpath.exact_oracle import FieldProtocol, matrix_element, propagate
from spinpath import semiclassical_dspa
from spinpath.semiclassical_dspa import (
    CHI_MINUS_PHI, CHI_ZERO, GaugeSection, PoleCrossing, _riccati_rates, dspa_element, dspa_residual,
    potential_closure_defect, potential_components, solve_complex_bvp,
)
from spinpath.su2_core import CoherentLabel, stereo_coordinate
from spinpath.trotter_evaluator import SphereGrid, build_grid

EQ = CoherentLabel(math.pi / 2, 0.0)
UP = CoherentLabel(0.0, 0.0)
ROTATING = FieldProtocol.rotating(1.0, 2.0, 0.5, 1.0)
WOBBLE = GaugeSection("custom", lambda t, p: (np.sin(t) * np.cos(p), np.cos(t) * np.cos(p), -np.sin(t) * np.sin(p)))


def test_potential_examples():
    assert potential_components(CHI_ZERO, (math.pi / 2, 1.3)) == pytest.approx((0.0, 0.0), abs=1e-16)
    assert potential_components(CHI_ZERO, (1e-9, 0.4)) == pytest.approx((0.0, 0.5), abs=1e-15)
    assert potential_components(CHI_MINUS_PHI, (1e-9, 0.4)) == pytest.approx((0.0, 0.0), abs=1e-15)
    assert potential_components(CHI_MINUS_PHI, (math.pi - 1e-9, 0.4)) == pytest.approx((0.0, -1.0), abs=1e-15)


def test_custom_section_adds_half_gradient():
    t, p = 1.0, 2.0
    got = potential_components(WOBBLE, (t, p))
    assert got == pytest.approx((0.5 * math.cos(t) * math.cos(p), 0.5 * (math.cos(t) - math.sin(t) * math.sin(p))))


@pytest.mark.parametrize("section", [CHI_ZERO, CHI_MINUS_PHI, WOBBLE])
def test_potential_closure(section):
    assert potential_closure_defect(section, 64) <= 1e-8


def test_residual_examples():
    b0 = 1.7
    assert dspa_residual([0, 0, b0], CHI_ZERO, build_grid(64, 64)) <= 1e-12
    # grid (1, 2) has exactly the nodes (pi/2, 0) and (pi/2, pi)
    assert dspa_residual([b0, 0, 0], CHI_ZERO, build_grid(1, 2)) == pytest.approx(b0 / 2, abs=1e-15)
    assert dspa_residual([b0, 0, 0], CHI_ZERO, build_grid(16, 16)) >= b0 / 2
    for section in (CHI_ZERO, CHI_MINUS_PHI, WOBBLE):
        assert dspa_residual([0, 0, 0], section, build_grid(8, 8)) == 0.0


@given(interior_thetas, phis, fields)
def test_residual_closed_form(theta, phi, B):
    # theta(X_H) - H = -(B_perp / 2) cos(phi - phi_B) / sin(theta) in the chi = 0 section
    grid = SphereGrid(1, 1, np.array([theta]), np.array([phi]), np.ones(1), np.ones(1))
    expected = 0.5 * abs(B[0] * math.cos(phi) + B[1] * math.sin(phi)) / math.sin(theta)
    assert dspa_residual(B, CHI_ZERO, grid) == pytest.approx(expected, rel=1e-9, abs=1e-12)


@settings(max_examples=30)
@given(fields.filter(lambda b: math.hypot(b[0], b[1]) >= 0.01 * np.linalg.norm(b) and np.linalg.norm(b) > 1e-3))
def test_residual_dichotomy(B):
    assert dspa_residual(B, CHI_ZERO, build_grid(64, 64)) >= 0.4 * np.linalg.norm(B)


def test_free_path_is_constant():
    path = solve_complex_bvp(0.3 + 0.2j, -1.1j, FieldProtocol.constant([0, 0, 0], 2.0), 1024)
    assert np.all(path.zeta == 0.3 + 0.2j)
    assert np.all(path.zetabar == -1.1j)


def test_z_field_path_is_a_phase():
    b0, z0 = 0.8, 0.5 - 0.4j
    path = solve_complex_bvp(z0, 0.7, FieldProtocol.constant([0, 0, b0], 1.5), 1024)
    assert np.max(np.abs(path.zeta - z0 * np.exp(1j * b0 * path.s))) <= 1e-14


def test_boundary_conditions_are_exact():
    path = solve_complex_bvp(0.3 + 0.9j, 2.0 - 0.5j, ROTATING, 1024)
    assert path.zeta[0] == 0.3 + 0.9j and path.zetabar[-1] == 2.0 - 0.5j


def test_path_satisfies_the_complex_equations():
    path = solve_complex_bvp(0.3 + 0.9j, 2.0 - 0.5j, ROTATING, 4096)
    rates = _riccati_rates(path.hamiltonians, path.zeta, path.zetabar)
    h = path.s[1] - path.s[0]
    for traj, rate in zip((path.zeta, path.zetabar), rates):
        fd = (traj[2:] - traj[:-2]) / (2 * h)
        assert np.max(np.abs(fd - rate[1:-1])) <= 1e-5


def test_real_classical_path_is_self_conjugate():
    start = CoherentLabel(1.0, 0.3)
    traj = integrate_flow(start, ROTATING, 4096)
    end = traj.endpoint()
    path = solve_complex_bvp(stereo_coordinate(start.theta, start.phi),
                             stereo_coordinate(end.theta, end.phi).conjugate(), ROTATING, 4096)
    assert np.max(np.abs(path.zetabar - path.zeta.conj())) <= 1e-9
    assert np.max(np.abs(path.zeta - to_stereo(traj.theta, traj.phi))) <= 1e-9


def test_pole_crossings_are_reported():
    # x precession carries |up> onto |down> at t = pi, the chart's point at infinity
    with pytest.raises(PoleCrossing):
        solve_complex_bvp(0j, 0j, FieldProtocol.constant([1, 0, 0], math.pi))
    with pytest.raises(PoleCrossing):
        dspa_element(EQ, CoherentLabel(math.pi, 0), ROTATING)


def test_dspa_examples():
    assert abs(dspa_element(EQ, EQ, FieldProtocol.constant([0, 0, 0], 1.0)) - 1) <= 1e-14
    b0 = 1.3
    for t in (0.5, 1.0, 2.7, 7.0):
        f = FieldProtocol.constant([0, 0, b0], t)
        assert abs(dspa_element(UP, UP, f) - cmath.exp(-0.5j * b0 * t)) <= 1e-12
        assert abs(dspa_element(EQ, EQ, f) - math.cos(b0 * t / 2)) <= 1e-12


def test_kinetic_sign_is_fixed_by_the_oracle():
    f = FieldProtocol.constant([0, 0, 1], 1.0)
    assert abs(dspa_element(EQ, EQ, f, kinetic_sign=-1.0) - math.cos(0.5)) <= 1e-12
    assert abs(dspa_element(EQ, EQ, f, kinetic_sign=+1.0) - math.cos(0.5)) > 1e-2


def test_boundary_log_follows_the_path(monkeypatch):
    # for this pair the principal logarithms give exactly minus the amplitude
    bra, ket = CoherentLabel(1.763, 0.57), CoherentLabel(2.218, 3.646)
    exact = matrix_element(bra, propagate(ROTATING, 65536), ket)
    assert abs(dspa_element(bra, ket, ROTATING) - exact) <= 1e-10

    def principal(path):
        return (complex(np.log(1 + path.zetabar_end * path.zeta[-1]))
                + complex(np.log(1 + path.zetabar[0] * path.zeta_start)))

    monkeypatch.setattr(semiclassical_dspa, "_boundary_log", principal)
    assert abs(dspa_element(bra, ket, ROTATING) + exact) <= 1e-10


@pytest.mark.parametrize("field", [
    FieldProtocol.constant([0, 0, 1], 1.0),
    FieldProtocol.constant([1, 0, 0], 1.0),
    ROTATING,
    FieldProtocol.rotating(1.3, 3.0, -0.7, 4.0),
])
def test_exactness_on_random_pairs(field):
    rng = np.random.default_rng(17)
    U = propagate(field, 65536)
    poles, worst = 0, 0.0
    for bra, ket in zip(random_labels(rng, 150), random_labels(rng, 150)):
        try:
            d = dspa_element(bra, ket, field)
        except PoleCrossing:
            poles += 1
            continue
        worst = max(worst, abs(d - matrix_element(bra, U, ket)))
    assert worst <= 1e-8
    assert poles <= 15


def test_exactness_without_closed_form():
    field = FieldProtocol.linear_sweep([1, 0, -1], [0.3, 0.8, 1.5], 2.0)
    rng = np.random.default_rng(4)
    U = propagate(field, 65536)
    for bra, ket in zip(random_labels(rng, 20), random_labels(rng, 20)):
        assert abs(dspa_element(bra, ket, field) - matrix_element(bra, U, ket)) <= 1e-8


@settings(max_examples=30)
@given(labels(), labels())
def test_gauge_invariance_of_magnitude(bra, ket):
    try:
        a = dspa_element(bra, ket, ROTATING, section=CHI_ZERO)
        b = dspa_element(bra, ket, ROTATING, section=CHI_MINUS_PHI)
    except PoleCrossing:
        return
    assert abs(abs(a) - abs(b)) <= 1e-12


@settings(max_examples=30)
@given(labels(chi=True), labels(chi=True))
def test_labels_keep_their_gauge(bra, ket):
    try:
        d = dspa_element(bra, ket, ROTATING)
    except PoleCrossing:
        return
    assert abs(d - matrix_element(bra, propagate(ROTATING, 65536), ket)) <= 1e-8
