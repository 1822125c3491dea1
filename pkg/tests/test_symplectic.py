import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactum.contact import ContactModel, jacobi_bracket, projective_reduction
from contactum.diffcalc import fd_gradient
from contactum.geometry import ChartPoint, builtin_mobius, builtin_projective, builtin_trivial_jet, sample_in
from contactum.rng import LCG
from contactum.symplectic import (
    CoverPoint,
    SymplecticError,
    evolution_diagnostic,
    hamiltonian_field,
    homogeneous_hamiltonian,
    omega,
    omega_exactness_residual,
    omega_homogeneity_residual,
    poisson_bracket,
    projection_check,
    scale,
    symplectic_hvf,
    weight_zero_residual,
)

FE = "cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z"
J1 = builtin_trivial_jet(1)
MOB = builtin_mobius()


def cover(s, *coords, chart="J"):
    return CoverPoint(float(s), ChartPoint(chart, tuple(float(c) for c in coords)))


def test_omega_block_pattern_at_zero_momentum():
    w = omega(J1, cover(2.0, 0.0, 0.0, 0.0))
    # ds ^ dz + 2 dq ^ dp
    expected = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 2.0],
            [0.0, 0.0, -2.0, 0.0],
        ]
    )
    assert np.array_equal(w, expected)
    assert abs(np.linalg.det(w)) == pytest.approx(4.0)


def test_omega_mobius():
    s, z, x, pi = 1.5, 0.2, 1.0, -0.7
    w = omega(MOB, cover(s, z, x, pi, chart="U"))
    expected = np.zeros((4, 4))
    expected[0, 1], expected[0, 2] = 1.0, -pi  # ds ^ (dz - pi dx)
    expected[2, 3] = s  # s dx ^ dpi
    expected = expected - expected.T
    assert np.allclose(w, expected, atol=1e-15)


@pytest.mark.parametrize("atlas", [J1, builtin_trivial_jet(2), MOB, builtin_projective(2)], ids=["j1", "j2", "mobius", "proj"])
def test_omega_nondegenerate_homogeneous_exact(atlas):
    rng = LCG(21)
    for chart in atlas.charts:
        for _ in range(20):
            p = CoverPoint(float(rng.uniform([0.5], [2.0])[0]), ChartPoint(chart.id, tuple(sample_in(chart.core, rng))))
            assert abs(np.linalg.det(omega(atlas, p))) > 1e-6
            for lam in (-2.0, 0.5, 3.0):
                assert omega_homogeneity_residual(atlas, p, lam) <= 1e-12
            assert omega_exactness_residual(atlas, p) <= 1e-12


def test_cover_point_rejects_zero_fiber():
    with pytest.raises(SymplecticError):
        cover(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(SymplecticError):
        cover(1e-9, 0.0, 0.0, 0.0)
    with pytest.raises(SymplecticError):
        cover(math.nan, 0.0, 0.0, 0.0)
    assert cover(-1e-8, 0.0, 0.0, 0.0).s == -1e-8


def test_scale():
    p = cover(2.0, 0.1, 0.2, 0.3)
    assert scale(p, -0.5).s == -1.0
    assert scale(p, -0.5).base == p.base


def test_homogeneous_hamiltonian_value():
    model = ContactModel.build(J1, "z + p1")
    assert homogeneous_hamiltonian(model, cover(3.0, 1.0, 0.0, 2.0)) == 9.0


def test_field_of_constant():
    model = ContactModel.build(J1, "2")
    x = symplectic_hvf(model, cover(1.7, 0.3, -0.4, 0.9))
    assert np.allclose(x, [0.0, -2.0, 0.0, 0.0], atol=1e-14)


def test_field_of_z():
    model = ContactModel.build(J1, "z")
    x = symplectic_hvf(model, cover(1.7, 0.3, -0.4, 0.9))
    assert np.allclose(x, [1.7, -0.3, 0.0, -0.9], atol=1e-14)


@pytest.mark.parametrize(
    "atlas, ham, params",
    [
        (J1, "z*q1 + p1^2*exp(z)", {}),
        (MOB, FE, {"f": 0.8}),
        (builtin_projective(2), None, {}),
    ],
    ids=["trivial", "mobius", "proj"],
)
def test_projection_and_weight_zero(atlas, ham, params):
    if ham is None:
        ham = projective_reduction(atlas, "p0*q1 - p1*q0 + p2^2/p0")
    model = ContactModel.build(atlas, ham, params)
    rng = LCG(17)
    for chart in atlas.charts:
        for _ in range(20):
            sign = 1.0 if rng.random() < 0.5 else -1.0
            p = CoverPoint(sign * float(rng.uniform([0.5], [2.0])[0]), ChartPoint(chart.id, tuple(sample_in(chart.core, rng))))
            assert projection_check(model, p) <= 1e-9
            for lam in (-2.0, 0.5, 3.0):
                assert weight_zero_residual(model, p, lam) <= 1e-9


def test_poisson_bracket_closes_on_homogeneous_functions():
    rng = LCG(5)
    for _ in range(30):
        base = ChartPoint("J", tuple(sample_in(J1.chart("J").core, rng)))
        s = float(rng.uniform([0.5], [2.0])[0])
        for F, G in [("z*q1", "p1^2"), ("q1", "p1"), ("sin(z)", "q1*p1 + z")]:
            pb = poisson_bracket(J1, F, G, CoverPoint(s, base))
            assert pb == pytest.approx(s * jacobi_bracket(J1, F, G, base), abs=1e-9)
            # weight one: doubling s doubles the bracket
            assert poisson_bracket(J1, F, G, CoverPoint(2 * s, base)) == pytest.approx(2 * pb, abs=1e-9)


def test_hamiltonian_fields_preserve_omega():
    # L_X omega = X^k d_k W + W d X + (d X)^T W, with dX by central differences
    ham = "z*q1 + p1^2*exp(z/2)"
    base = (0.3, -0.4, 0.8)
    s = 1.3

    def field(y):
        return hamiltonian_field(J1, ham, CoverPoint(float(y[0]), ChartPoint("J", tuple(y[1:]))))

    def w_flat(y):
        return omega(J1, CoverPoint(float(y[0]), ChartPoint("J", tuple(y[1:])))).ravel()

    y = np.array((s,) + base)
    x = field(y)
    dx = fd_gradient(field, y)  # dx[k, i] = d_i X^k
    dw = fd_gradient(w_flat, y).reshape(4, 4, 4)  # dw[i, j, k] = d_k W_ij
    w = omega(J1, CoverPoint(s, ChartPoint("J", base)))
    lie = dw @ x + dx.T @ w + w @ dx
    assert np.max(np.abs(lie)) <= 1e-6


def test_evolution_constant_rescale_agrees():
    model = ContactModel.build(J1, "z + 0.5*p1^2 + q1")
    point = ChartPoint("J", (0.5, 0.3, 0.7))
    r, r_new = evolution_diagnostic(model, 2.5, point)
    assert np.max(np.abs(r - r_new)) <= 1e-12


def test_evolution_nonconstant_rescale_differs():
    model = ContactModel.build(J1, "1")
    point = ChartPoint("J", (0.0, 1.0, 0.0))
    r, r_new = evolution_diagnostic(model, "exp(q1)", point)
    assert np.max(np.abs(r - r_new)) == pytest.approx(1.0, abs=1e-12)


def test_evolution_zero_hamiltonian():
    model = ContactModel.build(J1, "0")
    r, r_new = evolution_diagnostic(model, "exp(q1)", ChartPoint("J", (0.0, 1.0, 0.0)))
    assert np.all(r == 0.0) and np.all(r_new == 0.0)


def test_evolution_rejects_vanishing_rescale():
    model = ContactModel.build(J1, "1")
    with pytest.raises(SymplecticError):
        evolution_diagnostic(model, "q1", ChartPoint("J", (0.0, 0.0, 0.0)))


coord = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
fiber = st.floats(min_value=0.1, max_value=3.0, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(fiber, st.sampled_from([-1.0, 1.0]), coord, coord, coord)
def test_cover_field_projects_onto_contact_field(s, sign, z, q, p):
    model = ContactModel.build(J1, "z^2 - q1*p1 + cos(p1)")
    assert projection_check(model, cover(sign * s, z, q, p)) <= 1e-9
