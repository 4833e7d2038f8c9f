import pytest
import itertools
import numpy as np
import kahlerflow.utils as utils

sizes = [17, 33]
orders = [2, 4]
kinds = ["latitude", "periodic"]

params = list(itertools.product(kinds, sizes, orders))


@pytest.mark.parametrize("kind, n, order", params)
def test_quadrature_annihilates_operator(kind, n, order):
    axis = utils.make_axis(kind, n, order)
    q = axis.quadrature
    assert abs(q.sum() - 1.0) < 1e-12, "quadrature weights should sum to one"
    residual = np.max(np.abs(q @ axis.operator_matrix.toarray()))
    assert residual < 1e-12 * axis.operator_norm, "q^T L should vanish"


@pytest.mark.parametrize("kind, n, order", params)
def test_constants_have_zero_hessian(kind, n, order):
    axis = utils.make_axis(kind, n, order)
    f = np.full((n, 3), 0.7)
    assert np.max(np.abs(axis.operator(f, axis=0))) < 1e-10
    assert np.max(np.abs(axis.gradient(f, axis=0))) < 1e-10
    if order == 2:
        assert np.all(axis.operator(f, axis=0) == 0.0), "second order stencils are exact on constants"


@pytest.mark.parametrize("order", orders)
def test_latitude_operator_converges(order):
    # L cos(theta) = -2 cos(theta), including the pole rows
    errors = []
    for n in (33, 65):
        axis = utils.LatitudeAxis(n, order)
        exact = -2.0 * np.cos(axis.nodes)
        errors.append(np.max(np.abs(axis.operator(np.cos(axis.nodes)) - exact)))
    assert errors[1] < 1e-2
    assert errors[0] / errors[1] > 3.0, f"no convergence: {errors}"


def test_fourth_order_is_more_accurate():
    n = 33
    second = utils.LatitudeAxis(n, 2)
    fourth = utils.LatitudeAxis(n, 4)
    f = np.cos(second.nodes) ** 2
    # L cos^2 = 2 - 6 cos^2
    exact = 2.0 - 6.0 * np.cos(second.nodes) ** 2
    assert np.max(np.abs(fourth.operator(f) - exact)) < np.max(np.abs(second.operator(f) - exact))


def test_periodic_operator():
    axis = utils.PeriodicAxis(64, 4)
    f = np.sin(axis.nodes)
    assert np.max(np.abs(axis.operator(f) + 2.0 * np.pi * f)) < 1e-4


def test_periodic_quadrature_is_uniform():
    axis = utils.PeriodicAxis(20)
    assert np.allclose(axis.quadrature, 1.0 / 20)


def test_integrate_equal_columns_bitwise():
    axis = utils.LatitudeAxis(17)
    column = np.exp(np.cos(axis.nodes))
    f = np.repeat(column[:, None], 5, axis=1)
    values = axis.integrate(f, axis=0)
    assert np.all(values == values[0])


def test_round_fibre_diameter():
    # meridian of a0 * omega_rnd has length pi sqrt(a0 / 2), and so does half the equator
    axis = utils.LatitudeAxis(17)
    a0 = 3.0
    coeff = np.full(17, a0)
    assert abs(axis.meridian_length(coeff) - np.pi * np.sqrt(a0 / 2.0)) < 1e-12
    assert abs(axis.diameter_surrogate(coeff) - np.pi * np.sqrt(a0 / 2.0)) < 1e-12


def test_invalid_stencil_order():
    with pytest.raises(ValueError):
        utils.LatitudeAxis(17, 3)
    with pytest.raises(ValueError):
        utils.make_axis("hyperbolic", 17)
