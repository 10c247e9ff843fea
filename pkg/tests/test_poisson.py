import math

import numpy as np
import pytest

from rangelab.domain import DomainSpec
from rangelab.errors import DomainError
from rangelab.poisson import (evaluate_at, hierarchy_residuals, laplacian, limit_constant,
                              predict_limit_moments, solve_hierarchy)


def square_u1(x, y, terms=199):
    # sum over odd m, n of 32 / (pi^4 m n (m^2 + n^2)) sin(m pi x) sin(n pi y)
    m = np.arange(1, terms + 1, 2)
    M, Nn = np.meshgrid(m, m, indexing="ij")
    c = 32 / (math.pi ** 4 * M * Nn * (M ** 2 + Nn ** 2))
    return float((c * np.sin(M * math.pi * x) * np.sin(Nn * math.pi * y)).sum())


def test_disk_radial_solutions():
    f = solve_hierarchy(DomainSpec.ball((0, 0), 1), 1 / 64, 2)
    assert evaluate_at(f, (0, 0), 1) == pytest.approx(0.5, abs=1e-10)
    assert evaluate_at(f, (0.5, 0), 1) == pytest.approx((1 - 0.25) / 2, abs=1e-3)
    assert evaluate_at(f, (0, 0), 2) == pytest.approx(3 / 8, abs=5e-4)


def test_ball3_first_moment_is_exact():
    f = solve_hierarchy(DomainSpec.ball((0, 0, 0), 1), 1 / 16, 2)
    assert evaluate_at(f, (0, 0, 0), 1) == pytest.approx(1 / 3, abs=1e-10)
    # u2(0) = (d + 4) / (d^2 (d + 2)) = 7/45 in d = 3
    assert evaluate_at(f, (0, 0, 0), 2) == pytest.approx(7 / 45, abs=3e-3)


def test_square_against_series():
    f = solve_hierarchy(DomainSpec.unit_square(), 1 / 128, 1)
    for a in [(0.5, 0.5), (0.25, 0.5), (0.1, 0.8)]:
        assert evaluate_at(f, a, 1) == pytest.approx(square_u1(*a), abs=2e-5)


def test_second_order_convergence_on_disk():
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        f = solve_hierarchy(DomainSpec.ball((0, 0), 1), h, 2)
        errs.append(abs(evaluate_at(f, (0, 0), 2) - 0.375))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > 1.7


def test_residuals_are_small():
    f = solve_hierarchy(DomainSpec.cardioid(), 1 / 128, 3)
    assert max(f.residuals) <= 1e-10
    assert max(hierarchy_residuals(f)) < 1e-9
    assert np.all(f.u(1)[f.inside] > 0)
    # moments are ordered by Jensen: u2 >= u1^2
    assert np.all(f.u(2)[f.inside] >= f.u(1)[f.inside] ** 2 - 1e-12)


def test_polygon_and_cube():
    tri = DomainSpec.polygon([(0, 0), (1, 0), (0, 1)])
    f = solve_hierarchy(tri, 1 / 64, 1)
    # inscribed-disk comparison: u1 at the incentre is between the disk value and the square value
    r = 1 / (2 + math.sqrt(2))
    u = evaluate_at(f, (r, r), 1)
    assert r ** 2 / 2 < u < square_u1(0.5, 0.5)
    g = solve_hierarchy(DomainSpec.cube(3), 1 / 32, 1)
    assert evaluate_at(g, (0.5, 0.5, 0.5), 1) == pytest.approx(0.11226, abs=2e-4)


def test_laplacian_exact_on_quadratics():
    spec = DomainSpec.ball((0, 0), 1)
    L, origin, inside = laplacian(spec, 1 / 16)
    idx = np.argwhere(inside)
    x = origin + idx / 16
    u = 1 - (x ** 2).sum(1)
    assert np.abs(L @ u + 4).max() < 1e-9


def test_evaluate_outside_raises():
    f = solve_hierarchy(DomainSpec.unit_square(), 1 / 32, 1)
    with pytest.raises(DomainError):
        evaluate_at(f, (1.5, 0.5))


def test_too_coarse():
    with pytest.raises(DomainError):
        solve_hierarchy(DomainSpec.unit_square(), 1 / 8, 1)


def test_limit_constants():
    p0 = 0.3405
    assert limit_constant(3, "range", p0=p0) == pytest.approx(1.5 * (1 - p0))
    assert limit_constant(3, "range", p0=p0, convention="cross-check") == pytest.approx(3 * (1 - p0))
    assert limit_constant(2, "range") == pytest.approx(math.pi)
    assert limit_constant(2, "multirange", p=1) == pytest.approx(2 * math.pi ** 2)
    assert limit_constant(2, "multirange", p=1, convention="cross-check") == pytest.approx(math.pi ** 2 / 2)
    assert limit_constant(3, "exit-time") == 3.0
    with pytest.raises(ValueError):
        limit_constant(3, "range")


def test_prediction():
    f = solve_hierarchy(DomainSpec.unit_square(), 1 / 64, 2)
    pr = predict_limit_moments(f, (0.5, 0.5), 2, 2, "exit-time")
    assert pr.predicted == pytest.approx(4 * evaluate_at(f, (0.5, 0.5), 2))
