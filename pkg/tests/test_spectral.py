import math

import numpy as np
import pytest

from rangelab import spectral
from rangelab.domain import DomainSpec
from rangelab.errors import DomainError, SizeExceeded
from rangelab.spectral import (conductance_table, cube_domain, eigenvalues, exact_hitting_solve,
                               green_series, hitting_probability, hitting_table_series,
                               inverse_conductance_table, local_conductance, midband_bounds,
                               multirange_bound_check, orthogonality_defect, sine_table)


def test_sine_table_orthogonality():
    for N in (2, 3, 8, 64, 257):
        assert orthogonality_defect(N) < 1e-10 * N


def test_eigenvalue_exact_zero_cosine():
    lam = eigenvalues(4, 2)
    assert lam[1, 1] == 1.0


def test_tiny_conductances():
    # N=2: the only interior site; every step exits
    assert 1.0 / green_series(2, (1, 1), (1, 1)) == 1.0
    assert exact_hitting_solve(cube_domain(2), (1, 1)).g == 1.0
    # N=3: two of the four steps from (1,1) stay inside, and each such
    # neighbour hits (1,1) w.p. 2/7 (below), so the return probability is 1/7
    assert 1.0 / green_series(3, (1, 1), (1, 1)) == pytest.approx(6 / 7, abs=1e-12)
    assert exact_hitting_solve(cube_domain(3), (1, 1)).g == pytest.approx(6 / 7, abs=1e-12)
    t = conductance_table(3)
    assert np.allclose(t.g, 6 / 7)


def test_hitting_n3_closed_form():
    # P_(1,2)((1,1)): neighbours of (1,2) inside are (1,1) and (2,2)
    # h(1,2) = 1/4 + h(2,2)/4, h(2,2) = h(1,2)/2 by symmetry -> h = 2/7
    assert hitting_probability(3, (1, 2), (1, 1)) == pytest.approx(2 / 7, abs=1e-12)
    assert hitting_probability(3, (2, 2), (1, 1)) == pytest.approx(1 / 7, abs=1e-12)


@pytest.mark.parametrize("N", [4, 7, 10])
def test_series_equals_solve_for_all_pairs(N):
    dom = cube_domain(N)
    for x in [(1, 1), (N // 2, N // 2), (1, N - 1), (2, N // 3 + 1)]:
        sol = exact_hitting_solve(dom, x)
        ser = hitting_table_series(N, x)
        idx = sol.points - 1
        assert np.abs(ser[idx[:, 0], idx[:, 1]] - sol.values).max() < 1e-12
        assert sol.g == pytest.approx(1 / green_series(N, x, x), abs=1e-12)


def test_series_equals_solve_in_d3():
    dom = cube_domain(6, 3)
    x = (2, 3, 3)
    sol = exact_hitting_solve(dom, x)
    for b in [(1, 1, 1), (3, 3, 3), (5, 2, 4)]:
        assert sol(b) == pytest.approx(hitting_probability(6, b, x), abs=1e-12)
    assert 1 / inverse_conductance_table(6, 3)[1, 2, 2] == pytest.approx(sol.g, abs=1e-12)


def test_hitting_table_is_harmonic():
    sol = exact_hitting_solve(cube_domain(9), (4, 5))
    assert sol.harmonicity_residual() < 1e-13
    assert sol((4, 5)) == 1.0 and sol((0, 5)) == 0.0


def test_solve_on_other_shapes():
    dom = DomainSpec.ball((0.5, 0.5), 0.5).lattice(12)
    sol = exact_hitting_solve(dom, (6, 6))
    assert 0 < sol.g < 1
    assert sol.harmonicity_residual() < 1e-12
    assert np.all((sol.values >= -1e-14) & (sol.values <= 1 + 1e-14))


def test_size_cap():
    with pytest.raises(SizeExceeded):
        exact_hitting_solve(cube_domain(50), (25, 25), max_unknowns=1000)


def test_interior_checks():
    with pytest.raises(DomainError):
        green_series(5, (0, 1), (2, 2))


def test_conductance_symmetry_and_monotone_in_n():
    t = conductance_table(20)
    assert np.allclose(t.g, t.g.T) and np.allclose(t.g, t.g[::-1, :])
    mids = [1 / conductance_table(N).at((N // 2, N // 2)) for N in (8, 16, 32, 64)]
    assert all(b > a for a, b in zip(mids, mids[1:]))


def test_local_conductance_bounds_global():
    # the inscribed box is smaller, so escape is easier
    N = 32
    g = conductance_table(N).at((16, 16))
    assert local_conductance(20) >= g
    assert local_conductance(21) == local_conductance(20)


def test_midband_bounds_small():
    r = midband_bounds(64)
    assert r["midpoint_ok"] and r["midband_ok"]
    assert r["midband_min_inverse"] <= r["midpoint_inverse"]


def test_bound_check_mc():
    bc = multirange_bound_check(12, (3, 4), (6, 6), 1, 40_000, 3)
    assert bc.ok and bc.bound == pytest.approx(bc.g * bc.P)
    assert bc.P == pytest.approx(hitting_probability(12, (3, 4), (6, 6)))


def test_fault_injection_breaks_equivalence():
    spectral.FAULTS.add("sine-table")
    try:
        ser = hitting_table_series(6, (3, 3))
    finally:
        spectral.FAULTS.discard("sine-table")
    sol = exact_hitting_solve(cube_domain(6), (3, 3))
    idx = sol.points - 1
    assert np.abs(ser[idx[:, 0], idx[:, 1]] - sol.values).max() > 1e-6
