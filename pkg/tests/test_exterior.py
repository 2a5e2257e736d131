"""Sign tables against the sympy exterior algebra, which shares no code with them."""
import itertools
import math

import numpy as np
import pytest
import sympy as sp
from sympy.combinatorics import Permutation

from formcy import exterior, oracle


def test_permutation_sign_small_cases():
    assert exterior.permutation_sign([0, 1, 2]) == 1
    assert exterior.permutation_sign([1, 0, 2]) == -1
    assert exterior.permutation_sign([2, 0, 1]) == 1
    assert exterior.permutation_sign([0, 0]) == 0


@pytest.mark.parametrize("seq", list(itertools.permutations(range(5))))
def test_permutation_sign_matches_sympy(seq):
    assert exterior.permutation_sign(seq) == Permutation(list(seq)).signature()


def test_wedge_anticommutes():
    sign_ab, mono = exterior.wedge((exterior.dz(1),), (exterior.dzbar(2),))
    sign_ba, mono2 = exterior.wedge((exterior.dzbar(2),), (exterior.dz(1),))
    assert mono == mono2 and sign_ab == -sign_ba
    assert exterior.wedge((exterior.dz(1),), (exterior.dz(1),)) == (0, ())


@pytest.mark.parametrize("n", [3, 4, 5])
def test_ddbar_terms_touch_each_entry_once_per_pair(n):
    for P in exterior.subsets(n, n - 2):
        for Q in exterior.subsets(n, n - 2):
            terms = exterior.ddbar_terms(n, P, Q)
            assert len(terms) == 4
            assert len({(p, q) for p, q, *_ in terms}) == 4
            assert all(c in (1, -1) for *_, c in terms)


@pytest.mark.parametrize("n", [3, 4])
def test_power_map_matches_symbolic_expansion(n, rng):
    A = rng.integers(-2, 3, size=(n, n)) + 1j * rng.integers(-2, 3, size=(n, n))
    g = np.eye(n) * (n + 3) + A @ A.conj().T
    sym = sp.Matrix(n, n, lambda i, j: sp.nsimplify(g[i, j].real) + sp.I * sp.nsimplify(g[i, j].imag))
    expected = np.array(oracle.power_map(sym).evalf(), dtype=complex)
    from formcy.forms import power_matrix

    np.testing.assert_allclose(power_matrix(g[None])[0], expected, rtol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_eta_ansatz_table_closed_form(n):
    # F = (tr H I - H^T)/(n-1): the table must hold these entries exactly
    T = exterior.eta_ansatz_table(n)
    expected = np.zeros((n,) * 4)
    for p, q, a, b in itertools.product(range(n), repeat=4):
        expected[p, q, a, b] = ((p == q) * (a == b) - (a == q) * (b == p)) / (n - 1)
    np.testing.assert_allclose(T, expected, atol=1e-15)


@pytest.mark.parametrize("n", [3, 4])
def test_eta_power_table_counts(n):
    # sum_S paired(S,S) ^ dz_a ^ dzbar_a ^ dz_b ^ dzbar_b over ordered (a, b) with a != b
    T = exterior.eta_power_table(n, (False, True, False, True))
    for a in range(n):
        for b in range(n):
            expected = 0 if a == b else 1
            assert T[a, a, b, b] == expected
    assert np.count_nonzero(T) == 2 * n * (n - 1)
    assert math.isclose(np.abs(T).sum(), 2 * n * (n - 1))
