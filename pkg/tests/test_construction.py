import math

import numpy as np
import pytest

from formcy.construction import (
    ConstructionParams,
    assemble_phi,
    build_u,
    build_v,
    construct,
    construct_product,
    solve_k,
    z_integral,
)
from formcy.torus import CompatibilityError, FieldError, TorusGeometry, ddbar


def test_z_at_zero_is_one():
    assert z_integral(0.0) == 1.0


@pytest.mark.parametrize("k", [0.1, 0.5, 0.8, 0.95])
def test_z_matches_closed_form(k):
    assert z_integral(k) == pytest.approx(1 / math.sqrt(1 - k * k), rel=1e-14)


def test_z_domain():
    with pytest.raises(ValueError):
        z_integral(1.0)
    with pytest.raises(ValueError):
        solve_k(1.2)


def test_grid_k_solves_discrete_condition():
    k = solve_k(0.1, points=64)
    assert z_integral(k, 64) == pytest.approx(10.0, rel=1e-13)
    assert abs(k - solve_k(0.1)) > 1e-14  # the trapezoid sum is not exact at this grid


def test_build_u_solves_product_equation():
    g = TorusGeometry.line(3, 128)
    delta = 0.5
    k = solve_k(delta, points=128)
    v = build_v(g, k)
    u = build_u(g, delta, k)
    lu = 1 + ddbar(u, 1, 1).samples.real
    lv = 1 + ddbar(v, 1, 1).samples.real
    np.testing.assert_allclose(lu * lv, delta, rtol=1e-12)
    assert lu.min() > 0 and lv.min() > 0


def test_build_u_rejects_wrong_k():
    g = TorusGeometry.line(3, 64)
    with pytest.raises(CompatibilityError):
        build_u(g, 0.5, 0.5)


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("delta", [0.3, 0.6, 0.9])
def test_construction_residuals_small_grid(n, delta):
    result = construct(ConstructionParams(n=n, delta=delta, grid=64))
    assert result.residuals["det_identity"] < 1e-12
    assert result.residuals["C0_spread"] < 1e-12
    assert result.C0 == pytest.approx(delta ** (-1 / (2 * (n - 1))), rel=1e-12)
    assert result.residuals["ricci_sup"] < 1e-9
    assert result.residuals["F_mean_max"] < 1e-12


def test_report_lines_carry_both_k():
    result = construct(ConstructionParams(n=3, delta=0.6, grid=64))
    text = "\n".join(result.report_lines())
    assert "k_grid = " in text and "k_closed_form = 0.8" in text


@pytest.mark.parametrize("factor", [None, [[2.0]], [[1.5, 0.2j], [-0.2j, 1.0]]])
def test_product_torus_construction(factor):
    n = 3 + (0 if factor is None else len(factor))
    result = construct_product(ConstructionParams(n=n, delta=0.4, grid=64), factor)
    assert result.residuals["det_identity"] < 1e-12
    assert result.residuals["C0_spread"] < 1e-12


def test_product_needs_three_torus_directions():
    with pytest.raises(ValueError):
        construct_product(ConstructionParams(n=4, delta=0.5, grid=64), np.eye(2))


def test_assemble_phi_needs_room():
    g = TorusGeometry.line(3, 8)
    with pytest.raises(FieldError):
        assemble_phi(g.zeros(), g.zeros(), offset=1)


@pytest.mark.parametrize("kwargs", [dict(delta=0.0), dict(delta=1.0), dict(n=2), dict(grid=10 + 1)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        ConstructionParams(**kwargs)
