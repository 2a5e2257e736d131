import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from formcy import forms, oracle
from formcy.forms import (
    FormN2,
    HermitianField,
    HolomorphicVolume,
    MetricField,
    PositivityError,
    PsiField,
    amgm_report,
    ddbar_to_hermitian,
    omega_norm_sq,
    power_map,
    random_metric,
    ricci_hermitian,
    root_extract,
)
from formcy.torus import FieldError, TorusGeometry, random_trig_field


def _sample_symbolic(g, comps, xs):
    fields = {}
    for key, expr in comps.items():
        fn = sp.lambdify(xs, expr, "numpy")
        fields[key] = g.sample(lambda x, fn=fn: fn(*[x.get(a, 0.0) for a in range(1, 2 * g.n + 1)]))
    return FormN2(g, fields)


def test_power_map_of_diagonal_metric():
    g = TorusGeometry.line(3, 8)
    omega = MetricField.constant(g, np.diag([1.0, 2.0, 3.0]))
    psi = power_map(omega).entries[0]
    np.testing.assert_allclose(psi, np.diag([6.0, 3.0, 2.0]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([3, 4, 5]))
def test_root_inverts_power(seed, n):
    g = TorusGeometry(n, (1, 2), (8, 8))
    omega = random_metric(g, np.random.default_rng(seed), amplitude=0.8)
    psi = power_map(omega)
    np.testing.assert_allclose(root_extract(psi).entries, omega.entries, atol=1e-12)
    np.testing.assert_allclose(psi.det(), omega.det() ** (n - 1), rtol=1e-11)


def test_root_refuses_indefinite():
    g = TorusGeometry.line(3, 8)
    bad = HermitianField.constant(g, np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(PositivityError):
        root_extract(bad)


def test_positivity_failure_reports_location():
    g = TorusGeometry.line(3, 8)
    entries = np.broadcast_to(np.eye(3, dtype=complex), (8, 3, 3)).copy()
    entries[5, 1, 1] = -0.5
    psi = PsiField.certified(g, entries)
    assert not psi.positive
    index, point = psi.failure
    assert index == (5,)
    assert point[1] == pytest.approx(2 * np.pi * 5 / 8)


def test_hermitian_field_rejects_non_hermitian():
    g = TorusGeometry.line(3, 8)
    with pytest.raises(FieldError):
        HermitianField.constant(g, np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]]))


@pytest.mark.parametrize("n", [3, 4])
def test_ddbar_matches_symbolic_oracle(n, rng):
    g = TorusGeometry(n, (1, 2, 3), (8, 8, 8))
    xs = oracle.coordinates(n)
    comps = oracle.random_sparse_form(n, xs, rng, g.active_axes, ncomponents=3, max_mode=1)
    numeric = ddbar_to_hermitian(_sample_symbolic(g, comps, xs)).entries.reshape(-1, n, n)
    idx = rng.choice(numeric.shape[0], size=20, replace=False)
    pts = np.zeros((20, 2 * n))
    for pos, axis in enumerate(g.active_axes):
        pts[:, axis - 1] = 2 * np.pi * np.unravel_index(idx, g.grid_shape)[pos] / 8
    exact = oracle.evaluate(oracle.ddbar_matrix(comps, n, xs), xs, pts)
    np.testing.assert_allclose(numeric[idx], exact, atol=1e-12)


def test_eta_power_gives_trace_form(rng):
    g = TorusGeometry(3, (1, 3), (16, 16))
    u = random_trig_field(g, rng, 2)
    F = ddbar_to_hermitian(FormN2.eta_power(u)).entries
    from formcy.torus import hessian

    H = hessian(u)
    closed = (np.trace(H, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) - np.swapaxes(H, -1, -2)) / 2
    np.testing.assert_allclose(F, closed, atol=1e-12)


def test_form_requires_reality(rng):
    g = TorusGeometry.line(3, 8)
    f = random_trig_field(g, rng, 2, real=False)
    with pytest.raises(FieldError):
        ddbar_to_hermitian(FormN2(g, {((1,), (2,)): f}))


def test_form_rejects_bad_index_sets():
    g = TorusGeometry.line(3, 8)
    with pytest.raises(FieldError):
        FormN2(g, {((1, 2), (1, 2)): g.zeros()})
    with pytest.raises(FieldError):
        FormN2(g, {((4,), (4,)): g.zeros()})


def test_norm_of_standard_volume_is_one():
    g = TorusGeometry.line(3, 8)
    np.testing.assert_allclose(omega_norm_sq(MetricField.standard(g)).samples, 1.0)
    scaled = MetricField.constant(g, 2 * np.eye(3))
    np.testing.assert_allclose(omega_norm_sq(scaled, HolomorphicVolume(2.0)).samples, 0.5)


def test_ricci_of_conformal_bump():
    # g = diag(e^{sin x1}, 1, 1): -d^2/dz1 dzbar1 sin x1 = sin(x1)/4
    g = TorusGeometry.line(3, 64)
    x = g.coordinate(1)
    entries = np.broadcast_to(np.eye(3, dtype=complex), (64, 3, 3)).copy()
    entries[:, 0, 0] = np.exp(np.sin(x))
    ric = ricci_hermitian(MetricField(g, entries)).entries
    np.testing.assert_allclose(ric[:, 0, 0].real, np.sin(x) / 4, atol=1e-12)
    assert np.max(np.abs(ric[:, 1:, :])) == 0.0


def test_amgm_rigid_only_at_zero(rng):
    g = TorusGeometry.line(3, 32)
    assert amgm_report(HermitianField.zeros(g), 1.0).verdict == "rigid"
    from formcy.verify import renormalized_perturbation

    B, c = renormalized_perturbation(g, rng)
    rep = amgm_report(B, c, check_mean_zero=False)
    assert rep.verdict != "rigid"
    assert rep.integral_gap > 0


def test_amgm_hypothesis_checks():
    g = TorusGeometry.line(3, 8)
    rep = amgm_report(HermitianField.constant(g, -0.5 * np.eye(3)), 0.125, check_mean_zero=False)
    assert rep.verdict == "hypothesis-violated"
    with pytest.raises(FieldError):
        amgm_report(HermitianField.constant(g, 0.1 * np.eye(3)), 1.1 ** 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.01, 0.9))
def test_amgm_pointwise_gap_nonnegative(seed, amp):
    from formcy.verify import renormalized_perturbation

    g = TorusGeometry(3, (1, 2), (8, 8))
    B, c = renormalized_perturbation(g, np.random.default_rng(seed), amplitude=amp)
    rep = amgm_report(B, c, check_mean_zero=False)
    assert rep.max_gap >= 0 and rep.integral_gap >= 0
    assert c >= 1.0


def test_normalize_to_identity(rng):
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    psi = A @ A.conj().T + np.eye(3)
    T = forms.normalize_to_identity(psi)
    np.testing.assert_allclose(T @ psi @ T.conj().T, np.eye(3), atol=1e-12)


def test_random_metric_is_positive(rng):
    g = TorusGeometry(4, (1, 5), (8, 8))
    omega = random_metric(g, rng, amplitude=0.9)
    assert np.all(omega.det() > 0)
    assert math.isclose(float(np.mean(np.trace(omega.entries, axis1=-2, axis2=-1).real)), 4, rel_tol=0.5)
