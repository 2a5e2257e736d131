import numpy as np
import pytest
import sympy as sp

from formcy import exterior, forms, oracle, solver
from formcy.verify import EXACT_CHECKS, REGISTRY, SuiteConfig, run_suite


_CACHED = (exterior.ddbar_terms, exterior._eta_power_table, exterior.eta_ansatz_table)


def _clear_tables():
    for fn in _CACHED:
        fn.cache_clear()


@pytest.fixture
def fresh_tables():
    _clear_tables()
    yield
    _clear_tables()


def _run(name, **kwargs):
    return run_suite(SuiteConfig(checks=(name,), **kwargs)).results[0]


def test_full_suite_passes_default():
    report = run_suite(SuiteConfig())
    failing = [r.name for r in report.results if not r.passed]
    assert report.passed, failing
    assert len(report.results) == len(REGISTRY)


@pytest.mark.parametrize("n", [3, 4])
def test_exact_checks_pass_n3_n4(n):
    report = run_suite(SuiteConfig(n=n, grid=(16, 16), checks=EXACT_CHECKS))
    assert report.passed, [(r.name, r.measured) for r in report.results if not r.passed]


def test_unknown_check_fails_closed():
    result = _run("no-such-check")
    assert not result.passed and "unknown" in result.anchor


def test_exception_fails_closed(monkeypatch):
    def boom(cfg):
        raise RuntimeError("injected")

    anchor, _ = REGISTRY["power-root-roundtrip"]
    monkeypatch.setitem(REGISTRY, "power-root-roundtrip", (anchor, boom))
    result = _run("power-root-roundtrip")
    assert not result.passed and "injected" in result.detail


def test_tolerance_override_can_fail_a_check():
    assert _run("power-map-determinant").passed
    assert not _run("power-map-determinant", tolerances={"power-map-determinant": 0.0}).passed


def test_report_text_is_line_oriented():
    report = run_suite(SuiteConfig(checks=("ddbar-mean-zero", "power-root-roundtrip")))
    text = report.text()
    assert "ddbar-mean-zero" in text and "power-root-roundtrip" in text
    assert all("\t" not in line for line in text.splitlines())


def test_rng_streams_are_independent_per_check():
    cfg = SuiteConfig(seed=3)
    a = cfg.rng("one").standard_normal(4)
    b = cfg.rng("two").standard_normal(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, SuiteConfig(seed=3).rng("one").standard_normal(4))


# -- mutation sensitivity ---------------------------------------------------------

def test_flipped_orientation_sign_is_caught(monkeypatch, fresh_tables):
    assert _run("ddbar-symbolic-oracle").passed
    monkeypatch.setattr(exterior, "sign_s", lambda p, q: 1 if p >= q else -1)
    _clear_tables()
    assert not _run("ddbar-symbolic-oracle").passed


def test_dropped_factorial_weight_is_caught(monkeypatch, fresh_tables):
    assert _run("eta-ansatz-table").passed
    original = exterior.eta_ansatz_table

    def unweighted(n):
        return original(n) * (n - 1)

    monkeypatch.setattr(solver.exterior, "eta_ansatz_table", unweighted)
    assert not _run("eta-ansatz-table").passed


def test_missing_weighted_projection_is_caught(monkeypatch):
    # The solver's right-hand sides stop being mean-zero against omega_u^n,
    # which the linear solve refuses.  Neither the weak-form identity (it holds
    # for the unprojected operator and any v) nor the Taylor check (the dropped
    # constant is second order in u at the suite's base point) can see this.
    assert _run("linear-solve-roundtrip").passed and _run("trivial-source").passed
    monkeypatch.setattr(solver.AnsatzState, "project", lambda self, values: values)
    assert not _run("linear-solve-roundtrip").passed
    assert not _run("trivial-source").passed


def test_untransposed_power_map_is_caught(monkeypatch):
    # a metric with complex off-diagonal entries tells g^{-1} from g^{-T}
    g = np.array([[2.0, 0.5j, 0], [-0.5j, 1.5, 0.2], [0, 0.2, 1.0]])
    sym = sp.Matrix(3, 3, lambda i, j: sp.nsimplify(g[i, j].real) + sp.I * sp.nsimplify(g[i, j].imag))
    exact = np.array(oracle.power_map(sym).evalf(), dtype=complex)
    np.testing.assert_allclose(forms.power_matrix(g[None])[0], exact, rtol=1e-12)

    def wrong(mats):
        return np.linalg.det(mats)[..., None, None] * np.linalg.inv(mats)

    monkeypatch.setattr(forms, "power_matrix", wrong)
    assert not np.allclose(forms.power_matrix(g[None])[0], exact, rtol=1e-6)


def test_wrong_continuum_k_is_caught(monkeypatch):
    # building u with k off by 1e-6 breaks the discrete solvability of the construction
    from formcy import construction

    real = construction.solve_k
    monkeypatch.setattr(construction, "solve_k", lambda delta, points=None, **kw: real(delta) + 1e-6)
    assert not _run("construction-determinant").passed


def test_same_config_gives_identical_report_body():
    cfg = SuiteConfig(seed=3, checks=EXACT_CHECKS + ("weak-form-adjoint", "linearization-order"))
    first, second = run_suite(cfg).text(), run_suite(cfg).text()
    strip = lambda text: [line for line in text.splitlines() if not line.startswith("env.")]  # noqa: E731
    assert strip(first) == strip(second)
    assert any(line.startswith("env.") for line in first.splitlines())


def test_every_check_carries_an_anchor():
    assert all(anchor.strip() for anchor, _ in REGISTRY.values())
