"""Named identity and property checks with a plain-text report.

Every check draws its random inputs from a generator seeded by the suite
seed and the check name, so a report is reproducible check by check and
does not depend on which other checks ran.  Requesting a check that does
not exist is a failure, never a silent skip.
"""
from __future__ import annotations

import math
import platform
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exterior, forms, oracle
from .construction import ConstructionParams, construct
from .forms import FormN2, HermitianField, HolomorphicVolume, MetricField
from .solver import (
    AnsatzState,
    Background,
    SolverConfig,
    SourceTerm,
    ansatz_F,
    apply_L,
    bilinear_A,
    kernel_margin,
    m_map,
    solve_L,
)
from .torus import (
    ScalarField,
    TorusGeometry,
    integrate,
    random_trig_field,
    second_derivative,
)


@dataclass(frozen=True)
class SuiteConfig:
    n: int = 3
    axes: tuple[int, ...] = (1, 3)
    grid: tuple[int, ...] = (32, 32)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    checks: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.axes) != len(self.grid):
            raise ValueError("need one grid size per active axis")

    @property
    def geometry(self) -> TorusGeometry:
        return TorusGeometry(self.n, tuple(self.axes), tuple(self.grid))

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


@dataclass(frozen=True)
class CheckResult:
    name: str
    anchor: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def lines(self) -> list[str]:
        out = [f"check.{self.name}.anchor = {self.anchor}",
               f"check.{self.name}.measured = {self.measured:.6e}",
               f"check.{self.name}.tolerance = {self.tolerance:.3e}",
               f"check.{self.name}.status = {'pass' if self.passed else 'FAIL'}"]
        if self.detail:
            out.append(f"check.{self.name}.detail = {self.detail}")
        return out


@dataclass(frozen=True)
class SuiteReport:
    config: SuiteConfig
    results: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def body_lines(self) -> list[str]:
        c = self.config
        lines = [f"suite.n = {c.n}",
                 "suite.axes = " + " ".join(map(str, c.axes)),
                 "suite.grid = " + " ".join(map(str, c.grid)),
                 f"suite.seed = {c.seed}"]
        for r in self.results:
            lines += r.lines()
        failed = [r.name for r in self.results if not r.passed]
        lines.append(f"suite.checks = {len(self.results)}")
        lines.append("suite.failed = " + (" ".join(failed) if failed else "none"))
        lines.append(f"suite.status = {'pass' if self.passed else 'FAIL'}")
        return lines

    def text(self) -> str:
        env = [f"env.python = {platform.python_version()}", f"env.numpy = {np.__version__}",
               f"env.platform = {platform.machine()}"]
        return "\n".join(self.body_lines() + env) + "\n"


Check = Callable[[SuiteConfig], CheckResult]
REGISTRY: dict[str, tuple[str, Check]] = {}


def check(name: str, anchor: str):
    def register(fn: Check) -> Check:
        REGISTRY[name] = (anchor, fn)
        return fn
    return register


def _result(cfg: SuiteConfig, name: str, measured: float, default_tol: float, detail: str = "",
            passed: bool | None = None) -> CheckResult:
    tol = cfg.tol(name, default_tol)
    ok = (measured < tol) if passed is None else passed
    return CheckResult(name, REGISTRY[name][0], float(measured), tol, bool(ok and math.isfinite(measured)),
                       detail)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def _random_phi(geometry: TorusGeometry, rng: np.random.Generator, amplitude: float = 0.05,
                max_mode: int = 2) -> FormN2:
    """Random real form with every diagonal component and one off-diagonal pair."""
    n = geometry.n
    subs = exterior.subsets(n, n - 2)
    comps = {(S, S): random_trig_field(geometry, rng, max_mode, amplitude) for S in subs}
    P, Q = subs[0], subs[-1]
    if P != Q:
        off = random_trig_field(geometry, rng, max_mode, amplitude, real=False)
        comps[(P, Q)] = off
        comps[(Q, P)] = off.conj()
    return FormN2(geometry, comps)


# -- exact identities ------------------------------------------------------------

@check("holomorphic-hessian-integrates-to-zero",
       "torus integrals of d^2 f / dz_i dz_j and d^2 f / dz_i dzbar_j vanish")
def _hessian_integrals(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    f = random_trig_field(g, cfg.rng("holomorphic-hessian-integrates-to-zero"), 3, 1.0, real=False)
    worst = 0.0
    for i in range(1, g.n + 1):
        for j in range(1, g.n + 1):
            for bar in (False, True):
                worst = max(worst, abs(integrate(second_derivative(f, i, j, False, bar))))
    return _result(cfg, "holomorphic-hessian-integrates-to-zero", worst / g.volume, 1e-10)


@check("power-root-roundtrip", "root extraction inverts the power map on positive metrics")
def _roundtrip(cfg: SuiteConfig) -> CheckResult:
    omega = forms.random_metric(cfg.geometry, cfg.rng("power-root-roundtrip"), amplitude=0.5)
    back = forms.root_extract(forms.power_map(omega))
    return _result(cfg, "power-root-roundtrip", _rel(back.entries, omega.entries), 1e-10)


@check("power-map-determinant", "det of the (n-1,n-1) coefficient matrix is det(g)^(n-1)")
def _power_det(cfg: SuiteConfig) -> CheckResult:
    omega = forms.random_metric(cfg.geometry, cfg.rng("power-map-determinant"), amplitude=0.5)
    lhs = forms.power_map(omega).det()
    return _result(cfg, "power-map-determinant", _rel(lhs, omega.det() ** (cfg.n - 1)), 1e-10)


@check("ddbar-mean-zero", "entries of the coefficient matrix of (i/2) ddbar phi integrate to zero")
def _f_mean(cfg: SuiteConfig) -> CheckResult:
    phi = _random_phi(cfg.geometry, cfg.rng("ddbar-mean-zero"), amplitude=1.0)
    F = forms.ddbar_to_hermitian(phi).entries
    means = np.mean(F, axis=tuple(range(cfg.geometry.ndim)))
    return _result(cfg, "ddbar-mean-zero", float(np.max(np.abs(means))) / max(np.max(np.abs(F)), 1e-300),
                   1e-10)


@check("ddbar-symbolic-oracle", "signed-basis ddbar agrees with brute-force exterior algebra")
def _oracle(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    rng = cfg.rng("ddbar-symbolic-oracle")
    xs = oracle.coordinates(g.n)
    worst = 0.0
    for _ in range(2):
        comps = oracle.random_sparse_form(g.n, xs, rng, g.active_axes, ncomponents=3, max_mode=1)
        symbolic = oracle.ddbar_matrix(comps, g.n, xs)
        fields = {}
        for key, expr in comps.items():
            fn = oracle.sp.lambdify(xs, expr, "numpy")
            fields[key] = g.sample(lambda x, fn=fn: fn(*[x.get(a, 0.0) for a in range(1, 2 * g.n + 1)]))
        numeric = forms.ddbar_to_hermitian(FormN2(g, fields)).entries
        flat = numeric.reshape(-1, g.n, g.n)
        idx = rng.choice(flat.shape[0], size=min(25, flat.shape[0]), replace=False)
        pts = np.zeros((len(idx), 2 * g.n))
        for pos, axis in enumerate(g.active_axes):
            grid_index = np.unravel_index(idx, g.grid_shape)[pos]
            pts[:, axis - 1] = 2 * np.pi * grid_index / g.grid_shape[pos]
        exact = oracle.evaluate(symbolic, xs, pts)
        worst = max(worst, float(np.max(np.abs(flat[idx] - exact))))
    return _result(cfg, "ddbar-symbolic-oracle", worst, 1e-12)


@check("eta-ansatz-table", "u eta^(n-2) gives F = (tr H I - H^T)/(n-1) with H the complex Hessian")
def _ansatz(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    u = random_trig_field(g, cfg.rng("eta-ansatz-table"), 3, 1.0)
    table = ansatz_F(u)
    via_form = forms.ddbar_to_hermitian(FormN2.eta_power(u)).entries
    H = np.zeros_like(table)
    for a in range(1, g.n + 1):
        for b in range(1, g.n + 1):
            H[..., a - 1, b - 1] = second_derivative(u, a, b).samples
    closed = (np.trace(H, axis1=-2, axis2=-1)[..., None, None] * np.eye(g.n)
              - np.swapaxes(H, -1, -2)) / (g.n - 1)
    scale = max(float(np.max(np.abs(closed))), 1e-300)
    worst = max(float(np.max(np.abs(table - closed))), float(np.max(np.abs(via_form - closed)))) / scale
    return _result(cfg, "eta-ansatz-table", worst, 1e-10)


@check("kahler-trace-pairing", "int tr(Psi_0^-1 F) omega_0^n = n int omega_0 ^ (i/2) ddbar phi = 0 for Kahler omega_0")
def _trace_pairing(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    rng = cfg.rng("kahler-trace-pairing")
    A = rng.standard_normal((g.n, g.n)) + 1j * rng.standard_normal((g.n, g.n))
    g0 = np.eye(g.n) + 0.2 * (A @ A.conj().T)
    omega0 = MetricField.constant(g, g0)
    psi0 = forms.power_map(omega0).entries
    F = forms.ddbar_to_hermitian(_random_phi(g, rng, amplitude=1.0)).entries
    n = g.n
    trace = np.einsum("...ij,...ji->...", np.linalg.inv(psi0), F).real
    lhs = math.factorial(n) * float(np.mean(trace * omega0.det())) * g.volume
    wedge = math.factorial(n - 1) * np.einsum("...ij,...ij->...", omega0.entries, F).real
    rhs = n * float(np.mean(wedge)) * g.volume
    scale = math.factorial(n) * float(np.mean(np.abs(trace) * omega0.det())) * g.volume
    measured = max(abs(lhs), abs(rhs), abs(lhs - rhs)) / max(scale, 1e-300)
    return _result(cfg, "kahler-trace-pairing", measured, 1e-10)


@check("determinant-amgm-bound",
       "(det Psi_phi / det Psi_0)^(1/n) <= 1 + tr(Psi_0^-1 F)/n pointwise on the cone")
def _amgm_bound(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    rng = cfg.rng("determinant-amgm-bound")
    psi0 = forms.power_map(forms.random_metric(g, rng, amplitude=0.3)).entries
    F = forms.ddbar_to_hermitian(_random_phi(g, rng, amplitude=0.1)).entries
    psi = forms.PsiField.certified(g, psi0 + F).require_positive()
    ratio = (psi.det() / forms.det(psi0)) ** (1.0 / g.n)
    bound = 1.0 + np.einsum("...ij,...ji->...", np.linalg.inv(psi0), F).real / g.n
    violation = float(np.max(ratio - bound))
    return _result(cfg, "determinant-amgm-bound", max(violation, 0.0), 1e-12,
                   detail=f"min slack {float(np.min(bound - ratio)):.3e}")


@check("torus-amgm-rigidity", "mean-zero B with det(I+B) = c >= 1 forces B = 0")
def _rigidity(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    rng = cfg.rng("torus-amgm-rigidity")
    zero = forms.amgm_report(HermitianField.zeros(g), 1.0)
    worst_gap = math.inf
    rigid = 0
    for _ in range(5):
        B, c = renormalized_perturbation(g, rng)
        rep = forms.amgm_report(B, c, check_mean_zero=False)
        rigid += rep.verdict == "rigid"
        worst_gap = min(worst_gap, rep.integral_gap / rep.volume)
    ok = zero.verdict == "rigid" and rigid == 0 and worst_gap > 1e-6
    return _result(cfg, "torus-amgm-rigidity", worst_gap, 1e-6, passed=ok,
                   detail=f"zero verdict {zero.verdict}; nonzero samples called rigid: {rigid}")


def renormalized_perturbation(geometry: TorusGeometry, rng: np.random.Generator,
                              amplitude: float = 0.5) -> tuple[HermitianField, float]:
    """A random mean-zero hermitian ``B`` rescaled pointwise so ``det(I + B)`` is constant.

    The rescaling ``I + B -> (c / det(I + B))^{1/n} (I + B)`` with
    ``c = max(1, max det(I + B))`` keeps positivity and makes ``c >= 1``.
    """
    n = geometry.n
    entries = np.zeros(geometry.grid_shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            re = random_trig_field(geometry, rng, 2, 1.0).samples.real
            im = random_trig_field(geometry, rng, 2, 1.0).samples.real if i != j else 0.0
            entries[..., i, j] = re + 1j * im
            entries[..., j, i] = re - 1j * im
    entries -= np.mean(entries, axis=tuple(range(geometry.ndim)))
    radius = float(np.max(np.abs(np.linalg.eigvalsh(entries))))
    mats = np.eye(n) + amplitude / radius * entries
    dets = forms.det(mats)
    c = max(1.0, float(np.max(dets)))
    mats = mats * ((c / dets) ** (1.0 / n))[..., None, None]
    return HermitianField(geometry, mats - np.eye(n)), c


# -- geometric identities ----------------------------------------------------------

@check("volume-ratio-identity",
       "det omega / det omega_0 = |Omega|^2_omega_0 / |Omega|^2_omega = e^M int omega^n / int omega_0^n")
def _volume_ratio(cfg: SuiteConfig) -> CheckResult:
    g = cfg.geometry
    rng = cfg.rng("volume-ratio-identity")
    bg = Background(forms.random_metric(g, rng, amplitude=0.2), HolomorphicVolume(1.3 - 0.4j))
    state = AnsatzState.at(random_trig_field(g, rng, 2, 0.02), bg)
    ratio = state.weight / bg.det0
    norms = forms.omega_norm_sq(bg.omega0, bg.Omega).samples.real / \
        forms.omega_norm_sq(state.omega, bg.Omega).samples.real
    volumes = float(np.mean(state.weight)) / float(np.mean(bg.det0))
    via_m = np.exp(m_map(state).samples.real) * volumes
    return _result(cfg, "volume-ratio-identity", max(_rel(norms, ratio), _rel(via_m, ratio)), 1e-10)


@check("norm-constant-iff-ricci-flat",
       "constant |Omega|_omega is equivalent to vanishing Chern-Ricci curvature")
def _norm_ricci(cfg: SuiteConfig) -> CheckResult:
    size = cfg.grid[0]
    result = construct(ConstructionParams(n=cfg.n, delta=0.6, grid=size))
    flat_ric = result.residuals["ricci_sup"]
    spread = result.residuals["C0_spread"]
    line = TorusGeometry.line(cfg.n, size)
    bumped = np.broadcast_to(np.eye(cfg.n, dtype=complex), line.grid_shape + (cfg.n, cfg.n)).copy()
    bumped[..., 0, 0] = np.exp(np.sin(line.coordinate(1)))
    bumped_ric = forms.ricci_hermitian(MetricField(line, bumped)).max_abs()
    tol = cfg.tol("norm-constant-iff-ricci-flat", 1e-7)
    ok = flat_ric < tol and spread < 1e-10 and abs(bumped_ric - 0.25) < 1e-6
    return _result(cfg, "norm-constant-iff-ricci-flat", flat_ric, tol, passed=ok,
                   detail=f"constant-norm spread {spread:.3e}; exp(sin x1) metric sup Ric {bumped_ric:.6f}")


@check("volume-normalised-constant", "choosing |Omega|_omega = (int omega^n)^(-1/2) on the constructed metric")
def _c0_normalisation(cfg: SuiteConfig) -> CheckResult:
    result = construct(ConstructionParams(n=cfg.n, delta=0.6, grid=cfg.grid[0]))
    omega = result.omega
    Omega = volume_normalized(omega)
    norm = np.sqrt(forms.omega_norm_sq(omega, Omega).samples.real)
    total = math.factorial(cfg.n) * float(np.mean(omega.det())) * omega.geometry.volume
    return _result(cfg, "volume-normalised-constant", _rel(norm, np.full_like(norm, total ** -0.5)), 1e-10)


def volume_normalized(omega: MetricField) -> HolomorphicVolume:
    """The constant ``h`` making ``|Omega|_omega = (int omega^n)^{-1/2}`` on average.

    Exact pointwise only when ``det g`` is constant, as it is for solutions.
    """
    dets = omega.det()
    total = math.factorial(omega.n) * float(np.mean(dets)) * omega.geometry.volume
    return HolomorphicVolume(math.sqrt(float(np.mean(dets)) / total))


@check("construction-determinant", "explicit two-term phi solves det(Psi_0 + F) = delta det Psi_0")
def _construction(cfg: SuiteConfig) -> CheckResult:
    worst = 0.0
    for delta in (0.25, 0.6, 0.9):
        result = construct(ConstructionParams(n=cfg.n, delta=delta, grid=cfg.grid[0]))
        worst = max(worst, result.residuals["det_identity"],
                    abs(result.C0 - delta ** (-1.0 / (2 * (cfg.n - 1)))))
    return _result(cfg, "construction-determinant", worst, 1e-10)


# -- solver properties -------------------------------------------------------------

def _base_state(cfg: SuiteConfig, name: str) -> AnsatzState:
    g = cfg.geometry
    return AnsatzState.at(random_trig_field(g, cfg.rng(name), 2, 0.05), Background.standard(g))


@check("compatibility-preserved", "int e^M omega_0^n = int omega_0^n at any cone point")
def _compat(cfg: SuiteConfig) -> CheckResult:
    state = _base_state(cfg, "compatibility-preserved")
    residual = abs(float(np.mean(np.exp(m_map(state).samples.real) * state.bg.det0))
                   / float(np.mean(state.bg.det0)) - 1.0)
    return _result(cfg, "compatibility-preserved", residual, 1e-9)


@check("linearization-order", "M(u + t d) - M(u) - t L d = O(t^2)")
def _linearization(cfg: SuiteConfig) -> CheckResult:
    state = _base_state(cfg, "linearization-order")
    d = random_trig_field(cfg.geometry, cfg.rng("linearization-order-direction"), 2, 1.0)
    order = linearization_order(state, d.samples.real)
    return _result(cfg, "linearization-order", abs(order - 1.0), 0.1, detail=f"slope {order:.4f}")


def linearization_order(state: AnsatzState, d: np.ndarray,
                        ts: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)) -> float:
    """Least-squares slope of ``log(||M(u+td) - M(u) - t L d|| / t)`` against ``log t``."""
    base = m_map(state).samples.real
    Ld = apply_L(d, state).samples.real
    rem = []
    for t in ts:
        moved = AnsatzState.at(state.u.samples.real + t * d, state.bg)
        rem.append(float(np.max(np.abs(m_map(moved).samples.real - base - t * Ld))) / t)
    return float(np.polyfit(np.log(ts), np.log(rem), 1)[0])


@check("weak-form-adjoint", "A(u, v) = -<L u, v> for v of zero omega_phi^n mean")
def _adjoint(cfg: SuiteConfig) -> CheckResult:
    state = _base_state(cfg, "weak-form-adjoint")
    rng = cfg.rng("weak-form-adjoint-pairs")
    worst = 0.0
    for _ in range(5):
        worst = max(worst, adjoint_defect(state, rng))
    return _result(cfg, "weak-form-adjoint", worst, 1e-8)


def adjoint_defect(state: AnsatzState, rng: np.random.Generator) -> float:
    """``|A(u,v) + <Lu,v>| / (||u|| ||v||)`` for one random pair (L^2 norms on ``T^n``)."""
    g = state.geometry
    u = random_trig_field(g, rng, 3, 1.0)
    v = ScalarField(g, state.project(random_trig_field(g, rng, 3, 1.0).samples.real), real=True)
    A = bilinear_A(u, v, state)
    pairing = state.inner(apply_L(u, state).samples.real, v.samples.real)

    def norm(f):
        return math.sqrt(float(np.mean(f.samples.real ** 2)) * g.volume)

    return abs(A + pairing) / (norm(u) * norm(v))


@check("linear-solve-roundtrip", "L u = h is uniquely solvable on weighted mean-zero functions")
def _solve_roundtrip(cfg: SuiteConfig) -> CheckResult:
    state = _base_state(cfg, "linear-solve-roundtrip")
    rng = cfg.rng("linear-solve-roundtrip-rhs")
    h = state.project(random_trig_field(cfg.geometry, rng, 3, 1.0).samples.real)
    u = solve_L(h, state).samples.real
    residual = float(np.max(np.abs(apply_L(u, state).samples.real - h))) / float(np.max(np.abs(h)))
    other = solve_L(h, state, x0=rng.standard_normal(cfg.geometry.grid_shape)).samples.real
    spread = float(np.max(np.abs(u - other))) / float(np.max(np.abs(u)))
    return _result(cfg, "linear-solve-roundtrip", max(residual, spread), 1e-9)


@check("flat-kernel-margin", "at u = 0 the margin is the first flat eigenvalue 1/(4(n-1))")
def _margin(cfg: SuiteConfig) -> CheckResult:
    state = AnsatzState.zero(Background.standard(cfg.geometry))
    value = kernel_margin(state, SolverConfig(seed=cfg.seed))
    expected = 1.0 / (4 * (cfg.n - 1))
    return _result(cfg, "flat-kernel-margin", abs(value - expected) / expected, 1e-6,
                   detail=f"margin {value:.12f}")


@check("trivial-source", "f = 0 gives u = 0")
def _trivial(cfg: SuiteConfig) -> CheckResult:
    from .solver import newton_solve

    bg = Background.standard(cfg.geometry)
    u0 = random_trig_field(cfg.geometry, cfg.rng("trivial-source"), 2, 0.03)
    result = newton_solve(SourceTerm.renormalized(cfg.geometry.zeros(), bg), u0=u0)
    return _result(cfg, "trivial-source", result.u.max_abs(), 1e-9)


EXACT_CHECKS = ("holomorphic-hessian-integrates-to-zero", "power-root-roundtrip", "power-map-determinant",
                "ddbar-mean-zero", "ddbar-symbolic-oracle", "eta-ansatz-table", "kahler-trace-pairing",
                "determinant-amgm-bound", "volume-ratio-identity", "compatibility-preserved")


def run_suite(cfg: SuiteConfig) -> SuiteReport:
    names = tuple(REGISTRY) if cfg.checks is None else tuple(cfg.checks)
    results = []
    for name in names:
        if name not in REGISTRY:
            results.append(CheckResult(name, "unknown check", math.nan, math.nan, False,
                                       "no check registered under this name"))
            continue
        try:
            results.append(REGISTRY[name][1](cfg))
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(name, REGISTRY[name][0], math.nan, cfg.tol(name, math.nan), False,
                                       f"{type(exc).__name__}: {exc}"))
    return SuiteReport(cfg, tuple(results))
