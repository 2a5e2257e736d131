"""Explicit non-Calabi-Yau balanced metrics on ``T^n`` with constant ``||Omega||``.

For ``0 < delta < 1`` the two-term form

    phi = (n-1)! (i/2)^{n-2} [ u dz_3 ^ dzbar_3 ^ ... + v dz_2 ^ dzbar_2 ^ dz_4 ^ ... ]

with ``u, v`` depending on ``x_1`` only turns the determinant equation into
``(1 + Lu)(1 + Lv) = delta`` where ``L = d^2 / dz_1 dzbar_1``.  Taking
``v = -4k sin x_1`` leaves a linear equation for ``u`` that is solvable
exactly when ``Z(k) = 1/delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import forms
from .forms import FormN2, HolomorphicVolume, MetricField, PsiField
from .torus import (
    CompatibilityError,
    FieldError,
    ScalarField,
    TorusGeometry,
    ddbar,
    solve_dzdzbar,
)

Z_MAX_POINTS = 2**22


def z_integral(k: float, points: int | None = None) -> float:
    """``Z(k) = (1/2 pi) int_0^{2 pi} dx / (1 + k sin x)`` by the periodic trapezoid rule.

    Without ``points`` the rule is doubled from 64 nodes until two
    successive values agree to 1e-15 relative.
    """
    if not 0.0 <= k < 1.0:
        raise ValueError(f"Z(k) needs 0 <= k < 1, got {k}")
    if points is not None:
        x = 2 * np.pi * np.arange(points) / points
        return float(np.mean(1.0 / (1.0 + k * np.sin(x))))
    m = 64
    prev = z_integral(k, m)
    while m < Z_MAX_POINTS:
        m *= 2
        cur = z_integral(k, m)
        if abs(cur - prev) <= 1e-15 * cur:
            return cur
        prev = cur
    return prev


def solve_k(delta: float, points: int | None = None, max_iter: int = 200) -> float:
    """Unique ``k`` in ``(0, 1)`` with ``Z(k) = 1/delta``, by bisection.

    With ``points`` the integral is the ``points``-node trapezoid sum, so the
    returned ``k`` makes the discrete solvability condition hold on that
    grid to rounding.  Both versions agree once the grid resolves
    ``1/(1 + k sin x)``; they separate for small ``delta``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    target = 1.0 / delta
    lo, hi = 0.0, 1.0 - 1e-12
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if z_integral(mid, points) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_v(geometry: TorusGeometry, k: float, direction: int = 1) -> ScalarField:
    """``v = -4k sin x``, ``x`` the real part of ``z_direction``."""
    x = geometry.coordinate(2 * direction - 1)
    return ScalarField(geometry, np.broadcast_to(-4.0 * k * np.sin(x), geometry.grid_shape), real=True)


def build_u(geometry: TorusGeometry, delta: float, k: float, direction: int = 1,
            rtol: float = 1e-10) -> ScalarField:
    """Mean-zero ``u`` with ``1 + Lu = delta / (1 + Lv)``.

    Raises
    ------
    CompatibilityError
        If ``k`` does not satisfy ``Z(k) = 1/delta`` on this grid.
    """
    lv = ddbar(build_v(geometry, k, direction), direction, direction).samples.real
    rhs = delta / (1.0 + lv) - 1.0
    residual = abs(np.mean(rhs))
    if residual > rtol * max(np.max(np.abs(rhs)), 1.0):
        raise CompatibilityError(
            f"k = {k!r} is inconsistent with delta = {delta!r} (mean residual {residual:.3e})")
    rhs = rhs - np.mean(rhs)
    u = solve_dzdzbar(ScalarField(geometry, rhs), direction, rtol=rtol)
    return u.as_real(rtol=1e-10)


def assemble_phi(u: ScalarField, v: ScalarField, n: int | None = None, offset: int = 0) -> FormN2:
    """The two-component ``(n-2, n-2)``-form; ``offset`` shifts all indices."""
    n = u.geometry.n if n is None else n
    if n - offset < 3:
        raise FieldError("the construction needs at least three complex directions")
    rest = tuple(range(offset + 4, n + 1))
    first = (offset + 3,) + rest
    second = (offset + 2,) + rest
    head = tuple(range(1, offset + 1))
    return FormN2(u.geometry, {(head + first, head + first): u,
                               (head + second, head + second): v})


@dataclass(frozen=True)
class ConstructionParams:
    n: int = 3
    delta: float = 0.5
    grid: int = 256
    tol: float = 1e-10

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.grid < 8 or self.grid % 2:
            raise ValueError("grid size must be even and >= 8")


@dataclass(frozen=True, eq=False)
class ConstructionResult:
    params: ConstructionParams
    k: float
    k_grid: float
    u: ScalarField
    v: ScalarField
    phi: FormN2
    psi: PsiField
    omega: MetricField
    C0: float
    norm: ScalarField
    residuals: dict = field(default_factory=dict)

    @property
    def geometry(self) -> TorusGeometry:
        return self.u.geometry

    def report_lines(self) -> list[str]:
        p = self.params
        lines = [f"n = {p.n}", f"delta = {p.delta!r}", f"grid = {p.grid}",
                 f"k = {self.k!r}", f"k_grid = {self.k_grid!r}",
                 f"k_closed_form = {math.sqrt(1.0 - p.delta ** 2)!r}", f"C0 = {self.C0!r}",
                 f"C0_expected = {p.delta ** (-1.0 / (2 * (p.n - 1)))!r}"]
        lines += [f"{name} = {value!r}" for name, value in self.residuals.items()]
        return lines


def _finish(params: ConstructionParams, k: float, k_grid: float, u: ScalarField, v: ScalarField,
            phi: FormN2, psi0: np.ndarray, direction: int) -> ConstructionResult:
    geometry = u.geometry
    F = forms.ddbar_to_hermitian(phi)
    psi0_field = forms.PsiField.certified(geometry, psi0)
    psi = forms.perturb(psi0_field, F).require_positive()
    omega = forms.root_extract(psi)
    norm = forms.omega_norm_sq(omega, HolomorphicVolume(1.0 / math.sqrt(np.linalg.det(psi0).real
                                                                        ** (1.0 / (geometry.n - 1)))))
    c0 = np.sqrt(norm.samples.real)
    target = params.delta * np.linalg.det(psi0).real
    lu = 1.0 + ddbar(u, direction, direction).samples.real
    lv = 1.0 + ddbar(v, direction, direction).samples.real
    ricci = forms.ricci_hermitian(omega)
    residuals = {
        "det_identity": float(np.max(np.abs(psi.det() - target)) / target),
        "min_one_plus_lu": float(lu.min()),
        "min_one_plus_lv": float(lv.min()),
        "C0_spread": float((c0.max() - c0.min()) / c0.mean()),
        "ricci_sup": ricci.max_abs(),
        "F_mean_max": float(np.max(np.abs(np.mean(F.entries, axis=tuple(range(geometry.ndim)))))),
    }
    return ConstructionResult(params, k, k_grid, u, v, phi, psi, omega, float(c0.mean()), norm, residuals)


def construct(params: ConstructionParams) -> ConstructionResult:
    """Build ``phi`` with ``det(omega_0^{n-1} + (i/2) ddbar phi) = delta det omega_0^{n-1}``.

    The background is the standard metric, so ``||Omega||_{omega_0} = 1`` and
    the resulting constant is ``C0 = delta^{-1/(2(n-1))}``.
    """
    geometry = TorusGeometry.line(params.n, params.grid)
    k = solve_k(params.delta)
    k_grid = solve_k(params.delta, points=params.grid)
    v = build_v(geometry, k_grid)
    u = build_u(geometry, params.delta, k_grid, rtol=params.tol)
    phi = assemble_phi(u, v)
    return _finish(params, k, k_grid, u, v, phi, np.eye(params.n, dtype=complex), 1)


def construct_product(params: ConstructionParams, factor_metric=None) -> ConstructionResult:
    """Same construction on ``N x T^k`` with ``N`` a flat torus factor.

    ``factor_metric`` is the constant ``m x m`` coefficient matrix of
    ``omega_N`` on the first ``m = n - k`` directions (``m = 0`` allowed).
    The form used is ``binom(n-1, m) omega_N^m ^ phi``; the binomial factor
    matches the ``omega_N^m ^ omega_0^{k-1}`` term of ``(omega_N + omega_0)^{n-1}``.
    """
    gN = np.zeros((0, 0), dtype=complex) if factor_metric is None \
        else np.atleast_2d(np.asarray(factor_metric, dtype=complex))
    m = gN.shape[0]
    n = params.n
    if n - m < 3:
        raise ValueError(f"torus factor must have dimension >= 3, got {n - m}")
    if m and not forms.positive_mask(gN[None])[0]:
        raise forms.PositivityError("factor metric must be positive definite")
    direction = m + 1
    geometry = TorusGeometry(n, (2 * direction - 1,), (params.grid,))
    k = solve_k(params.delta)
    k_grid = solve_k(params.delta, points=params.grid)
    v = build_v(geometry, k_grid, direction)
    u = build_u(geometry, params.delta, k_grid, direction, rtol=params.tol)
    detN = float(np.linalg.det(gN).real) if m else 1.0
    phi = assemble_phi(u * detN, v * detN, n, offset=m)
    g0 = np.eye(n, dtype=complex)
    g0[:m, :m] = gN
    psi0 = forms.power_matrix(g0[None])[0]
    return _finish(params, k, k_grid, u, v, phi, psi0, direction)
