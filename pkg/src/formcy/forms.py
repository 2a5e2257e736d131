"""Pointwise hermitian-matrix fields and the ``(n-1, n-1)``-form dictionary.

A positive ``(1,1)``-form ``omega = (i/2) sum g_{ij} dz_i ^ dzbar_j`` is
stored through its coefficient matrix ``g``.  An ``(n-1, n-1)``-form
``Theta`` is stored through the matrix ``Theta_{pq}`` of its expansion

    Theta = (i/2)^{n-1} (n-1)! sum_{p,q} s(p,q) Theta_{pq} [omit dz_p, dzbar_q]

where the bracket is ``dz_1 ^ dzbar_1 ^ ... ^ dz_n ^ dzbar_n`` with the two
named differentials removed.  In this basis ``omega^{n-1}`` has matrix
``det(g) * g^{-T}`` (the power map), and the map is inverted by
``det g = det(Psi)^{1/(n-1)}``.

Real ``(n-2, n-2)``-forms are stored as :class:`FormN2`, whose components
multiply the monomials ``(n-1)! (i/2)^{n-2} dz_{p1} ^ dzbar_{q1} ^ ...``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import exterior
from .torus import (
    FieldError,
    ScalarField,
    TorusGeometry,
    check_real,
    ddbar,
    second_derivative,
)

PIVOT_RTOL = 1e-12
HERMITIAN_RTOL = 1e-12


class PositivityError(FieldError):
    """A matrix field failed the pointwise Cholesky test."""

    def __init__(self, message: str, index: tuple[int, ...] | None = None,
                 point: dict[int, float] | None = None):
        super().__init__(message)
        self.index = index
        self.point = point


# -- pointwise linear algebra --------------------------------------------------

def cholesky_pivots(mats: np.ndarray) -> np.ndarray:
    """Diagonal pivots of a batched hermitian Cholesky factorisation.

    Non-positive pivots propagate as NaN into later columns, so any
    non-finite or small pivot marks the point as not positive definite.
    """
    n = mats.shape[-1]
    lower = np.zeros_like(mats, dtype=complex)
    pivots = np.empty(mats.shape[:-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        for j in range(n):
            d = mats[..., j, j].real - np.sum(np.abs(lower[..., j, :j]) ** 2, axis=-1)
            pivots[..., j] = d
            root = np.sqrt(np.where(d > 0, d, np.nan))
            lower[..., j, j] = root
            for i in range(j + 1, n):
                acc = mats[..., i, j] - np.sum(lower[..., i, :j] * np.conj(lower[..., j, :j]), axis=-1)
                lower[..., i, j] = acc / root
    return pivots


def positive_mask(mats: np.ndarray, rtol: float = PIVOT_RTOL) -> np.ndarray:
    pivots = cholesky_pivots(mats)
    scale = np.max(np.abs(np.diagonal(mats, axis1=-2, axis2=-1)), axis=-1)
    ok = np.isfinite(pivots) & (pivots > rtol * scale[..., None])
    return np.all(ok, axis=-1)


def first_failure(geometry: TorusGeometry, mask: np.ndarray):
    bad = np.argwhere(~mask)
    if not bad.size:
        return None, None
    index = tuple(int(i) for i in bad[0])
    point = {
        axis: float(2 * np.pi * index[pos] / geometry.grid_shape[pos])
        for pos, axis in enumerate(geometry.active_axes)
    }
    return index, point


def hermitian_part(mats: np.ndarray) -> np.ndarray:
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


def det(mats: np.ndarray) -> np.ndarray:
    """Real determinant of batched hermitian matrices."""
    return np.linalg.det(mats).real


def power_matrix(g: np.ndarray) -> np.ndarray:
    """``det(g) * g^{-T}`` pointwise."""
    inv_t = np.swapaxes(np.linalg.inv(g), -1, -2)
    return hermitian_part(det(g)[..., None, None] * inv_t)


def root_matrix(psi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`power_matrix` on positive hermitian matrices."""
    n = psi.shape[-1]
    d = det(psi) ** (1.0 / (n - 1))
    inv_t = np.swapaxes(np.linalg.inv(psi), -1, -2)
    return hermitian_part(d[..., None, None] * inv_t)


# -- matrix-valued fields ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HermitianField:
    """An ``n x n`` hermitian matrix at every grid point."""

    geometry: TorusGeometry
    entries: np.ndarray

    def __post_init__(self) -> None:
        g = self.geometry
        data = np.array(self.entries, dtype=complex)
        shape = g.grid_shape + (g.n, g.n)
        if data.shape != shape:
            if data.shape == (g.n, g.n):
                data = np.broadcast_to(data, shape).copy()
            else:
                raise FieldError(f"entries have shape {data.shape}, expected {shape}")
        scale = max(float(np.max(np.abs(data))), 1.0)
        defect = float(np.max(np.abs(data - np.conj(np.swapaxes(data, -1, -2)))))
        if defect > HERMITIAN_RTOL * scale:
            raise FieldError(f"matrix field is not hermitian (defect {defect:.3e})")
        data = hermitian_part(data)
        data.setflags(write=False)
        object.__setattr__(self, "entries", data)

    @property
    def n(self) -> int:
        return self.geometry.n

    def entry(self, i: int, j: int) -> ScalarField:
        """The ``(i, j)`` coefficient (1-based) as a scalar field."""
        return ScalarField(self.geometry, self.entries[..., i - 1, j - 1])

    def det(self) -> np.ndarray:
        return det(self.entries)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries)))

    @classmethod
    def zeros(cls, geometry: TorusGeometry) -> "HermitianField":
        return cls(geometry, np.zeros(geometry.grid_shape + (geometry.n, geometry.n)))

    @classmethod
    def constant(cls, geometry: TorusGeometry, matrix) -> "HermitianField":
        return cls(geometry, np.asarray(matrix, dtype=complex))


@dataclass(frozen=True, eq=False)
class MetricField(HermitianField):
    """Pointwise positive-definite coefficient matrix ``g`` of a metric."""

    def __post_init__(self) -> None:
        super().__post_init__()
        mask = positive_mask(self.entries)
        if not mask.all():
            index, point = first_failure(self.geometry, mask)
            raise PositivityError(f"metric is not positive definite at grid index {index}",
                                  index, point)

    @classmethod
    def standard(cls, geometry: TorusGeometry) -> "MetricField":
        return cls(geometry, np.eye(geometry.n, dtype=complex))


@dataclass(frozen=True, eq=False)
class PsiField(HermitianField):
    """Coefficient matrix of an ``(n-1, n-1)``-form in the signed basis.

    ``positive`` records whether the pointwise Cholesky test succeeded;
    ``failure`` holds the first failing grid index and its coordinates.
    """

    positive: bool = field(default=False)
    failure: tuple | None = field(default=None)

    @classmethod
    def certified(cls, geometry: TorusGeometry, entries: np.ndarray) -> "PsiField":
        base = HermitianField(geometry, entries)
        mask = positive_mask(base.entries)
        index, point = first_failure(geometry, mask)
        return cls(geometry, base.entries, bool(mask.all()),
                   None if index is None else (index, point))

    def require_positive(self) -> "PsiField":
        if not self.positive:
            index, point = self.failure or (None, None)
            raise PositivityError(
                f"(n-1,n-1)-form leaves the positive cone at grid index {index}", index, point)
        return self


@dataclass(frozen=True)
class HolomorphicVolume:
    """``Omega = h dz_1 ^ ... ^ dz_n`` for a nonzero constant ``h``."""

    h: complex = 1.0

    def __post_init__(self) -> None:
        if self.h == 0:
            raise ValueError("holomorphic volume form must be non-vanishing")


# -- real (n-2, n-2)-forms -----------------------------------------------------

Key = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class FormN2:
    """Sparse real ``(n-2, n-2)``-form.

    ``components[(P, Q)]`` multiplies ``(n-1)! (i/2)^{n-2} paired(P, Q)``
    with ``P, Q`` sorted ``(n-2)``-subsets of ``{1, ..., n}``.  Reality means
    ``phi_{QP} = conj(phi_{PQ})``.
    """

    geometry: TorusGeometry
    components: Mapping[Key, ScalarField]

    def __post_init__(self) -> None:
        n = self.geometry.n
        clean: dict[Key, ScalarField] = {}
        for (P, Q), comp in self.components.items():
            P, Q = tuple(sorted(P)), tuple(sorted(Q))
            if len(P) != n - 2 or len(Q) != n - 2 or len(set(P)) != n - 2 or len(set(Q)) != n - 2:
                raise FieldError(f"component ({P}, {Q}) is not an (n-2)-subset pair")
            if not set(P) | set(Q) <= set(range(1, n + 1)):
                raise FieldError(f"component ({P}, {Q}) has indices outside 1..{n}")
            if not isinstance(comp, ScalarField):
                comp = ScalarField(self.geometry, comp)
            if comp.geometry != self.geometry:
                raise FieldError("component lives on a different grid")
            clean[(P, Q)] = comp
        object.__setattr__(self, "components", clean)

    def reality_defect(self) -> float:
        worst = 0.0
        for (P, Q), comp in self.components.items():
            partner = self.components.get((Q, P))
            other = partner.samples if partner is not None else 0.0
            worst = max(worst, float(np.max(np.abs(comp.samples - np.conj(other)))))
        return worst

    def check_real(self, rtol: float = 1e-12) -> None:
        scale = max([c.max_abs() for c in self.components.values()] + [1.0])
        defect = self.reality_defect()
        if defect > rtol * scale:
            raise FieldError(f"(n-2,n-2)-form is not real (defect {defect:.3e})")

    @classmethod
    def zero(cls, geometry: TorusGeometry) -> "FormN2":
        return cls(geometry, {})

    @classmethod
    def eta_power(cls, u: ScalarField) -> "FormN2":
        """``u * eta^{n-2}`` for the standard flat metric ``eta``."""
        n = u.geometry.n
        weight = math.factorial(n - 2) / math.factorial(n - 1)
        return cls(u.geometry, {(S, S): u * weight for S in exterior.subsets(n, n - 2)})


# -- operations ----------------------------------------------------------------

def power_map(omega: MetricField) -> PsiField:
    """Coefficient matrix of ``omega^{n-1}``: ``Psi = det(g) g^{-T}``."""
    return PsiField(omega.geometry, power_matrix(omega.entries), positive=True)


def root_extract(psi: PsiField | HermitianField) -> MetricField:
    """The metric ``omega`` with ``omega^{n-1}`` equal to ``psi``.

    Raises
    ------
    PositivityError
        If ``psi`` is not pointwise positive definite.
    """
    mask = positive_mask(psi.entries)
    if not mask.all():
        index, point = first_failure(psi.geometry, mask)
        raise PositivityError(f"cannot extract a root outside the positive cone (grid index {index})",
                              index, point)
    return MetricField(psi.geometry, root_matrix(psi.entries))


def ddbar_to_hermitian(phi: FormN2) -> HermitianField:
    """Coefficient matrix ``F`` of ``(i/2) ddbar phi`` in the signed basis."""
    phi.check_real()
    g = phi.geometry
    n = g.n
    out = np.zeros(g.grid_shape + (n, n), dtype=complex)
    for (P, Q), comp in phi.components.items():
        cache: dict[tuple[int, int], np.ndarray] = {}
        for p, q, a, b, c in exterior.ddbar_terms(n, P, Q):
            if (a, b) not in cache:
                cache[(a, b)] = ddbar(comp, a, b).samples
            out[..., p - 1, q - 1] += c * cache[(a, b)]
    return HermitianField(g, hermitian_part(out))


def perturb(psi0: PsiField | HermitianField, F: HermitianField) -> PsiField:
    """``Psi0 + F`` tagged positive only when the pointwise Cholesky test passes."""
    if psi0.geometry != F.geometry:
        raise FieldError("fields live on different grids")
    return PsiField.certified(F.geometry, psi0.entries + F.entries)


def omega_norm_sq(omega: MetricField, Omega: HolomorphicVolume = HolomorphicVolume()) -> ScalarField:
    """``||Omega||^2_omega = |h|^2 / det g`` (equal to 1 for ``g = I, h = 1``)."""
    return ScalarField(omega.geometry, abs(Omega.h) ** 2 / omega.det(), real=True)


def ricci_hermitian(omega: MetricField) -> HermitianField:
    """Coefficients ``R_{kl} = -d^2 log det g / dz_k dzbar_l`` of the Chern-Ricci form."""
    g = omega.geometry
    logdet = ScalarField(g, np.log(omega.det()), real=True)
    n = g.n
    out = np.zeros(g.grid_shape + (n, n), dtype=complex)
    active = g.active_directions()
    for k in active:
        for l in active:
            out[..., k - 1, l - 1] = -second_derivative(logdet, k, l).samples
    return HermitianField(g, hermitian_part(out))


def normalize_to_identity(psi_const: np.ndarray) -> np.ndarray:
    """Constant matrix ``A`` with ``A Psi conj(A)^T = I``."""
    psi_const = np.asarray(psi_const, dtype=complex)
    if psi_const.ndim != 2 or not positive_mask(psi_const[None])[0]:
        raise PositivityError("normalisation needs a constant positive definite matrix")
    lower = np.linalg.cholesky(hermitian_part(psi_const))
    return np.linalg.inv(lower)


# -- AM-GM rigidity ------------------------------------------------------------

@dataclass(frozen=True)
class AMGMReport:
    """Arithmetic-geometric mean chain for ``I + B`` with ``det(I + B) = c``.

    ``verdict`` is ``"hypothesis-violated"`` when ``c < 1``, ``det(I + B)``
    is not the constant ``c``, or ``B`` has nonzero means; otherwise
    ``"rigid"`` if both gaps vanish, and ``"contradiction"`` if they do not.
    """

    c: float
    max_gap: float
    integral_gap: float
    volume: float
    mean_defect: float
    det_defect: float
    margin: float
    verdict: str

    def lines(self) -> list[str]:
        return [f"{k} = {v!r}" if isinstance(v, str) else f"{k} = {v:.6e}"
                for k, v in self.__dict__.items()]


def amgm_report(B: HermitianField, c: float, tol: float = 1e-10,
                check_mean_zero: bool = True) -> AMGMReport:
    """Evaluate the pointwise and integrated AM-GM gaps of ``I + B``.

    Parameters
    ----------
    B : HermitianField
        Perturbation; ``I + B`` must be positive everywhere.
    c : float
        Claimed constant value of ``det(I + B)``.
    tol : float
        Threshold (relative to the unit scale of ``I``) for "vanishing".
    check_mean_zero : bool
        Raise when the entries of ``B`` do not integrate to zero.
    """
    g = B.geometry
    n = g.n
    mats = np.eye(n) + B.entries
    mask = positive_mask(mats)
    if not mask.all():
        index, point = first_failure(g, mask)
        raise PositivityError(f"I + B is not positive at grid index {index}", index, point)
    axes = tuple(range(g.ndim))
    mean_defect = float(np.max(np.abs(np.mean(B.entries, axis=axes))))
    if check_mean_zero and mean_defect > tol:
        raise FieldError(f"entries of B are not mean-zero (max |mean| = {mean_defect:.3e})")
    dets = det(mats)
    trace = np.trace(mats, axis1=-2, axis2=-1).real
    gap = trace / n - dets ** (1.0 / n)
    volume = g.volume
    integral_gap = float(np.mean(gap)) * volume
    # For mean-zero B the chain forces integral_gap <= V (1 - c^{1/n}) <= 0.
    margin = integral_gap - (float(np.mean(trace)) / n - c ** (1.0 / n)) * volume
    det_defect = float(np.max(np.abs(dets - c)))
    hypotheses = c >= 1.0 - tol and det_defect <= tol * max(c, 1.0) and mean_defect <= tol
    if not hypotheses:
        verdict = "hypothesis-violated"
    elif float(np.max(gap)) < tol and integral_gap < tol * volume:
        verdict = "rigid"
    else:
        verdict = "contradiction"
    return AMGMReport(float(c), float(np.max(gap)), integral_gap, volume, mean_defect,
                      det_defect, margin, verdict)


def random_metric(geometry: TorusGeometry, rng: np.random.Generator,
                  amplitude: float = 0.3, max_mode: int = 2) -> MetricField:
    """Random smooth positive metric ``I + small hermitian trigonometric field``."""
    from .torus import random_trig_field

    n = geometry.n
    entries = np.zeros(geometry.grid_shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            re = random_trig_field(geometry, rng, max_mode, 1.0).samples.real
            im = random_trig_field(geometry, rng, max_mode, 1.0).samples.real if i != j else 0.0
            entries[..., i, j] = re + 1j * im
            entries[..., j, i] = re - 1j * im
    scale = amplitude / n
    return MetricField(geometry, np.eye(n) + scale * entries)
