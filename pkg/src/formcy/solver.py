"""Newton-Krylov solver for the form-type Monge-Ampere equation on the torus.

Unknowns are restricted to ``psi = u * eta^{n-2}`` with ``eta`` the flat
metric and ``u`` a real function.  With ``Psi_u = Psi_0 + F(u)`` and
``det g_u = det(Psi_u)^{1/(n-1)}`` the nonlinear map is

    M(u) = log(det g_u / det g_0) - log(int det g_u / int det g_0)

whose values always satisfy ``int e^M omega_0^n = int omega_0^n``.  Its
derivative is ``L d = q - <q>_w`` with ``q = tr(Psi_u^{-1} F(d)) / (n-1)``
and ``<.>_w`` the mean against ``w = det g_u``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres, lobpcg

from . import exterior, forms
from .forms import FormN2, HolomorphicVolume, MetricField, PositivityError, PsiField
from .torus import (
    FieldError,
    ScalarField,
    TorusGeometry,
    ddbar_multiplier,
    flat_laplacian_multiplier,
    hessian,
    wirtinger_d,
    wirtinger_dbar,
)


class ConvergenceError(RuntimeError):
    """An iteration stopped without meeting its tolerance."""

    def __init__(self, message: str, history: list[float] | None = None, partial=None):
        super().__init__(message)
        self.history = list(history or [])
        self.partial = partial  # best iterate reached, when meaningful


class ContinuationError(ConvergenceError):
    """Continuation could not advance ``t`` for a reason other than cone exit."""

    def __init__(self, message: str, t: float | None = None, history: list[float] | None = None):
        super().__init__(message, history)
        self.t = t


class ConeExitError(PositivityError):
    """Newton damping hit its floor while every trial step left the cone."""

    def __init__(self, message: str, t: float | None = None, history: list[float] | None = None):
        super().__init__(message)
        self.t = t
        self.history = list(history or [])


# -- background, states and sources ---------------------------------------------

@dataclass(frozen=True, eq=False)
class Background:
    """Reference metric ``omega_0``, flat ``eta`` and holomorphic volume."""

    omega0: MetricField
    Omega: HolomorphicVolume = field(default_factory=HolomorphicVolume)

    def __post_init__(self) -> None:
        if self.V <= 0:
            raise FieldError("background volume must be positive")

    @classmethod
    def standard(cls, geometry: TorusGeometry) -> "Background":
        return cls(MetricField.standard(geometry))

    @property
    def geometry(self) -> TorusGeometry:
        return self.omega0.geometry

    @property
    def n(self) -> int:
        return self.geometry.n

    @property
    def eta(self) -> MetricField:
        return MetricField.standard(self.geometry)

    @property
    def psi0(self) -> PsiField:
        return forms.power_map(self.omega0)

    @property
    def det0(self) -> np.ndarray:
        return self.omega0.det()

    @property
    def V(self) -> float:
        """``int omega_0^n`` with ``omega^n = n! det g dV``."""
        return math.factorial(self.n) * float(np.mean(self.det0)) * self.geometry.volume


def ansatz_F(d: ScalarField) -> np.ndarray:
    """Coefficient matrix of ``(i/2) ddbar(d eta^{n-2})`` at every grid point."""
    n = d.geometry.n
    H = hessian(d)
    return np.einsum("pqab,...ab->...pq", exterior.eta_ansatz_table(n), H)


def weighted_mean(values: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sum(weight * values) / np.sum(weight))


@dataclass(frozen=True, eq=False)
class AnsatzState:
    """A cone point ``u`` with its metric data cached.

    ``u`` is stored with zero mean against ``omega_u^n``; adding a constant
    does not change ``omega_u``, so the projection is well defined.
    """

    bg: Background
    u: ScalarField
    psi: PsiField
    omega: MetricField
    weight: np.ndarray  # det g_u
    logdet: np.ndarray  # log det g_u

    @classmethod
    def at(cls, u: ScalarField | np.ndarray, bg: Background) -> "AnsatzState":
        """Evaluate the metric of ``u``.

        Raises
        ------
        PositivityError
            If ``Psi_0 + F(u)`` is not positive somewhere on the grid.
        """
        if not isinstance(u, ScalarField):
            u = ScalarField(bg.geometry, u, real=True)
        if u.geometry != bg.geometry:
            raise FieldError("u lives on a different grid from the background")
        u = u.as_real(rtol=1e-10)
        psi = PsiField.certified(bg.geometry, bg.psi0.entries + ansatz_F(u)).require_positive()
        omega = forms.root_extract(psi)
        weight = omega.det()
        u = ScalarField(bg.geometry, u.samples.real - weighted_mean(u.samples.real, weight), real=True)
        return cls(bg, u, psi, omega, weight, np.log(weight))

    @classmethod
    def zero(cls, bg: Background) -> "AnsatzState":
        return cls.at(bg.geometry.zeros(), bg)

    @property
    def geometry(self) -> TorusGeometry:
        return self.bg.geometry

    @property
    def n(self) -> int:
        return self.bg.n

    def project(self, values: np.ndarray) -> np.ndarray:
        """Remove the ``omega_u^n``-weighted mean."""
        return values - weighted_mean(values, self.weight)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """``int a b omega_u^n``."""
        return math.factorial(self.n) * float(np.mean(a * b * self.weight)) * self.geometry.volume

    @property
    def kernel(self) -> np.ndarray:
        """``K_ab`` with ``tr(Psi_u^{-1} F(d)) = sum K_ab d^2 d / dz_a dzbar_b``."""
        if "_kernel" not in self.__dict__:
            inv = np.linalg.inv(self.psi.entries)
            K = np.einsum("...qp,pqab->...ab", inv, exterior.eta_ansatz_table(self.n))
            object.__setattr__(self, "_kernel", K)
        return self.__dict__["_kernel"]


@dataclass(frozen=True, eq=False)
class SourceTerm:
    """Right-hand side ``f`` renormalised so ``int e^f omega_0^n = V``."""

    bg: Background
    f: ScalarField
    shift: float = 0.0

    @classmethod
    def renormalized(cls, f: ScalarField | np.ndarray, bg: Background) -> "SourceTerm":
        if not isinstance(f, ScalarField):
            f = ScalarField(bg.geometry, f, real=True)
        values = f.as_real(rtol=1e-10).samples.real
        shift = math.log(weighted_mean(np.exp(values), bg.det0))
        return cls(bg, ScalarField(bg.geometry, values - shift, real=True), shift)

    def compatibility_residual(self) -> float:
        return abs(weighted_mean(np.exp(self.f.samples.real), self.bg.det0) - 1.0)

    def scaled(self, t: float) -> "SourceTerm":
        return SourceTerm.renormalized(self.f.samples.real * t, self.bg)


# -- the nonlinear map and its derivatives ---------------------------------------

def m_map(u: AnsatzState | FormN2, bg: Background | None = None) -> ScalarField:
    """``M = log(omega^n / omega_0^n) - log(int omega^n / V)``.

    Accepts a cone point of the ansatz or a general real ``(n-2, n-2)``-form.
    """
    if isinstance(u, FormN2):
        if bg is None:
            bg = Background.standard(u.geometry)
        psi = forms.perturb(bg.psi0, forms.ddbar_to_hermitian(u)).require_positive()
        weight = forms.root_extract(psi).det()
    else:
        bg = u.bg
        weight = u.weight
    ratio = weight / bg.det0
    values = np.log(ratio) - math.log(weighted_mean(ratio, bg.det0))
    return ScalarField(bg.geometry, values, real=True)


def volume_density(state: AnsatzState) -> np.ndarray:
    """``omega_u^n / dV = n! det g_u``."""
    return math.factorial(state.n) * state.weight


def linearize_G(psi: FormN2, at: AnsatzState) -> ScalarField:
    """Derivative of ``phi -> omega_phi^n`` in direction ``psi``, as a density against ``dV``.

    Equals ``n/(n-1) (i/2) ddbar psi ^ omega_phi``.
    """
    F = forms.ddbar_to_hermitian(psi).entries
    g = at.omega.entries
    n = at.n
    trace = np.einsum("...ij,...ij->...", g, F).real
    return ScalarField(at.geometry, n * math.factorial(n - 2) * trace, real=True)


def _q(d: np.ndarray, at: AnsatzState) -> np.ndarray:
    f = ScalarField(at.geometry, d)
    H = hessian(f)
    return np.einsum("...ab,...ab->...", at.kernel, H).real / (at.n - 1)


def apply_L(u_dir: ScalarField | np.ndarray, at: AnsatzState) -> ScalarField:
    """Derivative of :func:`m_map` at ``at`` in direction ``u_dir``."""
    d = u_dir.samples if isinstance(u_dir, ScalarField) else np.asarray(u_dir)
    d = np.broadcast_to(d, at.geometry.grid_shape).real
    return ScalarField(at.geometry, at.project(_q(d, at)), real=True)


def apply_L_transpose(y: np.ndarray, at: AnsatzState) -> np.ndarray:
    """Grid-space transpose of :func:`apply_L` (plain sum inner product)."""
    g = at.geometry
    y = np.broadcast_to(np.asarray(y, dtype=float), g.grid_shape)
    z = y - at.weight * np.sum(y) / np.sum(at.weight)
    # Second-derivative symbols are even in k, so each one is its own transpose.
    out = np.zeros(g.grid_shape)
    K = at.kernel
    for a in g.active_directions():
        for b in g.active_directions():
            mult = ddbar_multiplier(g, a, b)
            out += np.fft.ifftn(np.fft.fftn(K[..., a - 1, b - 1] * z) * mult).real
    return out / (at.n - 1)


def bilinear_A(u: ScalarField, v: ScalarField, at: AnsatzState) -> float:
    """Weak form of ``-<L u, v>``, built from first derivatives only.

    With ``Xi = eta^{n-2} ^ omega_phi`` integration by parts gives
    ``A = n/(n-1) [ (i/2) int dv ^ dbar u ^ Xi - (i/2) int v dbar u ^ d Xi ]``.
    The second term vanishes when ``omega_phi`` is closed.
    """
    g = at.geometry
    n = at.n
    dirs = g.active_directions()
    gij = at.omega.entries
    du = {b: wirtinger_dbar(u, b).samples for b in dirs}
    dv = {a: wirtinger_d(v, a).samples for a in dirs}
    W1 = exterior.eta_power_table(n, (False, True, False, True))
    W2 = exterior.eta_power_table(n, (True, False, False, True))
    term1 = np.zeros(g.grid_shape, dtype=complex)
    for a in dirs:
        for b in dirs:
            coeff = np.einsum("...ij,ij->...", gij, W1[a - 1, b - 1])
            term1 += dv[a] * du[b] * coeff
    term2 = np.zeros(g.grid_shape, dtype=complex)
    for k in dirs:
        dg = np.empty_like(gij)
        for i in range(n):
            for j in range(n):
                dg[..., i, j] = wirtinger_d(ScalarField(g, gij[..., i, j]), k).samples
        for b in dirs:
            term2 += du[b] * np.einsum("...ij,ij->...", dg, W2[b - 1, k - 1])
    density = term1 - v.samples * term2
    total = math.factorial(n - 2) * np.mean(density) * g.volume
    return float(n / (n - 1) * total.real)


# -- linear solve ----------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    lin_tol: float = 1e-10
    krylov_rtol: float = 1e-12
    krylov_restart: int = 60
    krylov_maxiter: int = 10  # restart cycles
    refinements: int = 4
    newton_tol: float = 1e-8
    max_iters: int = 30
    direct_iters: int = 8  # Newton budget before falling back to continuation
    max_total_iters: int = 100  # all continuation stages together, failed ones included
    max_forcing: float = 0.1
    polish: bool = True
    min_damping: float = 2.0**-10
    continuation_steps: int = 8
    min_continuation_step: float = 1.0 / 128
    margin_tol: float = 1e-8
    margin_block: int = 8
    seed: int = 0


def _flat_inverse(geometry: TorusGeometry, n: int):
    """Inverse of ``Delta / (n-1)`` on mean-zero grid functions (the ``u = 0`` operator)."""
    mult = flat_laplacian_multiplier(geometry) / (n - 1)
    inv = np.zeros_like(mult)
    nonzero = np.abs(mult) > 1e-14
    inv[nonzero] = 1.0 / mult[nonzero]

    def apply(y: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(np.fft.fftn(y.reshape(geometry.grid_shape)) * inv).real

    return apply


def solve_L(h: ScalarField | np.ndarray, at: AnsatzState, cfg: SolverConfig = SolverConfig(),
            x0: np.ndarray | None = None) -> ScalarField:
    """Weighted-mean-zero ``u`` with ``L u = h``.

    GMRES on ``L P`` with ``P`` the flat inverse Laplacian (right
    preconditioning), followed by a few rounds of iterative refinement
    until ``||L u - h||_inf <= lin_tol ||h||_inf``.

    Raises
    ------
    FieldError
        If ``h`` does not have zero ``omega_u^n``-weighted mean.
    ConvergenceError
        If the residual target is missed; ``history`` holds the sup-norm
        residual after each refinement round and ``partial`` the best iterate.
    """
    g = at.geometry
    hv = h.samples.real if isinstance(h, ScalarField) else np.asarray(h, dtype=float)
    hv = np.broadcast_to(hv, g.grid_shape)
    scale = float(np.max(np.abs(hv)))
    if scale == 0.0:
        return ScalarField(g, np.zeros(g.grid_shape), real=True)
    if abs(weighted_mean(hv, at.weight)) > 1e-9 * scale:
        raise FieldError("right-hand side is not mean-zero against omega^n")
    flat = _flat_inverse(g, at.n)
    N = g.npoints

    def L_of(x: np.ndarray) -> np.ndarray:
        return at.project(_q(x, at))

    op = LinearOperator((N, N), dtype=float, matvec=lambda y: L_of(flat(y)).ravel())
    u = np.zeros(g.grid_shape) if x0 is None else at.project(np.asarray(x0, dtype=float))
    history: list[float] = []
    target = cfg.lin_tol * scale
    best, best_res = u, math.inf
    for _ in range(cfg.refinements + 1):
        r = hv - L_of(u)
        res = float(np.max(np.abs(r)))
        history.append(res)
        if res < best_res:
            best, best_res = u, res
        if res <= target:
            return ScalarField(g, at.project(u), real=True)
        if len(history) > 1 and res > 0.5 * history[-2]:
            break  # refinement no longer pays: at the roundoff floor or GMRES stalled
        # Right preconditioning keeps the Krylov residual equal to the true
        # residual, and its 2-norm bounds the sup-norm.
        y, _ = gmres(op, r.ravel(), rtol=cfg.krylov_rtol, atol=0.1 * target,
                     restart=cfg.krylov_restart, maxiter=cfg.krylov_maxiter)
        u = u + flat(y)
    else:
        res = float(np.max(np.abs(hv - L_of(u))))
        history.append(res)
        if res < best_res:
            best, best_res = u, res
        if res <= target:
            return ScalarField(g, at.project(u), real=True)
    raise ConvergenceError(f"Krylov solve stalled at residual {best_res:.3e} "
                           f"(target {target:.3e})", history,
                           partial=ScalarField(g, at.project(best), real=True))


# -- Newton with continuation ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class NewtonResult:
    state: AnsatzState
    history: list[float]
    steps: list[float]  # continuation values of t actually solved
    iterations: int
    damping: list[float]
    continuation: bool

    @property
    def u(self) -> ScalarField:
        return self.state.u

    @property
    def residual(self) -> float:
        return self.history[-1]

    def observed_order(self, floor: float = 1e-13) -> float | None:
        """Order from the last three residuals above ``floor``.

        ``log(e2/e1) / log(e1/e0)``; None when fewer than three qualify.
        """
        above = [e for e in self.history if e > floor]
        if len(above) < 3:
            return None
        e0, e1, e2 = above[-3:]
        if not (e0 > e1 > e2):
            return None
        return math.log(e2 / e1) / math.log(e1 / e0)


def _newton(f: np.ndarray, state: AnsatzState, cfg: SolverConfig, history: list[float],
            damping: list[float]) -> tuple[AnsatzState, int]:
    bg = state.bg
    residual = m_map(state).samples.real - f
    err = float(np.max(np.abs(residual)))
    history.append(err)
    for it in range(cfg.max_iters):
        if err < cfg.newton_tol:
            if cfg.polish:
                state, err = _polish(f, state, residual, err, cfg, history)
            return state, it
        # Inexact Newton: a linear residual of order err keeps the outer
        # iteration quadratic and avoids chasing the roundoff floor far from the root.
        forcing = replace(cfg, lin_tol=max(cfg.lin_tol, min(cfg.max_forcing, err)))
        rhs = state.project(-residual)
        try:
            step = solve_L(rhs, state, forcing).samples.real
        except ConvergenceError as exc:
            # A step that at least halves the linear residual is still a
            # descent direction; the damped line search below guards it.
            if exc.partial is None or exc.history and min(exc.history) > 0.5 * float(np.max(np.abs(rhs))):
                raise
            step = exc.partial.samples.real
        lam = 1.0
        while True:
            try:
                trial = AnsatzState.at(state.u.samples.real + lam * step, bg)
                trial_res = m_map(trial).samples.real - f
                trial_err = float(np.max(np.abs(trial_res)))
                if trial_err < err or trial_err < cfg.newton_tol:
                    break
            except PositivityError:
                pass
            lam *= 0.5
            if lam < cfg.min_damping:
                raise ConeExitError(
                    f"no admissible Newton step down to damping {cfg.min_damping:g} "
                    f"(residual {err:.3e})", history=history)
        state, residual, err = trial, trial_res, trial_err
        history.append(err)
        damping.append(lam)
    if err < cfg.newton_tol:
        return state, cfg.max_iters
    raise ConvergenceError(f"Newton did not converge in {cfg.max_iters} iterations "
                           f"(residual {err:.3e})", history)


def _polish(f: np.ndarray, state: AnsatzState, residual: np.ndarray, err: float,
            cfg: SolverConfig, history: list[float]) -> tuple[AnsatzState, float]:
    """One extra full Newton step, kept only if it lowers the residual.

    The residual test alone leaves ``u`` accurate to roughly the tolerance;
    near the root a further step is essentially free and squares the error.
    """
    try:
        step = solve_L(state.project(-residual), state, cfg).samples.real
        trial = AnsatzState.at(state.u.samples.real + step, state.bg)
    except (PositivityError, ConvergenceError):
        return state, err
    trial_err = float(np.max(np.abs(m_map(trial).samples.real - f)))
    if trial_err < err:
        history.append(trial_err)
        return trial, trial_err
    return state, err


def newton_solve(f: SourceTerm, bg: Background | None = None, cfg: SolverConfig = SolverConfig(),
                 u0: ScalarField | np.ndarray | None = None) -> NewtonResult:
    """Solve ``M(u) = f`` for ``u`` in the cone.

    The full problem is tried directly for ``direct_iters`` iterations; if
    Newton leaves the cone or stalls,
    it restarts from ``u0`` with continuation ``f_t`` (``t f`` renormalised)
    on ``continuation_steps`` equal steps, halving a step when it fails.

    Raises
    ------
    ConeExitError
        Continuation cannot advance by ``min_continuation_step`` (or runs
        past ``max_total_iters``) because every damped step leaves the cone.
    ContinuationError
        Continuation cannot advance for any other reason (Newton or Krylov
        stagnation); ``t`` records how far it got.
    """
    bg = f.bg if bg is None else bg
    start = AnsatzState.zero(bg) if u0 is None else AnsatzState.at(u0, bg)
    history: list[float] = []
    damping: list[float] = []
    try:
        direct = replace(cfg, max_iters=min(cfg.max_iters, cfg.direct_iters))
        state, iters = _newton(f.f.samples.real, start, direct, history, damping)
        return NewtonResult(state, history, [1.0], iters, damping, False)
    except (ConeExitError, ConvergenceError):
        pass
    history, damping = [], []
    state, t, dt, total = start, 0.0, 1.0 / cfg.continuation_steps, 0
    steps = []
    spent = 0
    while t < 1.0:
        t_next = min(1.0, t + dt)
        local_h: list[float] = []
        local_d: list[float] = []
        try:
            state_next, iters = _newton(f.scaled(t_next).f.samples.real, state, cfg, local_h, local_d)
        except (ConeExitError, ConvergenceError) as exc:
            spent += max(len(local_h), 1)
            dt *= 0.5
            if dt < cfg.min_continuation_step or spent > cfg.max_total_iters:
                kind = ConeExitError if isinstance(exc, ConeExitError) else ContinuationError
                raise kind(f"continuation stuck at t = {t:.6g}: {exc}", t=t,
                           history=history + local_h) from exc
            continue
        spent += iters
        state, t = state_next, t_next
        steps.append(t)
        history += local_h
        damping += local_d
        total += iters
    return NewtonResult(state, history, steps, total, damping, True)


# -- injectivity margin ----------------------------------------------------------

def kernel_margin(at: AnsatzState, cfg: SolverConfig = SolverConfig()) -> float:
    """Smallest singular value of ``L`` on functions orthogonal to constants.

    Uses the grid-mean inner product so the value is resolution independent.
    LOBPCG on ``L^T L`` with the constants as a hard constraint and the
    flat ``L_0^{-2}`` as preconditioner.
    """
    g = at.geometry
    N = g.npoints
    flat = _flat_inverse(g, at.n)

    def normal(x: np.ndarray) -> np.ndarray:
        cols = x.reshape(N, -1)
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            Lx = at.project(_q(cols[:, j].reshape(g.grid_shape), at))
            out[:, j] = apply_L_transpose(Lx, at).ravel()
        return out.reshape(x.shape)

    def precond(x: np.ndarray) -> np.ndarray:
        cols = x.reshape(N, -1)
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            out[:, j] = flat(flat(cols[:, j])).ravel()
        return out.reshape(x.shape)

    A = LinearOperator((N, N), matvec=normal, matmat=normal, dtype=float)
    M = LinearOperator((N, N), matvec=precond, matmat=precond, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    X = rng.standard_normal((N, cfg.margin_block))
    Y = np.ones((N, 1))
    with warnings.catch_warnings():
        # At symmetric points the bottom eigenvalue is highly degenerate and
        # block residuals can stall just above tol; the Rayleigh quotient is
        # accurate to roughly the squared residual, far below what we report.
        warnings.filterwarnings("ignore", message="Exited", category=UserWarning)
        vals, _ = lobpcg(A, X, M=M, Y=Y, tol=cfg.margin_tol, maxiter=500, largest=False)
    return float(math.sqrt(max(float(np.min(vals)), 0.0)))
