"""Brute-force symbolic exterior algebra, used as an independent check.

Forms are dictionaries from ordered tuples of differentials, each written
``("z", k)`` or ``("zb", k)``, to sympy expressions in the real
coordinates ``x_1, ..., x_{2n}``.  Nothing here shares code with the
numerical path: signs come from counting inversions, and basis
coefficients are read off by wedging with ``dz_p ^ dzbar_q`` rather than
through any sign convention.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

Diff = tuple[str, int]


def coordinates(n: int) -> list[sp.Symbol]:
    return list(sp.symbols(f"x1:{2 * n + 1}", real=True))


def _rank(d: Diff) -> int:
    kind, k = d
    return 2 * (k - 1) + (1 if kind == "zb" else 0)


def _canonical(mono: Sequence[Diff]) -> tuple[int, tuple[Diff, ...]]:
    ranks = [_rank(d) for d in mono]
    if len(set(ranks)) != len(ranks):
        return 0, ()
    inversions = sum(1 for i in range(len(ranks)) for j in range(i + 1, len(ranks))
                     if ranks[i] > ranks[j])
    return (-1) ** inversions, tuple(sorted(mono, key=_rank))


def wedge(a: Mapping, b: Mapping) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            sign, mono = _canonical(ma + mb)
            if sign:
                out[mono] = out.get(mono, 0) + sign * ca * cb
    return {m: c for m, c in out.items() if c != 0}


def add(a: Mapping, b: Mapping, scale=1) -> dict:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, 0) + scale * c
    return out


def scale(a: Mapping, factor) -> dict:
    return {m: factor * c for m, c in a.items()}


def d_z(expr, k: int, xs: Sequence[sp.Symbol]):
    return (sp.diff(expr, xs[2 * k - 2]) - sp.I * sp.diff(expr, xs[2 * k - 1])) / 2


def d_zbar(expr, k: int, xs: Sequence[sp.Symbol]):
    return (sp.diff(expr, xs[2 * k - 2]) + sp.I * sp.diff(expr, xs[2 * k - 1])) / 2


def holomorphic_d(form: Mapping, n: int, xs) -> dict:
    out: dict = {}
    for k in range(1, n + 1):
        piece = {m: d_z(c, k, xs) for m, c in form.items()}
        out = add(out, wedge({(("z", k),): 1}, piece))
    return out


def antiholomorphic_d(form: Mapping, n: int, xs) -> dict:
    out: dict = {}
    for k in range(1, n + 1):
        piece = {m: d_zbar(c, k, xs) for m, c in form.items()}
        out = add(out, wedge({(("zb", k),): 1}, piece))
    return out


def volume_coefficient(form: Mapping, n: int):
    """Coefficient of ``dz_1 ^ dzbar_1 ^ ... ^ dz_n ^ dzbar_n``."""
    target = tuple(d for k in range(1, n + 1) for d in (("z", k), ("zb", k)))
    return form.get(target, 0)


def basis_coefficients(theta: Mapping, n: int) -> sp.Matrix:
    """Matrix ``T_pq`` with ``theta = (i/2)^{n-1} (n-1)! sum s(p,q) T_pq e_pq``.

    Uses only the defining property ``dz_p ^ dzbar_q ^ s(p,q) e_pq = volume``.
    """
    norm = (sp.I / 2) ** (n - 1) * math.factorial(n - 1)
    out = sp.zeros(n, n)
    for p in range(1, n + 1):
        for q in range(1, n + 1):
            probe = {(("z", p), ("zb", q)): 1}
            out[p - 1, q - 1] = volume_coefficient(wedge(probe, theta), n) / norm
    return out


def kahler_form(g: sp.Matrix) -> dict:
    n = g.shape[0]
    return {(("z", i + 1), ("zb", j + 1)): sp.I / 2 * g[i, j]
            for i in range(n) for j in range(n) if g[i, j] != 0}


def power(form: Mapping, k: int) -> dict:
    out = {(): 1}
    for _ in range(k):
        out = wedge(out, form)
    return out


def power_map(g: sp.Matrix) -> sp.Matrix:
    """Coefficient matrix of ``omega^{n-1}`` by full wedge expansion."""
    n = g.shape[0]
    return basis_coefficients(power(kahler_form(g), n - 1), n).applyfunc(sp.expand)


def form_n2(components: Mapping[tuple[tuple[int, ...], tuple[int, ...]], sp.Expr], n: int) -> dict:
    """``(n-1)! (i/2)^{n-2} sum phi_PQ dz_{p1} ^ dzbar_{q1} ^ ...`` as an explicit form."""
    norm = math.factorial(n - 1) * (sp.I / 2) ** (n - 2)
    out: dict = {}
    for (P, Q), expr in components.items():
        piece = {(): norm * expr}
        for p, q in zip(sorted(P), sorted(Q)):
            piece = wedge(piece, {(("z", p),): 1})
            piece = wedge(piece, {(("zb", q),): 1})
        out = add(out, piece)
    return out


def ddbar_matrix(components: Mapping, n: int, xs) -> sp.Matrix:
    """Coefficient matrix of ``(i/2) ddbar phi`` by symbolic differentiation."""
    phi = form_n2(components, n)
    theta = scale(holomorphic_d(antiholomorphic_d(phi, n, xs), n, xs), sp.I / 2)
    return basis_coefficients(theta, n)


def evaluate(matrix: sp.Matrix, xs, points: np.ndarray) -> np.ndarray:
    """Evaluate a symbolic matrix at ``points`` (shape ``(m, 2n)``)."""
    n = matrix.shape[0]
    out = np.zeros((points.shape[0], n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            fn = sp.lambdify(xs, matrix[i, j], "numpy")
            out[:, i, j] = np.broadcast_to(fn(*points.T), points.shape[0])
    return out


def random_sparse_form(n: int, xs, rng: np.random.Generator, axes: Sequence[int],
                       ncomponents: int = 3, max_mode: int = 2) -> dict:
    """Random real ``(n-2, n-2)``-form with trigonometric-polynomial components."""
    from itertools import combinations

    subsets = list(combinations(range(1, n + 1), n - 2))
    comps: dict = {}
    for _ in range(ncomponents):
        P = subsets[rng.integers(len(subsets))]
        Q = subsets[rng.integers(len(subsets))]
        expr = 0
        for _ in range(2):
            ks = rng.integers(-max_mode, max_mode + 1, size=len(axes))
            amp = complex(rng.standard_normal(), rng.standard_normal())
            phase = sum(int(k) * xs[a - 1] for k, a in zip(ks, axes))
            expr += sp.nsimplify(round(amp.real, 3)) * sp.cos(phase) \
                + sp.I * sp.nsimplify(round(amp.imag, 3)) * sp.sin(phase + 1)
        if P == Q:
            expr = sp.re(sp.expand_complex(expr))
            comps[(P, P)] = comps.get((P, P), 0) + expr
        else:
            comps[(P, Q)] = comps.get((P, Q), 0) + expr
            comps[(Q, P)] = comps.get((Q, P), 0) + sp.conjugate(expr)
    return comps
