"""Sign bookkeeping for wedge products of coordinate differentials.

Generators are numbered so that the complex volume monomial
``dz_1 ^ dzbar_1 ^ ... ^ dz_n ^ dzbar_n`` is the ascending sequence:
``dz_k -> 2(k-1)`` and ``dzbar_k -> 2(k-1) + 1``.  Every table here is
derived from permutation parity, never typed in by hand.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np


def dz(k: int) -> int:
    return 2 * (k - 1)


def dzbar(k: int) -> int:
    return 2 * (k - 1) + 1


def permutation_sign(seq: Sequence[int]) -> int:
    """Parity of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    order = sorted(range(len(seq)), key=seq.__getitem__)
    seen = [False] * len(seq)
    sign = 1
    for start in range(len(seq)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def wedge(*monomials: Iterable[int]) -> tuple[int, tuple[int, ...]]:
    """Wedge generator sequences; returns ``(sign, ascending monomial)``."""
    seq = [g for m in monomials for g in m]
    sign = permutation_sign(seq)
    return sign, tuple(sorted(seq)) if sign else ()


def sign_s(p: int, q: int) -> int:
    """Orientation sign attached to the ``(p, q)`` basis ``(n-1, n-1)``-form."""
    return 1 if p <= q else -1


def omitted_monomial(n: int, p: int, q: int) -> tuple[int, ...]:
    """``dz_1 ^ dzbar_1 ^ ...`` with ``dz_p`` and ``dzbar_q`` left out."""
    return tuple(g for g in range(2 * n) if g not in (dz(p), dzbar(q)))


def paired_monomial(P: Sequence[int], Q: Sequence[int]) -> tuple[int, ...]:
    """``dz_{p1} ^ dzbar_{q1} ^ dz_{p2} ^ dzbar_{q2} ^ ...`` for sorted ``P, Q``."""
    out: list[int] = []
    for p, q in zip(sorted(P), sorted(Q)):
        out += [dz(p), dzbar(q)]
    return tuple(out)


def top_sign(seq: Sequence[int], n: int) -> int:
    """Sign of a degree-``2n`` generator sequence against the volume monomial."""
    if len(seq) != 2 * n:
        raise ValueError("not a top-degree sequence")
    return permutation_sign(seq)


def subsets(n: int, size: int) -> list[tuple[int, ...]]:
    return list(combinations(range(1, n + 1), size))


@lru_cache(maxsize=None)
def ddbar_terms(n: int, P: tuple[int, ...], Q: tuple[int, ...]) -> tuple[tuple[int, int, int, int, int], ...]:
    """Contributions of ``ddbar(phi_PQ * paired(P, Q))`` to the coefficient matrix.

    Returns tuples ``(p, q, a, b, c)`` meaning the ``(p, q)`` coefficient
    receives ``c * d^2 phi_PQ / dz_a dzbar_b``.
    """
    full = set(range(1, n + 1))
    rest_p = sorted(full - set(P))
    rest_q = sorted(full - set(Q))
    if len(rest_p) != 2 or len(rest_q) != 2:
        raise ValueError("P and Q must be (n-2)-subsets")
    mono = paired_monomial(P, Q)
    out = []
    for a in rest_p:
        p = rest_p[1] if a == rest_p[0] else rest_p[0]
        for b in rest_q:
            q = rest_q[1] if b == rest_q[0] else rest_q[0]
            sign, result = wedge((dz(a), dzbar(b)), mono)
            if result != omitted_monomial(n, p, q):
                raise AssertionError("wedge bookkeeping inconsistent")
            out.append((p, q, a, b, sign * sign_s(p, q)))
    return tuple(out)


def eta_power_table(n: int, kinds: Sequence[bool]) -> np.ndarray:
    """Signed counts for ``sum_S paired(S, S) ^ w_1 ^ w_2 ^ w_3 ^ w_4``.

    ``kinds[m]`` is True when the m-th one-form is a ``dzbar``.  The result
    ``T[i1, i2, i3, i4]`` (0-based) is the coefficient against the volume
    monomial, summed over all ``(n-2)``-subsets ``S``.
    """
    return _eta_power_table(n, tuple(bool(k) for k in kinds))


@lru_cache(maxsize=None)
def _eta_power_table(n: int, kinds: tuple[bool, ...]) -> np.ndarray:
    table = np.zeros((n,) * len(kinds))
    for S in subsets(n, n - 2):
        mono = paired_monomial(S, S)
        for idx in np.ndindex(*table.shape):
            gens = tuple(dzbar(i + 1) if bar else dz(i + 1) for i, bar in zip(idx, kinds))
            sign, _ = wedge(mono, gens)
            table[idx] += sign
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def eta_ansatz_table(n: int) -> np.ndarray:
    """Linear map ``H -> F`` for the form ``u * eta^{n-2}``.

    ``F[p, q] = sum_{a, b} T[p, q, a, b] * d^2 u / dz_a dzbar_b`` where ``F`` is
    the coefficient matrix of ``(i/2) ddbar(u eta^{n-2})`` and ``eta`` is the
    standard flat metric.
    """
    weight = math.factorial(n - 2) / math.factorial(n - 1)
    table = np.zeros((n, n, n, n))
    for S in subsets(n, n - 2):
        for p, q, a, b, c in ddbar_terms(n, S, S):
            table[p - 1, q - 1, a - 1, b - 1] += c * weight
    table.setflags(write=False)
    return table
