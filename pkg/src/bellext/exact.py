"""Exact integer linear algebra used by the polytope code."""
from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence


def integer_rank(rows: Iterable[Sequence[int]]) -> int:
    """Rank of an integer matrix by fraction-free (Bareiss) elimination.

    Works on Python ints throughout, so there is no round-off at any size.
    """
    m = [[int(v) for v in r] for r in rows]
    if not m:
        return 0
    ncols = len(m[0])
    rank = 0
    prev = 1
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        p = m[rank][col]
        for r in range(rank + 1, len(m)):
            f = m[r][col]
            row_r, row_p = m[r], m[rank]
            m[r] = [(p * row_r[c] - f * row_p[c]) // prev for c in range(ncols)]
        prev = p
        rank += 1
        if rank == len(m):
            break
    return rank


def affine_rank(points: Sequence[Sequence[int]]) -> int:
    """Dimension of the affine hull of integer points (``-1`` for no points)."""
    if len(points) == 0:
        return -1
    base = [int(v) for v in points[0]]
    diffs = [[int(v) - b for v, b in zip(p, base)] for p in points[1:]]
    return integer_rank(diffs)


def _primitive(v: Sequence[Fraction]) -> list[int]:
    """Scale a rational vector to coprime integers."""
    den = 1
    for x in v:
        den = den * x.denominator // gcd(den, x.denominator)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, x)
    return [x // g for x in ints] if g > 1 else ints


def rref(rows: Sequence[Sequence[int]], ncols: int) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form over the rationals and its pivot columns."""
    m = [[Fraction(v) for v in r] for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == len(m):
            break
        p = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        piv = m[r][c]
        m[r] = [v / piv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
    return m[:r], pivots


def integer_nullspace(rows: Sequence[Sequence[int]], ncols: int) -> list[list[int]]:
    """Primitive integer basis of ``{v : rows @ v = 0}``."""
    m, pivots = rref(rows, ncols)
    basis = []
    for fc in (c for c in range(ncols) if c not in set(pivots)):
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -m[i][fc]
        basis.append(_primitive(v))
    return basis
