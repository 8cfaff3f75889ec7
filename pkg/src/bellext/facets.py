"""Exact facet enumeration of integer polytopes by adjacency decomposition.

Facets are found by rotating a known facet about each of its ridges; the
ridges of a facet are the facets of a lower-dimensional polytope and are
found the same way, recursively, down to simplices. At the top level only one
facet per symmetry class is expanded.

A functional is a primitive integer vector ``f`` of length ``d + 1`` acting as
``f(x) = f[0] + f[1:] . x``; a valid inequality reads ``f(x) >= 0``. All
functionals live in the ambient coordinates, so results computed for a face
can be reused by every face that contains it.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

try:  # optional: double description for small faces
    import cdd
except ImportError:  # pragma: no cover - exercised only without the extra
    cdd = None

from .exact import _primitive, affine_rank, integer_nullspace, integer_rank, rref
from .polytope import Inequality, SymmetryGroup, canonicalize, orbit


log = logging.getLogger(__name__)


class FacetBudgetExceeded(RuntimeError):
    """Raised when the time budget runs out; ``partial`` holds the facet
    classes found so far."""

    def __init__(self, message: str, partial: list[Inequality]):
        super().__init__(message)
        self.partial = partial


class _OutOfTime(Exception):
    pass


@dataclass
class _Context:
    points: list[tuple[int, ...]]
    deadline: float | None
    dd_max_vertices: int = 70
    cache: dict[frozenset, list[tuple[frozenset, tuple[int, ...]]]] = field(default_factory=dict)

    def tick(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _OutOfTime

    def value(self, f: Sequence[int], i: int) -> int:
        p = self.points[i]
        return f[0] + sum(a * b for a, b in zip(f[1:], p))


def _pivot_columns(points: list[tuple[int, ...]], ids: Sequence[int]) -> list[int]:
    base = points[ids[0]]
    diffs = [[a - b for a, b in zip(points[i], base)] for i in ids[1:]]
    return rref(diffs, len(base))[1] if diffs else []


def _lift(f_proj: Sequence[int], cols: Sequence[int], d: int) -> tuple[int, ...]:
    f = [0] * (d + 1)
    f[0] = f_proj[0]
    for j, c in enumerate(cols):
        f[c + 1] = f_proj[j + 1]
    return tuple(f)


def _rotate(ctx: _Context, f: Sequence[int], g: Sequence[int], ids: Sequence[int]) -> tuple[int, ...]:
    """Turn the valid ``f`` about the common zero set of ``f`` and ``g``
    until the first point off ``f`` becomes tight.

    Only the values of ``g`` on the zero set of ``f`` matter, so ``g`` may be
    any extension of a facet functional of that face.
    """
    best = None
    for i in ids:
        fi = ctx.value(f, i)
        if fi > 0:
            gi = ctx.value(g, i)
            # smallest g/f, compared without division
            if best is None or gi * best[0] < best[1] * fi:
                best = (fi, gi)
    fu, gu = best
    return tuple(_primitive_int([fu * b - gu * a for a, b in zip(f, g)]))


def _primitive_int(v: list[int]) -> list[int]:
    from math import gcd

    g = 0
    for x in v:
        g = gcd(g, x)
    return [x // g for x in v] if g > 1 else v


def _tight(ctx: _Context, f: Sequence[int], ids: Sequence[int]) -> frozenset:
    return frozenset(i for i in ids if ctx.value(f, i) == 0)


def _simplex_facets(ctx: _Context, ids: list[int], cols: list[int]) -> list[tuple[frozenset, tuple[int, ...]]]:
    d = len(ctx.points[0])
    hom = [[1] + [ctx.points[i][c] for c in cols] for i in ids]
    k = len(hom)
    # columns of the inverse are the functionals with f_j(p_i) = delta_ij
    aug = [row + [1 if r == c else 0 for c in range(k)] for r, row in enumerate(hom)]
    m, _ = rref(aug, 2 * k)
    out = []
    for j, i in enumerate(ids):
        f = _primitive([m[r][k + j] for r in range(k)])
        out.append((frozenset(ids) - {i}, _lift(f, cols, d)))
    return out


def _initial_facet(ctx: _Context, ids: list[int], cols: list[int], k: int) -> tuple[int, ...]:
    d = len(ctx.points[0])
    proj = {i: [ctx.points[i][c] for c in cols] for i in ids}
    top = max(proj[i][0] for i in ids)
    f = _lift([top, -1] + [0] * (k - 1), cols, d)
    while True:
        ctx.tick()
        tight = sorted(_tight(ctx, f, ids))
        if affine_rank([proj[i] for i in tight]) == k - 1:
            return f
        null = integer_nullspace([[1] + proj[i] for i in tight], k + 1)
        f_proj = [f[0]] + [f[c + 1] for c in cols]
        g_proj = next(v for v in null if integer_rank([v, f_proj]) == 2)
        f = _rotate(ctx, f, _lift(g_proj, cols, d), ids)


def _exact_functional(ctx: _Context, tight: list[int], ids: list[int], cols: list[int], approx) -> tuple[int, ...]:
    """Integer functional vanishing exactly on ``tight``; ``approx`` is a
    floating-point guess that is confirmed exactly or replaced."""
    d = len(ctx.points[0])
    nz = [abs(v) for v in approx if abs(v) > 1e-9]
    if nz:
        scale = min(nz)
        guess = _lift(_primitive([Fraction(v / scale).limit_denominator(1000) for v in approx]), cols, d)
        tset = set(tight)
        if all((ctx.value(guess, i) == 0) == (i in tset) and ctx.value(guess, i) >= 0 for i in ids):
            return guess
    proj = [[1] + [ctx.points[i][c] for c in cols] for i in tight]
    (f,) = integer_nullspace(proj, len(cols) + 1)
    f = _lift(f, cols, d)
    if any(ctx.value(f, i) < 0 for i in ids):
        f = tuple(-v for v in f)
    return f


def _dd_facets(ctx: _Context, ids: list[int], cols: list[int], k: int) -> list[tuple[frozenset, tuple[int, ...]]]:
    mat = cdd.Matrix([[1] + [ctx.points[i][c] for c in cols] for i in ids], number_type="float")
    mat.rep_type = cdd.RepType.GENERATOR
    poly = cdd.Polyhedron(mat)
    rows = poly.get_inequalities()
    out = []
    for r, inc in enumerate(poly.get_incidence()):
        tight = sorted(ids[j] for j in inc)
        if len(tight) < k or r in rows.lin_set:
            continue
        out.append((frozenset(tight), _exact_functional(ctx, tight, ids, cols, rows[r])))
    return out


def _face_facets(ctx: _Context, face: frozenset, k: int) -> list[tuple[frozenset, tuple[int, ...]]]:
    """All facets of the ``k``-dimensional face spanned by ``face``."""
    hit = ctx.cache.get(face)
    if hit is not None:
        return hit
    ctx.tick()
    ids = sorted(face)
    cols = _pivot_columns(ctx.points, ids)
    if len(ids) == k + 1:
        out = _simplex_facets(ctx, ids, cols)
    elif cdd is not None and len(ids) <= ctx.dd_max_vertices:
        out = _dd_facets(ctx, ids, cols, k)
    else:
        f0 = _initial_facet(ctx, ids, cols, k)
        found = {_tight(ctx, f0, ids): f0}
        queue = [next(iter(found))]
        while queue:
            t = queue.pop()
            f_t = found[t]
            for ridge, g in _face_facets(ctx, t, k - 1):
                nf = _rotate(ctx, f_t, g, ids)
                nt = _tight(ctx, nf, ids)
                if nt not in found:
                    found[nt] = nf
                    queue.append(nt)
        out = list(found.items())
    ctx.cache[face] = out
    return out


def _canonical_face(perms: np.ndarray, ids: np.ndarray) -> tuple[int, ...]:
    """Smallest sorted image of a vertex subset under a permutation group."""
    rows = np.sort(perms[:, ids], axis=1)
    return tuple(int(v) for v in rows[np.lexsort(rows.T[::-1])[0]])


def _stabilizer(perms: np.ndarray, ids: np.ndarray) -> np.ndarray:
    mask = np.zeros(perms.shape[1], dtype=bool)
    mask[ids] = True
    return perms[np.all(mask[perms[:, ids]], axis=1)]


def _facet_reps(ctx: _Context, face: frozenset, k: int, perms: np.ndarray) -> list[tuple[frozenset, tuple[int, ...]]]:
    """One facet per orbit of the vertex-permutation group ``perms`` (which
    must preserve ``face``)."""
    if len(perms) == 1:
        return _face_facets(ctx, face, k)
    reps: dict[tuple, tuple[frozenset, tuple[int, ...]]] = {}
    queue: list[tuple] = []

    def add(t: frozenset, f: tuple[int, ...]) -> None:
        key = _canonical_face(perms, np.fromiter(sorted(t), dtype=np.intp))
        if key not in reps:
            reps[key] = (t, f)
            queue.append(key)

    if len(face) == k + 1 or (cdd is not None and len(face) <= ctx.dd_max_vertices):
        for t, f in _face_facets(ctx, face, k):
            add(t, f)
        return list(reps.values())
    ids = sorted(face)
    f0 = _initial_facet(ctx, ids, _pivot_columns(ctx.points, ids), k)
    add(_tight(ctx, f0, ids), f0)
    while queue:
        ctx.tick()
        t, f = reps[queue.pop()]
        tids = np.fromiter(sorted(t), dtype=np.intp)
        for _, g in _facet_reps(ctx, t, k - 1, _stabilizer(perms, tids)):
            nf = _rotate(ctx, f, g, ids)
            add(_tight(ctx, nf, ids), nf)
    return list(reps.values())


def _vertex_permutations(points: list[tuple[int, ...]], group: SymmetryGroup) -> np.ndarray:
    index = {p: i for i, p in enumerate(points)}
    perms = np.empty((len(group.elements), len(points)), dtype=np.intp)
    for r, el in enumerate(group.elements):
        for i, p in enumerate(points):
            image = tuple(int(v) for v in el.apply(np.array(p)))
            if image not in index:
                raise ValueError("group does not preserve the vertex set")
            perms[r, i] = index[image]
    return perms


def _as_inequality(f: Sequence[int]) -> Inequality:
    return Inequality(tuple(-v for v in f[1:]), f[0])


def _as_functional(q: Inequality) -> tuple[int, ...]:
    return (q.local_bound, *(-c for c in q.coeffs))


@dataclass(frozen=True)
class FacetEnumeration:
    classes: tuple[Inequality, ...]
    orbit_sizes: tuple[int, ...]
    seconds: float

    @property
    def n_facets(self) -> int:
        return sum(self.orbit_sizes)


def facets_of_points(
    points: np.ndarray | Sequence[Sequence[int]],
    budget_seconds: float | None = None,
    dd_max_vertices: int = 70,
) -> list[Inequality]:
    """Every facet of the convex hull of full-dimensional integer points, with
    no symmetry reduction."""
    pts = [tuple(int(v) for v in p) for p in np.asarray(points)]
    d = len(pts[0])
    if affine_rank(pts) != d:
        raise ValueError("points must be full-dimensional")
    ctx = _Context(pts, None if budget_seconds is None else time.monotonic() + budget_seconds, dd_max_vertices)
    try:
        found = _face_facets(ctx, frozenset(range(len(pts))), d)
    except _OutOfTime:
        raise FacetBudgetExceeded("facet enumeration ran out of time", []) from None
    return sorted((_as_inequality(f) for _, f in found), key=lambda q: (q.local_bound, q.coeffs))


def enumerate_facet_classes(
    vertices: np.ndarray,
    group: SymmetryGroup,
    budget_seconds: float | None = 600.0,
    dd_max_vertices: int = 70,
) -> FacetEnumeration:
    """Facet classes of the polytope with the given integer vertices, up to the
    signed-permutation symmetries in ``group``.

    Raises :class:`FacetBudgetExceeded` (with the classes found so far) when
    the time budget runs out. Faces with at most ``dd_max_vertices`` vertices
    are handed to double description when pycddlib is installed.
    """
    start = time.monotonic()
    pts = [tuple(int(v) for v in p) for p in np.asarray(vertices)]
    d = len(pts[0])
    if affine_rank(pts) != d:
        raise ValueError("vertices must be full-dimensional")
    ctx = _Context(pts, None if budget_seconds is None else start + budget_seconds, dd_max_vertices)
    perms = _vertex_permutations(pts, group)
    everything = list(range(len(pts)))
    classes: dict[tuple, Inequality] = {}
    key = lambda q: (q.local_bound, q.coeffs)  # noqa: E731
    try:
        cols = _pivot_columns(pts, everything)
        f0 = _initial_facet(ctx, everything, cols, d)
        first = canonicalize(_as_inequality(f0), group)
        classes[key(first)] = first
        queue = [first]
        while queue:
            rep = queue.pop(0)
            f = _as_functional(rep)
            tight = _tight(ctx, f, everything)
            log.info("expanding class %d/%d (%d vertices), %.0f s", len(classes) - len(queue), len(classes),
                     len(tight), time.monotonic() - start)
            stab = _stabilizer(perms, np.fromiter(sorted(tight), dtype=np.intp))
            for _, g in _facet_reps(ctx, tight, d - 1, stab):
                nb = canonicalize(_as_inequality(_rotate(ctx, f, g, everything)), group)
                if key(nb) not in classes:
                    classes[key(nb)] = nb
                    queue.append(nb)
    except _OutOfTime:
        raise FacetBudgetExceeded(
            f"facet enumeration stopped after {budget_seconds} s with {len(classes)} classes",
            list(classes.values()),
        ) from None
    reps = sorted(classes.values(), key=key)
    return FacetEnumeration(
        classes=tuple(reps),
        orbit_sizes=tuple(len(orbit(q, group)) for q in reps),
        seconds=time.monotonic() - start,
    )


def write_classes_csv(path, classes: Sequence[Inequality], orbit_sizes: Sequence[int], labels: Sequence[str]) -> None:
    """One row per class: class index, orbit size, bound, coefficients."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "orbit_size", "beta_L", *labels])
        for i, (q, n) in enumerate(zip(classes, orbit_sizes), 1):
            w.writerow([i, n, q.local_bound, *q.coeffs])
