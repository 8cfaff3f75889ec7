"""Behaviors in probability and correlator form, and the vertices of the
local / no-disturbance polytope.

A correlator vector is a plain 1-d array of length ``s.dimension``. A
probability table is a :class:`ProbabilityTable` wrapping an array indexed as
``p[x, ctx, a, b1, b2]`` where outcome index 0 means +1 and 1 means -1.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exact import affine_rank
from .scenario import Scenario

SIGNS = np.array([1, -1])
# outcome grids over (a, b1, b2)
_A, _B1, _B2 = np.meshgrid(SIGNS, SIGNS, SIGNS, indexing="ij")
VALIDITY_EPS = 1e-9


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class ProbabilityTable:
    scenario: Scenario
    p: np.ndarray  # shape (2, n, 2, 2, 2)

    def __post_init__(self) -> None:
        shape = (2, self.scenario.n_bob, 2, 2, 2)
        if self.p.shape != shape:
            raise ValueError(f"expected table of shape {shape}, got {self.p.shape}")

    def prob(self, a: int, b1: int, b2: int, x: int, ctx: int) -> float:
        """Probability for outcomes given as +-1 values."""
        return float(self.p[x, ctx, (1 - a) // 2, (1 - b1) // 2, (1 - b2) // 2])

    def normalization_error(self) -> float:
        return float(np.max(np.abs(self.p.sum(axis=(2, 3, 4)) - 1.0)))

    def bob_marginal(self, y: int, ctx: int) -> np.ndarray:
        """p(b | y) read off context ``ctx``, for each x: shape (2, 2)."""
        y1, y2 = self.scenario.contexts[ctx]
        if y == y1:
            return self.p[:, ctx].sum(axis=(1, 3))
        if y == y2:
            return self.p[:, ctx].sum(axis=(1, 2))
        raise ValueError(f"measurement {y} is not in context {ctx}")


def _check_length(s: Scenario, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c)
    if c.shape != (s.dimension,):
        raise ValueError(f"correlator vector must have length {s.dimension}, got shape {c.shape}")
    return c


def correlators_to_probabilities(s: Scenario, c: np.ndarray) -> ProbabilityTable:
    """Expand correlators into all ``8 n`` conditional distributions.

    No positivity is enforced; use :func:`is_valid_behavior` for that.
    """
    c = _check_length(s, c).astype(float)
    n = s.n_bob
    p = np.empty((2, n, 2, 2, 2))
    a, b1, b2 = _A, _B1, _B2
    for x in range(2):
        for k, (y1, y2) in enumerate(s.contexts):
            p[x, k] = (
                1
                + a * c[s.pos_a(x)]
                + b1 * c[s.pos_b(y1)]
                + b2 * c[s.pos_b(y2)]
                + b1 * b2 * c[s.pos_bb(k)]
                + a * b1 * c[s.pos_ab(x, y1)]
                + a * b2 * c[s.pos_ab(x, y2)]
                + a * b1 * b2 * c[s.pos_abb(x, k)]
            ) / 8.0
    return ProbabilityTable(s, p)


def probabilities_to_correlators(table: ProbabilityTable, tol: float = 1e-9) -> np.ndarray:
    """Correlators as differences of parity probabilities.

    Marginal correlators that can be read from several (x, context) blocks are
    averaged over them, which makes this the exact inverse of
    :func:`correlators_to_probabilities`.
    """
    err = table.normalization_error()
    if err > tol:
        raise NormalizationError(f"table is not normalized (max deviation {err:.3g})")
    s = table.scenario
    n = s.n_bob
    p = table.p
    funcs = {
        "a": _A,
        "b1": _B1,
        "b2": _B2,
        "b1b2": _B1 * _B2,
        "ab1": _A * _B1,
        "ab2": _A * _B2,
        "ab1b2": _A * _B1 * _B2,
    }
    mom = {k: np.einsum("xkabc,abc->xk", p, f) for k, f in funcs.items()}
    c = np.zeros(s.dimension)
    for x in range(2):
        c[s.pos_a(x)] = mom["a"][x].mean()
    for y in range(n):
        vals_b = []
        vals_ab = [[], []]
        for k in s.contexts_of(y):
            key = "b1" if s.contexts[k][0] == y else "b2"
            vals_b.extend(mom[key][:, k])
            for x in range(2):
                vals_ab[x].append(mom["a" + key][x, k])
        c[s.pos_b(y)] = np.mean(vals_b)
        for x in range(2):
            c[s.pos_ab(x, y)] = np.mean(vals_ab[x])
    for k in range(n):
        c[s.pos_bb(k)] = mom["b1b2"][:, k].mean()
        for x in range(2):
            c[s.pos_abb(x, k)] = mom["ab1b2"][x, k]
    return c


def is_valid_behavior(s: Scenario, c: np.ndarray, eps: float = VALIDITY_EPS) -> bool:
    c = _check_length(s, c)
    if np.any(np.abs(c) > 1 + eps):
        return False
    return bool(correlators_to_probabilities(s, c).p.min() >= -eps)


@dataclass(frozen=True)
class DisturbanceReport:
    max_violation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def check_no_disturbance(table: ProbabilityTable, tol: float = 0.0) -> DisturbanceReport:
    """Largest difference of a single-measurement marginal p(b|y) between the
    two contexts that contain ``y`` (checked for each Alice input)."""
    s = table.scenario
    worst = 0.0
    for y in range(s.n_bob):
        k1, k2 = s.contexts_of(y)
        diff = np.abs(table.bob_marginal(y, k1) - table.bob_marginal(y, k2))
        worst = max(worst, float(diff.max()))
    return DisturbanceReport(worst, tol)


def check_no_signalling(table: ProbabilityTable, tol: float = 0.0) -> DisturbanceReport:
    """Largest violation of the no-signalling conditions in both directions."""
    p = table.p
    alice = p.sum(axis=(3, 4))  # (x, k, a)
    bob = p.sum(axis=2)  # (x, k, b1, b2)
    worst = max(
        float(np.max(np.abs(alice - alice[:, :1]))),
        float(np.max(np.abs(bob - bob[:1]))),
    )
    return DisturbanceReport(worst, tol)


@dataclass(frozen=True)
class VertexSet:
    """Extremal points of the local / no-disturbance polytope.

    ``bob_noncontextual`` and ``bob_contextual`` hold Bob's marginal part as
    ``[<B_0> .. <B_{n-1}>, <B_ctx0> .. <B_ctx{n-1}>]``; ``product`` holds the
    full correlator vectors.
    """

    scenario: Scenario
    alice: np.ndarray
    bob_noncontextual: np.ndarray
    bob_contextual: np.ndarray
    product: np.ndarray
    product_kind: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.product)

    def counts(self) -> dict[str, int]:
        return {
            "alice_deterministic": len(self.alice),
            "bob_noncontextual": len(self.bob_noncontextual),
            "bob_contextual": len(self.bob_contextual),
            "product": len(self.product),
        }


def _product_vertex(s: Scenario, alice: np.ndarray, bob: np.ndarray) -> np.ndarray:
    n = s.n_bob
    v = np.zeros(s.dimension, dtype=np.int64)
    bs, bbs = bob[:n], bob[n:]
    for x in range(2):
        v[s.pos_a(x)] = alice[x]
        for y in range(n):
            v[s.pos_ab(x, y)] = alice[x] * bs[y]
        for k in range(n):
            v[s.pos_abb(x, k)] = alice[x] * bbs[k]
    for y in range(n):
        v[s.pos_b(y)] = bs[y]
    for k in range(n):
        v[s.pos_bb(k)] = bbs[k]
    return v


def enumerate_vertices(s: Scenario) -> VertexSet:
    n = s.n_bob
    alice = np.array(list(itertools.product((1, -1), repeat=2)), dtype=np.int64)
    nc = []
    for signs in itertools.product((1, -1), repeat=n):
        pairs = [signs[y1] * signs[y2] for y1, y2 in s.contexts]
        nc.append(list(signs) + pairs)
    ctx = []
    for pairs in itertools.product((1, -1), repeat=n):
        if np.prod(pairs) == -1:
            ctx.append([0] * n + list(pairs))
    nc_arr = np.array(nc, dtype=np.int64)
    ctx_arr = np.array(ctx, dtype=np.int64)
    product, kinds = [], []
    for kind, bobs in (("noncontextual", nc_arr), ("contextual", ctx_arr)):
        for bob in bobs:
            for al in alice:
                product.append(_product_vertex(s, al, bob))
                kinds.append(kind)
    product_arr = np.array(product, dtype=np.int64)
    if len({tuple(v) for v in product_arr}) != len(product_arr):
        raise AssertionError("duplicate vertices generated")
    return VertexSet(s, alice, nc_arr, ctx_arr, product_arr, tuple(kinds))


def affine_dimension(vertices: np.ndarray) -> int:
    """Exact dimension of the affine hull of integer points."""
    pts = np.asarray(vertices)
    if pts.ndim == 1:
        pts = pts[None, :]
    return affine_rank(pts.tolist())


def write_vertices_csv(path: str | Path, vs: VertexSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(vs.scenario.labels())
        for v in vs.product:
            w.writerow([int(t) for t in v])


def read_vertices_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[int(t) for t in r] for r in rows[1:]], dtype=np.int64)
