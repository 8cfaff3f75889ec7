"""Bell-like inequalities over the correlator vector: local bounds, facet
checks, and canonical forms under relabelings that respect the cycle."""
from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import VertexSet
from .exact import affine_rank
from .scenario import CYCLE4_SCENARIO, Scenario

DATA_ENV = "BELLEXT_DATA"


class TableError(ValueError):
    """Raised when the inequality table is missing or malformed."""


@dataclass(frozen=True)
class Inequality:
    coeffs: tuple[int, ...]
    local_bound: int
    quantum_bound_ref: float | None = None
    id: int | None = None
    sliwa_class: int | None = None
    # number of decimals beta_Q was printed with, for tolerance purposes
    quantum_bound_decimals: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))
        if not any(self.coeffs):
            raise ValueError("inequality coefficients are all zero")

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=np.int64)

    @property
    def name(self) -> str:
        return f"#{self.id}" if self.id is not None else "inequality"


def evaluate(ineq: Inequality, c: Sequence[float]) -> float:
    c = np.asarray(c)
    if c.shape != (len(ineq.coeffs),):
        raise ValueError(f"dimension mismatch: {len(ineq.coeffs)} coefficients, vector shape {c.shape}")
    if np.issubdtype(c.dtype, np.integer):
        return int(ineq.vector @ c)
    return float(ineq.vector @ c)


def local_bound(ineq: Inequality, vs: VertexSet) -> int:
    """Maximum of the inequality over the polytope vertices (exact)."""
    return int((vs.product @ ineq.vector).max())


@dataclass(frozen=True)
class FacetReport:
    ineq_id: int | None
    declared_bound: int
    max_value: int
    n_tight: int
    tight_dimension: int
    full_dimension: int

    @property
    def valid(self) -> bool:
        return self.max_value <= self.declared_bound

    @property
    def is_facet(self) -> bool:
        return self.valid and self.tight_dimension == self.full_dimension - 1


def verify_facet(ineq: Inequality, vs: VertexSet, full_dimension: int | None = None) -> FacetReport:
    values = vs.product @ ineq.vector
    tight = vs.product[values == ineq.local_bound]
    if full_dimension is None:
        full_dimension = affine_rank(vs.product.tolist())
    return FacetReport(
        ineq_id=ineq.id,
        declared_bound=ineq.local_bound,
        max_value=int(values.max()),
        n_tight=len(tight),
        tight_dimension=affine_rank(tight.tolist()),
        full_dimension=full_dimension,
    )


# --------------------------------------------------------------------------
# bundled table


def default_table_path() -> Path:
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("bellext") / "data" / "table1.csv"))


def load_table(path: str | Path | None = None, scenario: Scenario = CYCLE4_SCENARIO) -> list[Inequality]:
    """Read the 26-row inequality table (CSV: id, sliwa_class, coefficients,
    beta_L, beta_Q)."""
    path = Path(path) if path is not None else default_table_path()
    d = scenario.dimension
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TableError(f"cannot read inequality table {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["id", "sliwa_class"]:
        raise TableError(f"{path}: missing or unexpected header")
    header = rows[0]
    if len(header) != d + 4 or header[2:-2] != scenario.labels():
        raise TableError(f"{path}: coefficient columns do not match the canonical correlator order")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 4:
            raise TableError(f"{path}:{lineno}: expected {d + 4} fields, got {len(row)}")
        try:
            bq = row[-1].strip()
            out.append(
                Inequality(
                    coeffs=tuple(int(v) for v in row[2:-2]),
                    local_bound=int(row[-2]),
                    quantum_bound_ref=float(bq) if bq else None,
                    id=int(row[0]),
                    sliwa_class=int(row[1]) if row[1].strip() else None,
                    quantum_bound_decimals=len(bq.split(".")[1]) if "." in bq else 0,
                )
            )
        except ValueError as exc:
            raise TableError(f"{path}:{lineno}: {exc}") from exc
    return out


def get_inequality(ineq_id: int, path: str | Path | None = None) -> Inequality:
    for ineq in load_table(path):
        if ineq.id == ineq_id:
            return ineq
    raise KeyError(f"no inequality with id {ineq_id}")


def chsh_inequality(scenario: Scenario = CYCLE4_SCENARIO, bob: tuple[int, int] = (1, 3)) -> Inequality:
    """<A0 B_y> + <A0 B_y'> + <A1 B_y> - <A1 B_y'> <= 2 with ``(y, y') = bob``."""
    c = np.zeros(scenario.dimension, dtype=np.int64)
    y, yp = bob
    c[scenario.pos_ab(0, y)] = 1
    c[scenario.pos_ab(0, yp)] = 1
    c[scenario.pos_ab(1, y)] = 1
    c[scenario.pos_ab(1, yp)] = -1
    return Inequality(tuple(c), 2, 2 * np.sqrt(2))


# --------------------------------------------------------------------------
# relabeling symmetry


@dataclass(frozen=True)
class SignedPermutation:
    """Linear map ``v -> w`` with ``w[perm[i]] = sign[i] * v[i]``."""

    perm: tuple[int, ...]
    sign: tuple[int, ...]

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        w = np.empty_like(v)
        w[list(self.perm)] = np.array(self.sign) * v
        return w

    def compose(self, other: "SignedPermutation") -> "SignedPermutation":
        """``self`` after ``other``."""
        perm = tuple(self.perm[other.perm[i]] for i in range(len(self.perm)))
        sign = tuple(other.sign[i] * self.sign[other.perm[i]] for i in range(len(self.perm)))
        return SignedPermutation(perm, sign)

    def matrix(self) -> np.ndarray:
        n = len(self.perm)
        m = np.zeros((n, n), dtype=np.int64)
        m[list(self.perm), list(range(n))] = self.sign
        return m


def _relabeling(
    s: Scenario,
    alice_map: Sequence[int],
    alice_sign: Sequence[int],
    bob_map: Sequence[int],
    bob_sign: Sequence[int],
) -> SignedPermutation:
    """Signed permutation induced by A_x -> alice_sign[x] A_{alice_map[x]} and
    B_y -> bob_sign[y] B_{bob_map[y]}."""
    ctx_lookup = {frozenset(c): k for k, c in enumerate(s.contexts)}

    def ctx_image(k: int) -> int:
        y1, y2 = s.contexts[k]
        return ctx_lookup[frozenset((bob_map[y1], bob_map[y2]))]

    perm = [0] * s.dimension
    sign = [1] * s.dimension
    for i, idx in enumerate(s.indices):
        sg = 1
        if idx.x is not None:
            sg *= alice_sign[idx.x]
        if idx.y is not None:
            sg *= bob_sign[idx.y]
        if idx.ctx is not None:
            y1, y2 = s.contexts[idx.ctx]
            sg *= bob_sign[y1] * bob_sign[y2]
        if idx.kind == "A":
            j = s.pos_a(alice_map[idx.x])
        elif idx.kind == "B":
            j = s.pos_b(bob_map[idx.y])
        elif idx.kind == "AB":
            j = s.pos_ab(alice_map[idx.x], bob_map[idx.y])
        elif idx.kind == "BB":
            j = s.pos_bb(ctx_image(idx.ctx))
        else:
            j = s.pos_abb(alice_map[idx.x], ctx_image(idx.ctx))
        perm[i] = j
        sign[i] = sg
    return SignedPermutation(tuple(perm), tuple(sign))


@dataclass(frozen=True)
class SymmetryGroup:
    scenario: Scenario
    generators: tuple[SignedPermutation, ...]
    elements: tuple[SignedPermutation, ...]

    def __len__(self) -> int:
        return len(self.elements)


def cycle_symmetry_group(s: Scenario = CYCLE4_SCENARIO) -> SymmetryGroup:
    """Group generated by Alice input swap, outcome flips of every measurement,
    and the dihedral symmetries of Bob's compatibility cycle."""
    n = s.n_bob
    ident_a, ident_b = [0, 1], list(range(n))
    ones_a, ones_b = [1, 1], [1] * n
    gens = [_relabeling(s, [1, 0], ones_a, ident_b, ones_b)]
    for x in range(2):
        flip = list(ones_a)
        flip[x] = -1
        gens.append(_relabeling(s, ident_a, flip, ident_b, ones_b))
    for y in range(n):
        flip = list(ones_b)
        flip[y] = -1
        gens.append(_relabeling(s, ident_a, ones_a, ident_b, flip))
    gens.append(_relabeling(s, ident_a, ones_a, [(y + 1) % n for y in range(n)], ones_b))
    gens.append(_relabeling(s, ident_a, ones_a, [(-y) % n for y in range(n)], ones_b))

    identity = SignedPermutation(tuple(range(s.dimension)), tuple([1] * s.dimension))
    seen = {identity}
    order = [identity]
    queue = deque([identity])
    while queue:
        g = queue.popleft()
        for h in gens:
            gh = h.compose(g)
            if gh not in seen:
                seen.add(gh)
                order.append(gh)
                queue.append(gh)
    return SymmetryGroup(s, tuple(gens), tuple(order))


def orbit(ineq: Inequality, g: SymmetryGroup) -> set[tuple[int, ...]]:
    v = ineq.vector
    return {tuple(int(t) for t in el.apply(v)) for el in g.elements}


def canonicalize(ineq: Inequality, g: SymmetryGroup) -> Inequality:
    """Lexicographically smallest coefficient vector in the orbit."""
    best = min(orbit(ineq, g))
    return Inequality(best, ineq.local_bound, ineq.quantum_bound_ref, ineq.id, ineq.sliwa_class,
                      ineq.quantum_bound_decimals)


def equivalent(i1: Inequality, i2: Inequality, g: SymmetryGroup) -> bool:
    return i1.local_bound == i2.local_bound and canonicalize(i1, g).coeffs == canonicalize(i2, g).coeffs


def enumerate_facets(
    vs: VertexSet,
    group: SymmetryGroup | None = None,
    budget_seconds: float | None = 600.0,
) -> list[Inequality]:
    """Every facet of the polytope spanned by ``vs.product``.

    Only one facet per symmetry class is expanded; the rest are recovered as
    orbits. Raises ``FacetBudgetExceeded`` (carrying the classes found so far)
    when ``budget_seconds`` runs out. See :mod:`bellext.facets`.
    """
    from .facets import enumerate_facet_classes

    g = group if group is not None else cycle_symmetry_group(vs.scenario)
    res = enumerate_facet_classes(vs.product, g, budget_seconds)
    return [Inequality(c, q.local_bound) for q in res.classes for c in sorted(orbit(q, g))]
