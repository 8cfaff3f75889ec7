"""Measurement scenario: Alice with two dichotomic inputs, Bob with an n-cycle
of pairwise-compatible dichotomic measurements.

Correlators are laid out in a fixed order::

    <A_x>            x = 0, 1
    <B_y>            y = 0 .. n-1
    <A_x B_y>        x-major
    <B_y1 B_y2>      one per context, in cycle order
    <A_x B_y1 B_y2>  x-major, contexts in cycle order

For ``n = 4`` this is exactly the column order of the bundled inequality table.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

Kind = Literal["A", "B", "AB", "BB", "ABB"]
KINDS: tuple[Kind, ...] = ("A", "B", "AB", "BB", "ABB")


class InvalidScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelatorIndex:
    kind: Kind
    x: int | None = None
    y: int | None = None
    ctx: int | None = None

    def label(self, scenario: "Scenario") -> str:
        parts = []
        if self.x is not None:
            parts.append(f"A{self.x}")
        if self.y is not None:
            parts.append(f"B{self.y}")
        if self.ctx is not None:
            y1, y2 = scenario.contexts[self.ctx]
            parts.append(f"B{y1}B{y2}")
        return "".join(parts)


@dataclass(frozen=True)
class Scenario:
    """Bipartite scenario with Bob's measurements compatible along a cycle.

    Contexts are ordered pairs ``(y1, y2)`` with ``y1`` the cycle predecessor
    of ``y2``; outcome tuples follow the same order.
    """

    n_bob: int
    alice_inputs: int = 2
    outcomes: tuple[int, int] = (1, -1)
    contexts: tuple[tuple[int, int], ...] = field(init=False)
    indices: tuple[CorrelatorIndex, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_bob < 3:
            raise InvalidScenarioError(f"cycle scenario needs n_bob >= 3, got {self.n_bob}")
        if self.alice_inputs != 2:
            raise InvalidScenarioError("only two Alice inputs are supported")
        n = self.n_bob
        ctxs = tuple((y, (y + 1) % n) for y in range(n))
        object.__setattr__(self, "contexts", ctxs)
        idx: list[CorrelatorIndex] = []
        idx += [CorrelatorIndex("A", x=x) for x in range(2)]
        idx += [CorrelatorIndex("B", y=y) for y in range(n)]
        idx += [CorrelatorIndex("AB", x=x, y=y) for x in range(2) for y in range(n)]
        idx += [CorrelatorIndex("BB", ctx=k) for k in range(n)]
        idx += [CorrelatorIndex("ABB", x=x, ctx=k) for x in range(2) for k in range(n)]
        object.__setattr__(self, "indices", tuple(idx))

    @property
    def bob_inputs(self) -> int:
        return self.n_bob

    @property
    def dimension(self) -> int:
        return len(self.indices)

    def position(self, index: CorrelatorIndex) -> int:
        """Position of ``index`` in the correlator vector."""
        n = self.n_bob
        if index.kind == "A":
            return index.x
        if index.kind == "B":
            return 2 + index.y
        if index.kind == "AB":
            return 2 + n + index.x * n + index.y
        if index.kind == "BB":
            return 2 + 3 * n + index.ctx
        if index.kind == "ABB":
            return 2 + 4 * n + index.x * n + index.ctx
        raise KeyError(index)

    # shorthand positions used all over the place
    def pos_a(self, x: int) -> int:
        return x

    def pos_b(self, y: int) -> int:
        return 2 + y

    def pos_ab(self, x: int, y: int) -> int:
        return 2 + self.n_bob + x * self.n_bob + y

    def pos_bb(self, k: int) -> int:
        return 2 + 3 * self.n_bob + k

    def pos_abb(self, x: int, k: int) -> int:
        return 2 + 4 * self.n_bob + x * self.n_bob + k

    def contexts_of(self, y: int) -> list[int]:
        return [k for k, c in enumerate(self.contexts) if y in c]

    def labels(self) -> list[str]:
        return [i.label(self) for i in self.indices]


def build_cycle_scenario(n_bob: int = 4) -> Scenario:
    return Scenario(n_bob)


def correlator_dimension(s: Scenario) -> int:
    """Number of independent correlators, ``2 + 6 n``."""
    return s.dimension


CYCLE4_SCENARIO = build_cycle_scenario(4)
