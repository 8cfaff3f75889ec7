"""Seesaw lower bounds on quantum values of correlator Bell expressions.

Every expression handled here is written as a correlator tensor ``T`` over
``N`` qubit parties: ``T[i1, ..., iN]`` multiplies ``<O1[i1] ... ON[iN]>``
where setting index 0 is the identity and ``1..m_k`` are the party's
dichotomic observables. The 4-cycle scenario maps onto three virtual qubit
parties: Alice ``(A0, A1)``, ``(B0, B2)`` on the first factor of Bob's C^4 and
``(B1, B3)`` on the second, which makes every context commute by
construction.

All restarts ("seeds") run as one batch: arrays carry a leading seed axis and
each seed draws its random start from its own stream, derived from the master
seed by ``SeedSequence(master_seed, spawn_key=(seed_index,))``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .polytope import Inequality, evaluate
from .quantum import (
    DensityMatrix,
    DichotomicObservable,
    ExtendedModel,
    extract_behavior,
    dagger,
    haar_unitary,
    kron,
    random_pure_state,
)
from .scenario import CYCLE4_SCENARIO, Scenario

# eigenvalues at or below this are left out of the positive subspace
ZERO_EIG = 1e-12
# allowed decrease of the objective between two seesaw steps
MONOTONE_SLACK = 1e-9


class SeesawError(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrelatorGame:
    tensor: np.ndarray
    name: str = ""
    # "cycle4" marks the three-party image of the 4-cycle scenario
    layout: str = "generic"
    sweep_order: tuple[int, ...] | None = None

    @property
    def n_parties(self) -> int:
        return self.tensor.ndim

    @property
    def settings(self) -> tuple[int, ...]:
        return tuple(d - 1 for d in self.tensor.shape)

    @property
    def dim(self) -> int:
        return 2**self.n_parties


def _cycle_party_slot(y: int) -> tuple[int, int]:
    """Virtual party (1 or 2) and setting index of Bob's measurement ``y``."""
    return (1 if y % 2 == 0 else 2), y // 2 + 1


def game_from_inequality(ineq: Inequality, s: Scenario = CYCLE4_SCENARIO) -> CorrelatorGame:
    if s.n_bob != 4:
        raise ValueError("the seesaw embedding needs the 4-cycle scenario")
    t = np.zeros((3, 3, 3))
    for pos, c in enumerate(ineq.coeffs):
        if c == 0:
            continue
        idx = s.indices[pos]
        slot = [0, 0, 0]
        if idx.x is not None:
            slot[0] = idx.x + 1
        ys = [idx.y] if idx.y is not None else []
        if idx.ctx is not None:
            ys += list(s.contexts[idx.ctx])
        for y in ys:
            party, setting = _cycle_party_slot(y)
            if slot[party]:
                raise ValueError("context measurements must sit on different virtual parties")
            slot[party] = setting
        t[tuple(slot)] += c
    # the party holding B0 goes last: updating it before the others have built
    # up correlations tends to lock it to a trivial observable
    return CorrelatorGame(t, ineq.name, "cycle4", sweep_order=(2, 0, 1))


def chsh_game() -> CorrelatorGame:
    t = np.zeros((3, 3))
    t[1, 1] = t[1, 2] = t[2, 1] = 1
    t[2, 2] = -1
    return CorrelatorGame(t, "CHSH")


def i3322_game() -> CorrelatorGame:
    """-<A1>-<A2>-<B1>-<B2>-<A1B1>-<A2B1>-<A3B1>-<A1B2>-<A2B2>+<A3B2>-<A1B3>+<A2B3> <= 4."""
    t = np.zeros((4, 4))
    t[1, 0] = t[2, 0] = t[0, 1] = t[0, 2] = -1
    t[1, 1] = t[2, 1] = t[3, 1] = -1
    t[1, 2] = t[2, 2] = -1
    t[3, 2] = 1
    t[1, 3] = -1
    t[2, 3] = 1
    return CorrelatorGame(t, "I3322")


# --------------------------------------------------------------------------
# batched contractions

_LETTERS = "abcdefghijklmnopqrtuvwxyz"  # 's' is reserved for the seed axis


@lru_cache(maxsize=None)
def _subscripts(n: int):
    rows = _LETTERS[:n]
    cols = _LETTERS[n : 2 * n]
    sets = _LETTERS[2 * n : 3 * n]
    return rows, cols, sets


@lru_cache(maxsize=None)
def _einsum_path(expr: str, shapes: tuple[tuple[int, ...], ...]):
    ops = [np.empty(sh) for sh in shapes]
    return np.einsum_path(expr, *ops, optimize="greedy")[0]


def _einsum(expr: str, *ops: np.ndarray) -> np.ndarray:
    return np.einsum(expr, *ops, optimize=_einsum_path(expr, tuple(o.shape for o in ops)))


def _obs_term(k: int, n: int) -> str:
    rows, cols, sets = _subscripts(n)
    return "s" + sets[k] + cols[k] + rows[k]


def expectation(rho: np.ndarray, obs: Sequence[np.ndarray], game: CorrelatorGame) -> np.ndarray:
    """Value of the game for batched states (S, D, D) and observables
    ``obs[k]`` of shape (S, m_k + 1, 2, 2) with ``obs[k][:, 0] = 1``."""
    n = game.n_parties
    rows, cols, sets = _subscripts(n)
    s_dim = rho.shape[0]
    r = rho.reshape((s_dim,) + (2,) * (2 * n))
    expr = "s" + rows + cols + "," + sets + "," + ",".join(_obs_term(k, n) for k in range(n)) + "->s"
    return np.real(_einsum(expr, r, game.tensor, *obs))


def reduced(rho: np.ndarray, obs: Sequence[np.ndarray], game: CorrelatorGame, target: int) -> np.ndarray:
    """Operators ``K[s, i]`` (on the target's qubit) with value
    ``sum_i Tr[K[s, i] O_target[s, i]]``; ``K[:, 0]`` collects terms where the
    target acts trivially."""
    n = game.n_parties
    rows, cols, sets = _subscripts(n)
    s_dim = rho.shape[0]
    r = rho.reshape((s_dim,) + (2,) * (2 * n))
    others = [k for k in range(n) if k != target]
    expr = (
        "s" + rows + cols + "," + sets + ","
        + ",".join(_obs_term(k, n) for k in others)
        + "->s" + sets[target] + rows[target] + cols[target]
    )
    k_ops = _einsum(expr, r, game.tensor, *[obs[k] for k in others])
    return (k_ops + np.conj(np.swapaxes(k_ops, -1, -2))) / 2


def bell_operator(obs: Sequence[np.ndarray], game: CorrelatorGame) -> np.ndarray:
    n = game.n_parties
    rows, cols, sets = _subscripts(n)
    expr = sets + "," + ",".join(_obs_term(k, n) for k in range(n)) + "->s" + cols + rows
    b = _einsum(expr, game.tensor, *obs)
    s_dim = b.shape[0]
    b = b.reshape(s_dim, game.dim, game.dim)
    return (b + np.conj(np.swapaxes(b, -1, -2))) / 2


def _positive_part(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched projector onto eigenvalues > ZERO_EIG, plus the eigenvalues."""
    w, v = np.linalg.eigh(h)
    keep = (w > ZERO_EIG).astype(float)
    q = np.einsum("...ij,...j,...kj->...ik", v, keep, v.conj())
    return q, w


def _top_projector(h: np.ndarray) -> np.ndarray:
    """Batched rank-one projector onto the top eigenvector."""
    _, v = np.linalg.eigh(h)
    top = v[..., :, -1]
    return np.einsum("...i,...j->...ij", top, top.conj())


def _observables_from_plus(q: np.ndarray) -> np.ndarray:
    """Stack identity and ``2 Q - 1`` into the (S, m + 1, 2, 2) layout."""
    eye = np.broadcast_to(np.eye(2), q.shape[:-3] + (1, 2, 2))
    return np.concatenate([eye.astype(complex), 2 * q - np.eye(2)], axis=-3)


def _frame_update(rho: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local unitary on all parties but the first that does not decrease
    ``Tr[b rho]``.

    With ``b`` shifted to be positive semidefinite the objective is a convex
    function of the unitary, so moving to the maximiser of its linearisation
    (the polar factor of the gradient) is an ascent step.
    """
    n_seeds, d, _ = rho.shape
    shift = np.maximum(0.0, -np.linalg.eigvalsh(b)[:, 0])
    bt = b + shift[:, None, None] * np.eye(d)
    g = np.einsum("saiaj->sij", (rho @ bt).reshape(n_seeds, 2, d // 2, 2, d // 2))
    x, _, yh = np.linalg.svd(g)
    v = dagger(yh) @ dagger(x)
    u = np.einsum("ab,sij->saibj", np.eye(2), v).reshape(n_seeds, d, d)
    return u @ rho @ dagger(u)


def _top_eigvec(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(b)
    top = v[..., :, -1]
    # fix the global phase: largest-modulus entry real and positive
    j = np.argmax(np.abs(top) > np.abs(top).max(axis=-1, keepdims=True) - 1e-12, axis=-1)
    ph = np.take_along_axis(top, j[..., None], axis=-1)
    top = top * (np.abs(ph) / ph)
    return top, w[..., -1]


# --------------------------------------------------------------------------
# single-instance operations


def positive_subspace_update(delta: np.ndarray) -> DichotomicObservable:
    """Observable whose +1 projector spans the positive eigenspace of ``delta``;
    it maximises ``Tr[delta Q_plus]`` over projectors."""
    delta = np.asarray(delta, dtype=complex)
    q, _ = _positive_part((delta + delta.conj().T) / 2)
    return DichotomicObservable(q)


def state_update(bell_op: np.ndarray) -> tuple[DensityMatrix, float]:
    """Pure state on the top eigenvector of the Bell operator and its value."""
    b = np.asarray(bell_op, dtype=complex)
    d = b.shape[0]
    v, lam = _top_eigvec((b + b.conj().T) / 2)
    dims = (2, d // 2)
    return DensityMatrix(np.outer(v, v.conj()), dims), float(lam)


def _stack_party(observables: Sequence[np.ndarray]) -> np.ndarray:
    ops = [np.eye(2, dtype=complex)] + [np.asarray(getattr(o, "matrix", o), dtype=complex) for o in observables]
    return np.stack(ops)[None]


def reduced_operators(
    state: np.ndarray,
    observables: Sequence[Sequence[np.ndarray]],
    game: CorrelatorGame | Inequality,
    target: int,
) -> dict[tuple[int, int], np.ndarray]:
    """Operators ``rho_{Q_b|y}`` of the target party, keyed ``(y, b)``.

    ``observables[k]`` lists party ``k``'s dichotomic observables (the target's
    entry is ignored). The game value equals ``sum_{y,b} Tr[rho_{Q_b|y} Q_b|y]``
    for any choice of the target's projectors; terms in which the target acts
    trivially are split evenly over its settings.
    """
    if isinstance(game, Inequality):
        game = game_from_inequality(game)
    obs = []
    for k, m in enumerate(game.settings):
        if k == target:
            obs.append(np.broadcast_to(np.eye(2, dtype=complex), (1, m + 1, 2, 2)))
        else:
            obs.append(_stack_party(observables[k]))
    rho = np.asarray(getattr(state, "matrix", state), dtype=complex)[None]
    k_ops = reduced(rho, obs, game, target)[0]
    m = game.settings[target]
    out = {}
    for y in range(m):
        for b in (1, -1):
            out[(y, b)] = b * k_ops[y + 1] + k_ops[0] / m
    return out


def random_projective(dim: int, rng: np.random.Generator) -> DichotomicObservable:
    """Rank-one projective measurement ``Q_plus = U|0><0|U^dagger``, U Haar."""
    if dim != 2:
        raise ValueError("random projective measurements are drawn on qubits only")
    u = haar_unitary(dim, rng)
    v = u[:, 0]
    return DichotomicObservable(np.outer(v, v.conj()))


# --------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class SeesawConfig:
    seeds: int = 500
    max_sweeps: int = 1000
    convergence_tol: float = 1e-10
    optimize_state: bool = True
    master_seed: int = 0
    random_unitary_on_state: bool = True
    optimize_frame: bool = False
    party_order: tuple[int, ...] | None = None
    # restrict every observable to a traceless one (rank-one projectors)
    rank_one: bool = False
    batch_size: int = 100

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_sweeps < 1 or self.batch_size < 1:
            raise ValueError("max_sweeps and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SeesawResult:
    game: CorrelatorGame
    config: SeesawConfig
    best_value: float
    best_state: np.ndarray
    best_observables: list[np.ndarray]
    seed_values: np.ndarray
    sweeps_used: np.ndarray
    max_decrease: float = 0.0
    stopped_early: bool = False
    state_dims: tuple[int, int] = field(default=(2, 4))

    def model(self, s: Scenario = CYCLE4_SCENARIO) -> ExtendedModel:
        """The best point as a model on C^2 (x) C^4 (4-cycle games only)."""
        if self.game.layout != "cycle4":
            raise ValueError("only games built from a cycle inequality map to an extended model")
        a, bt, ct = self.best_observables
        alice = tuple(DichotomicObservable.from_hermitian(a[i]) for i in (1, 2))
        b_tilde = [DichotomicObservable.from_hermitian(bt[i]) for i in (1, 2)]
        c_tilde = [DichotomicObservable.from_hermitian(ct[i]) for i in (1, 2)]
        bob = (
            b_tilde[0].tensor_right(2),
            c_tilde[0].tensor_left(2),
            b_tilde[1].tensor_right(2),
            c_tilde[1].tensor_left(2),
        )
        return ExtendedModel(DensityMatrix(self.best_state, (2, 4)), alice, bob, s)

    def to_dict(self) -> dict:
        return {
            "game": self.game.name,
            "best_value": self.best_value,
            "seed_values": [float(v) for v in self.seed_values],
            "sweeps_used": [int(v) for v in self.sweeps_used],
            "master_seed": self.config.master_seed,
            "config": self.config.to_dict(),
            "stopped_early": self.stopped_early,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def seed_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _initial_point(
    game: CorrelatorGame,
    rng: np.random.Generator,
    fixed_state: np.ndarray | None,
    embed_unitary: bool,
) -> tuple[list[np.ndarray], np.ndarray]:
    obs = []
    for m in game.settings:
        ops = [np.eye(2, dtype=complex)] + [random_projective(2, rng).matrix for _ in range(m)]
        obs.append(np.stack(ops))
    if fixed_state is None:
        v = random_pure_state(game.dim, rng)
        rho = np.outer(v, v.conj())
    elif embed_unitary:
        # local unitary on everything but the first (Alice) qubit
        u = np.kron(np.eye(2), haar_unitary(game.dim // 2, rng))
        rho = u @ fixed_state @ u.conj().T
    else:
        rho = fixed_state
    return obs, rho


def _run_batch(
    game: CorrelatorGame,
    obs: list[np.ndarray],
    rho: np.ndarray,
    cfg: SeesawConfig,
    optimize_state: bool,
    frame: bool = False,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Iterate sweeps in place until every seed has converged."""
    n_seeds = rho.shape[0]
    n = game.n_parties
    sweeps = np.zeros(n_seeds, dtype=np.int64)
    active = np.ones(n_seeds, dtype=bool)
    last = expectation(rho, obs, game)
    sweep_start = last.copy()
    worst_drop = 0.0
    order = cfg.party_order or game.sweep_order or tuple(range(n))

    def check(idx, before, after):
        nonlocal worst_drop
        drop = float(np.max(before - after, initial=0.0))
        worst_drop = max(worst_drop, drop)
        if drop > MONOTONE_SLACK * max(1.0, float(np.max(np.abs(before), initial=1.0))):
            raise SeesawError(f"seesaw objective decreased by {drop:.3g}")

    for _ in range(cfg.max_sweeps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        o = [ob[idx] for ob in obs]
        r = rho[idx]
        prev = last[idx]
        for k in order:
            k_ops = reduced(r, o, game, k)
            cur = np.real(np.einsum("sicr,sirc->s", k_ops, o[k]))
            check(idx, prev, cur)
            q = _top_projector(k_ops[:, 1:]) if cfg.rank_one else _positive_part(k_ops[:, 1:])[0]
            o[k] = _observables_from_plus(q)
            prev = np.real(np.einsum("sicr,sirc->s", k_ops, o[k]))
            check(idx, cur, prev)
        if optimize_state:
            b = bell_operator(o, game)
            cur = np.real(np.einsum("src,scr->s", r, b))
            check(idx, prev, cur)
            v, lam = _top_eigvec(b)
            r = np.einsum("si,sj->sij", v, v.conj())
            prev = lam
        elif frame:
            b = bell_operator(o, game)
            cur = np.real(np.einsum("src,scr->s", r, b))
            check(idx, prev, cur)
            r = _frame_update(r, b)
            prev = cur
        end = expectation(r, o, game)
        check(idx, prev, end)
        for k in range(n):
            obs[k][idx] = o[k]
        rho[idx] = r
        sweeps[idx] += 1
        gain = end - sweep_start[idx]
        last[idx] = end
        sweep_start[idx] = end
        active[idx[gain < cfg.convergence_tol]] = False
    return last, sweeps, worst_drop


def run_game(
    game: CorrelatorGame,
    cfg: SeesawConfig = SeesawConfig(),
    state: np.ndarray | DensityMatrix | None = None,
    stop_above: float | None = None,
) -> SeesawResult:
    """Best value of ``game`` over ``cfg.seeds`` random restarts.

    With ``state`` given the state is held fixed (modulo a random local unitary
    on Bob's side per seed when ``cfg.random_unitary_on_state``) and only the
    measurements are optimised. ``stop_above`` ends the run after the first
    batch in which some seed exceeds it.
    """
    fixed = None
    if state is not None:
        fixed = np.asarray(getattr(state, "matrix", state), dtype=complex)
        if fixed.shape != (game.dim, game.dim):
            raise ValueError(f"state of shape {fixed.shape} does not fit a {game.n_parties}-qubit game")
    optimize_state = fixed is None and cfg.optimize_state
    if fixed is None and not cfg.optimize_state:
        raise ValueError("optimize_state is off but no state was given")
    embed = fixed is not None and cfg.random_unitary_on_state

    values, sweeps_all = [], []
    best = (-np.inf, None, None)
    worst_drop = 0.0
    stopped = False
    for start in range(0, cfg.seeds, cfg.batch_size):
        seeds = range(start, min(start + cfg.batch_size, cfg.seeds))
        inits = [_initial_point(game, seed_rng(cfg.master_seed, i), fixed, embed) for i in seeds]
        obs = [np.stack([o[k] for o, _ in inits]) for k in range(game.n_parties)]
        rho = np.stack([r for _, r in inits])
        vals, sw, drop = _run_batch(game, obs, rho, cfg, optimize_state, fixed is not None and cfg.optimize_frame)
        worst_drop = max(worst_drop, drop)
        values.append(vals)
        sweeps_all.append(sw)
        j = int(np.argmax(vals))
        if vals[j] > best[0]:
            best = (float(vals[j]), rho[j].copy(), [ob[j].copy() for ob in obs])
        if stop_above is not None and best[0] > stop_above:
            stopped = start + cfg.batch_size < cfg.seeds
            break
    return SeesawResult(
        game=game,
        config=cfg,
        best_value=best[0],
        best_state=best[1],
        best_observables=best[2],
        seed_values=np.concatenate(values),
        sweeps_used=np.concatenate(sweeps_all),
        max_decrease=worst_drop,
        stopped_early=stopped,
        state_dims=(2, game.dim // 2),
    )


def run_seesaw(
    ineq: Inequality,
    state: np.ndarray | DensityMatrix | None = None,
    cfg: SeesawConfig = SeesawConfig(),
    stop_above: float | None = None,
) -> SeesawResult:
    """Seesaw on a 4-cycle inequality. A fixed ``state`` must live on
    C^2 (x) C^4 (see :func:`bellext.quantum.embed_state`)."""
    return run_game(game_from_inequality(ineq), cfg, state, stop_above)


def check_soundness(result: SeesawResult, ineq: Inequality) -> float:
    """|value recomputed through the correlator route - best_value|."""
    c = extract_behavior(result.model())
    return abs(evaluate(ineq, c) - result.best_value)


def evaluate_game(state: np.ndarray, observables: Sequence[Sequence[np.ndarray]], game: CorrelatorGame) -> float:
    """Unbatched value of a game from explicit matrices (oracle for tests)."""
    total = 0.0
    mats = [[np.eye(2)] + [np.asarray(getattr(o, "matrix", o)) for o in party] for party in observables]
    for idx in np.ndindex(*game.tensor.shape):
        c = game.tensor[idx]
        if c:
            total += c * float(np.real(np.trace(state @ kron(*[mats[k][i] for k, i in enumerate(idx)]))))
    return total
