"""Critical-noise studies: exact CHSH thresholds from the Horodecki criterion,
I3322, and bisection sweeps of seesaw violations over the two state families."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .behavior import affine_dimension, enumerate_vertices
from .polytope import FacetReport, Inequality, get_inequality, load_table, local_bound, verify_facet
from .quantum import PAULIS, DensityMatrix, QuantumError, correlator, embed_state, family_matrix
from .scenario import CYCLE4_SCENARIO
from .seesaw import SeesawConfig, i3322_game, run_game, run_seesaw

Family = Literal["rho", "sigma"]
VIOLATION_MARGIN = 1e-7
I3322_LOCAL_BOUND = 4


# --------------------------------------------------------------------------
# CHSH via the Horodecki criterion


def correlation_matrix(rho4: np.ndarray) -> np.ndarray:
    """T[i, j] = Tr[rho sigma_i (x) sigma_j]."""
    return np.array([[correlator(rho4, si, sj) for sj in PAULIS] for si in PAULIS])


def horodecki_chsh(rho4: DensityMatrix | np.ndarray) -> float:
    """Sum of the two largest eigenvalues of T^T T; CHSH is violable iff > 1,
    and the best CHSH value with traceless qubit observables is 2 sqrt(M)."""
    if isinstance(rho4, DensityMatrix):
        if rho4.dims != (2, 2):
            raise QuantumError(f"Horodecki criterion needs a two-qubit state, got dims {rho4.dims}")
        m = rho4.matrix
    else:
        m = np.asarray(rho4)
        if m.shape != (4, 4):
            raise QuantumError(f"Horodecki criterion needs a 4x4 state, got {m.shape}")
    t = correlation_matrix(m)
    ev = np.linalg.eigvalsh(t.T @ t)
    return float(ev[-1] + ev[-2])


def chsh_max(rho4) -> float:
    return 2.0 * np.sqrt(horodecki_chsh(rho4))


def chsh_critical_w(family: Family, alpha: float, xtol: float = 1e-15) -> float:
    """Smallest ``w`` above which ``M(state(alpha, w)) > 1``; 1.0 if none.

    ``M`` is convex in ``w`` (a Ky Fan norm of an affine matrix function), so
    ``{M <= 1}`` is an interval containing ``w = 0`` and its right end is the
    threshold.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha = {alpha} outside [0, 1]")

    def excess(w: float) -> float:
        return horodecki_chsh(family_matrix(family, alpha, w)) - 1.0

    if excess(1.0) <= 0:
        return 1.0
    lo = minimize_scalar(excess, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}).x
    if excess(lo) > 0:
        lo = 0.0
    return float(brentq(excess, lo, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps))


# --------------------------------------------------------------------------
# I3322


def i3322_value(a: Sequence[float], b: Sequence[float], ab: np.ndarray) -> float:
    """I3322 expression from marginals ``a[x]``, ``b[y]`` and correlators ``ab[x, y]``."""
    return float(
        -a[0] - a[1] - b[0] - b[1]
        - ab[0, 0] - ab[1, 0] - ab[2, 0]
        - ab[0, 1] - ab[1, 1] + ab[2, 1]
        - ab[0, 2] + ab[1, 2]
    )


def i3322_local_bound() -> int:
    """Maximum over all deterministic +-1 assignments of both sides."""
    best = -np.inf
    for a in itertools.product((1, -1), repeat=3):
        for b in itertools.product((1, -1), repeat=3):
            best = max(best, i3322_value(a, b, np.outer(a, b)))
    return int(best)


def evaluate_i3322(state: np.ndarray, alice: Sequence[np.ndarray], bob: Sequence[np.ndarray]) -> float:
    """I3322 value of a two-qubit model with three observables per side."""
    state = np.asarray(getattr(state, "matrix", state))
    alice = [np.asarray(getattr(o, "matrix", o)) for o in alice]
    bob = [np.asarray(getattr(o, "matrix", o)) for o in bob]
    eye = np.eye(2)
    a = [correlator(state, o, eye) for o in alice]
    b = [correlator(state, eye, o) for o in bob]
    ab = np.array([[correlator(state, oa, ob) for ob in bob] for oa in alice])
    return i3322_value(a, b, ab)


# --------------------------------------------------------------------------
# bisection sweeps


@dataclass(frozen=True)
class BisectionTrace:
    tested: tuple[float, ...]
    violated: tuple[bool, ...]

    @property
    def w_critical(self) -> float:
        hits = [w for w, v in zip(self.tested, self.violated) if v]
        return min(hits) if hits else 1.0


def bisect_critical_w(violates: Callable[[float, int], bool], w_start: float = 0.75, steps: int = 8) -> BisectionTrace:
    """Test ``w``, then move to ``w -/+ 2^-(i+2)`` after step ``i`` (1-based)
    depending on whether a violation was found. ``violates(w, i)``."""
    w = w_start
    tested, hits = [], []
    for i in range(1, steps + 1):
        v = bool(violates(w, i))
        tested.append(w)
        hits.append(v)
        w = w - 2.0 ** -(i + 2) if v else w + 2.0 ** -(i + 2)
    return BisectionTrace(tuple(tested), tuple(hits))


@dataclass(frozen=True)
class SweepSpec:
    family: Family
    inequality: str  # "15" (any table id), "chsh" or "i3322"
    alpha_grid: int = 100
    alphas: tuple[float, ...] | None = None
    w_start: float = 0.75
    bisection_steps: int = 8
    seesaw: SeesawConfig = field(default_factory=SeesawConfig)

    def __post_init__(self) -> None:
        if self.family not in ("rho", "sigma"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.alpha_grid < 1 or self.bisection_steps < 1:
            raise ValueError("alpha_grid and bisection_steps must be >= 1")
        if not 0.0 < self.w_start < 1.0:
            raise ValueError("w_start must lie in (0, 1)")
        key = self.inequality.lower().lstrip("#")
        if key not in ("chsh", "i3322") and not key.isdigit():
            raise ValueError(f"unknown inequality {self.inequality!r}")

    @property
    def key(self) -> str:
        return self.inequality.lower().lstrip("#")

    def alpha_values(self) -> list[float]:
        if self.alphas is not None:
            return [float(a) for a in self.alphas]
        if self.alpha_grid == 1:
            return [0.5]
        return [float(a) for a in np.linspace(0.5, 1.0, self.alpha_grid)]


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    w_critical: float
    inequality: str
    method: str
    trace: BisectionTrace | None = None


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]

    def w_values(self) -> np.ndarray:
        return np.array([r.w_critical for r in self.rows])


def step_master_seed(master_seed: int, alpha: float, step: int) -> int:
    """Seed for one bisection step, keyed on the alpha value and step number so
    that a given point replays identically whatever grid it belongs to."""
    key = int(np.float64(alpha).view(np.uint64))
    ss = np.random.SeedSequence(master_seed, spawn_key=(key, step))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _seesaw_violates(spec: SweepSpec, alpha: float) -> Callable[[float, int], bool]:
    key = spec.key
    if key == "i3322":
        game = i3322_game()
        bound = I3322_LOCAL_BOUND
        cfg_base = replace(spec.seesaw, optimize_state=False, random_unitary_on_state=False)

        def violates(w: float, step: int) -> bool:
            cfg = replace(cfg_base, master_seed=step_master_seed(spec.seesaw.master_seed, alpha, step))
            state = family_matrix(spec.family, alpha, w)
            res = run_game(game, cfg, state, stop_above=bound + VIOLATION_MARGIN)
            return res.best_value > bound + VIOLATION_MARGIN

        return violates

    ineq = get_inequality(int(key))
    cfg_base = replace(spec.seesaw, optimize_state=False)

    def violates(w: float, step: int) -> bool:
        cfg = replace(cfg_base, master_seed=step_master_seed(spec.seesaw.master_seed, alpha, step))
        state = embed_state(DensityMatrix(family_matrix(spec.family, alpha, w), (2, 2)))
        res = run_seesaw(ineq, state, cfg, stop_above=ineq.local_bound + VIOLATION_MARGIN)
        return res.best_value > ineq.local_bound + VIOLATION_MARGIN

    return violates


def critical_w_point(spec: SweepSpec, alpha: float) -> SweepRow:
    if spec.key == "chsh":
        return SweepRow(alpha, chsh_critical_w(spec.family, alpha), "chsh", "horodecki-exact")
    trace = bisect_critical_w(_seesaw_violates(spec, alpha), spec.w_start, spec.bisection_steps)
    return SweepRow(alpha, trace.w_critical, spec.key, "seesaw-upper-bound", trace)


def _point_task(args):
    spec, alpha = args
    return critical_w_point(spec, alpha)


def critical_w_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    alphas = spec.alpha_values()
    if workers > 1 and len(alphas) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_point_task, [(spec, a) for a in alphas]))
    else:
        rows = [critical_w_point(spec, a) for a in alphas]
    rows.sort(key=lambda r: r.alpha)
    return SweepResult(spec, rows)


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def write_sweep_csv(path: str | Path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "w_critical", "inequality", "method"])
        for r in result.rows:
            w.writerow([fmt_real(r.alpha), fmt_real(r.w_critical), r.inequality, r.method])


def read_sweep_csv(path: str | Path) -> list[tuple[float, float, str, str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(float(r["alpha"]), float(r["w_critical"]), r["inequality"], r["method"]) for r in rows]


# --------------------------------------------------------------------------
# table verification


def quantum_tolerance(ineq: Inequality) -> float:
    """5e-4 plus half a unit in the last printed decimal of beta_Q."""
    decimals = ineq.quantum_bound_decimals if ineq.quantum_bound_decimals is not None else 3
    return 5e-4 + 0.5 * 10.0**-decimals


@dataclass(frozen=True)
class TableRowReport:
    id: int
    beta_l_table: int
    beta_l_computed: int
    facet: FacetReport | None = None
    beta_q_table: float | None = None
    seesaw_value: float | None = None
    tolerance: float | None = None

    @property
    def local_ok(self) -> bool:
        return self.beta_l_table == self.beta_l_computed

    @property
    def facet_ok(self) -> bool | None:
        return None if self.facet is None else self.facet.is_facet

    @property
    def quantum_delta(self) -> float | None:
        if self.seesaw_value is None or self.beta_q_table is None:
            return None
        return self.seesaw_value - self.beta_q_table

    @property
    def quantum_ok(self) -> bool | None:
        d = self.quantum_delta
        return None if d is None else abs(d) <= self.tolerance

    @property
    def ok(self) -> bool:
        return self.local_ok and self.facet_ok is not False and self.quantum_ok is not False


@dataclass
class TableReport:
    rows: list[TableRowReport]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def failures(self) -> list[TableRowReport]:
        return [r for r in self.rows if not r.ok]


def _quantum_task(args) -> float:
    ineq, cfg = args
    return run_seesaw(ineq, cfg=cfg).best_value


def verify_table1(
    cfg: SeesawConfig | None = None,
    table: list[Inequality] | None = None,
    quantum: bool = True,
    facets: bool = True,
    workers: int = 1,
) -> TableReport:
    """Recompute every local bound exactly, optionally the facet rank, and with
    ``quantum`` a seesaw lower bound compared against the tabulated value.

    Rows missing a tabulated quantum value are checked classically only.
    """
    table = table if table is not None else load_table()
    vs = enumerate_vertices(CYCLE4_SCENARIO)
    cfg = cfg or SeesawConfig()
    full = affine_dimension(vs.product) if facets else None
    values: list[float | None] = [None] * len(table)
    if quantum:
        todo = [i for i, q in enumerate(table) if q.quantum_bound_ref is not None]
        tasks = [(table[i], cfg) for i in todo]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                found = list(pool.map(_quantum_task, tasks))
        else:
            found = [_quantum_task(t) for t in tasks]
        for i, v in zip(todo, found):
            values[i] = v
    rows = []
    for ineq, v in zip(table, values):
        rows.append(
            TableRowReport(
                id=ineq.id,
                beta_l_table=ineq.local_bound,
                beta_l_computed=local_bound(ineq, vs),
                facet=verify_facet(ineq, vs, full) if facets else None,
                beta_q_table=ineq.quantum_bound_ref if v is not None else None,
                seesaw_value=v,
                tolerance=quantum_tolerance(ineq) if v is not None else None,
            )
        )
    return TableReport(rows)
