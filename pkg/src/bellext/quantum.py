"""States, dichotomic observables and Born-rule behaviors on C^2 (x) C^d."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .behavior import ProbabilityTable
from .scenario import CYCLE4_SCENARIO, Scenario

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SX, SY, SZ)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
SNAP_TOL = 1e-8
COMMUTATION_TOL = 1e-10

Family = Literal["rho", "sigma"]


class QuantumError(ValueError):
    pass


class IncompatibleMeasurementsError(QuantumError):
    pass


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def dagger(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2).conj()


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    dims: tuple[int, int]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        d = self.dims[0] * self.dims[1]
        if m.shape != (d, d):
            raise QuantumError(f"matrix of shape {m.shape} does not match dims {self.dims}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise QuantumError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise QuantumError(f"density matrix has trace {np.trace(m).real:.15g}")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise QuantumError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class DichotomicObservable:
    """+-1 valued projective measurement ``O = Q_plus - Q_minus``."""

    plus: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.plus, dtype=complex)
        if np.max(np.abs(q @ q - q), initial=0.0) > 1e-10 or np.max(np.abs(q - q.conj().T), initial=0.0) > 1e-10:
            raise QuantumError("Q_plus is not an orthogonal projector")
        object.__setattr__(self, "plus", q)

    @property
    def dim(self) -> int:
        return self.plus.shape[0]

    @property
    def minus(self) -> np.ndarray:
        return np.eye(self.dim) - self.plus

    @property
    def matrix(self) -> np.ndarray:
        return 2 * self.plus - np.eye(self.dim)

    def projector(self, outcome: int) -> np.ndarray:
        return self.plus if outcome == 1 else self.minus

    @classmethod
    def from_hermitian(cls, m: np.ndarray, snap_tol: float = SNAP_TOL) -> "DichotomicObservable":
        """Build from a Hermitian matrix whose spectrum is within ``snap_tol``
        of {+1, -1}; eigenvalues are snapped to exactly +-1."""
        m = np.asarray(m, dtype=complex)
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise QuantumError("observable is not Hermitian")
        w, v = np.linalg.eigh((m + m.conj().T) / 2)
        if np.any(np.minimum(np.abs(w - 1), np.abs(w + 1)) > snap_tol):
            raise QuantumError(f"spectrum {w} is not +-1")
        keep = v[:, w > 0]
        return cls(keep @ keep.conj().T)

    @classmethod
    def constant(cls, dim: int, value: int = 1) -> "DichotomicObservable":
        return cls(np.eye(dim) if value == 1 else np.zeros((dim, dim)))

    def tensor_left(self, dim: int) -> "DichotomicObservable":
        """``1_dim (x) O``."""
        return DichotomicObservable(np.kron(np.eye(dim), self.plus))

    def tensor_right(self, dim: int) -> "DichotomicObservable":
        """``O (x) 1_dim``."""
        return DichotomicObservable(np.kron(self.plus, np.eye(dim)))


def commutator_norm(o1, o2) -> float:
    """Max-entry absolute value of ``[O1, O2]``."""
    a = o1.matrix if isinstance(o1, DichotomicObservable) else np.asarray(o1)
    b = o2.matrix if isinstance(o2, DichotomicObservable) else np.asarray(o2)
    if a.shape != b.shape:
        raise QuantumError("operators have different dimensions")
    return float(np.max(np.abs(a @ b - b @ a)))


def partial_trace(m: np.ndarray, dims: tuple[int, int], side: Literal["A", "B"]) -> np.ndarray:
    """Trace out factor ``side`` of an operator on C^dA (x) C^dB."""
    da, db = dims
    m = np.asarray(m)
    if m.shape != (da * db, da * db):
        raise QuantumError(f"operator of shape {m.shape} does not match dims {dims}")
    t = m.reshape(da, db, da, db)
    if side == "A":
        return np.einsum("ijik->jk", t)
    if side == "B":
        return np.einsum("ijkj->ik", t)
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


# --------------------------------------------------------------------------
# state families


def psi(alpha: float) -> np.ndarray:
    """sqrt(alpha)|01> + sqrt(1 - alpha)|10>."""
    v = np.zeros(4, dtype=complex)
    v[1] = np.sqrt(alpha)
    v[2] = np.sqrt(1 - alpha)
    return v


@dataclass(frozen=True)
class StateFamilyPoint:
    family: Family
    alpha: float
    w: float

    def __post_init__(self) -> None:
        if self.family not in ("rho", "sigma"):
            raise ValueError(f"unknown state family {self.family!r}")
        for name in ("alpha", "w"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def family_matrix(family: Family, alpha: float, w: float) -> np.ndarray:
    """Raw 4x4 matrix of ``rho(alpha, w)`` or ``sigma(alpha, w)``."""
    v = psi(alpha)
    pure = np.outer(v, v.conj())
    if family == "rho":
        noise = np.zeros((4, 4), dtype=complex)
        noise[0, 0] = 1
    elif family == "sigma":
        noise = np.eye(4, dtype=complex) / 4
    else:
        raise ValueError(f"unknown state family {family!r}")
    return w * pure + (1 - w) * noise


def build_state(fp: StateFamilyPoint) -> DensityMatrix:
    return DensityMatrix(family_matrix(fp.family, fp.alpha, fp.w), (2, 2))


# isometry C^2 -> C^4 onto the first two computational basis vectors
EMBEDDING = np.eye(4, 2, dtype=complex)


def embed_state(rho4: DensityMatrix) -> DensityMatrix:
    """Trivially embed Bob's qubit into C^4: dims (2, 2) -> (2, 4)."""
    if rho4.dims != (2, 2):
        raise QuantumError(f"expected a two-qubit state, got dims {rho4.dims}")
    v = np.kron(I2, EMBEDDING)
    return DensityMatrix(v @ rho4.matrix @ v.conj().T, (2, 4))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a complex
    Gaussian matrix, with the phases of R's diagonal moved into Q."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# --------------------------------------------------------------------------
# models and behaviors


@dataclass(frozen=True)
class ExtendedModel:
    """State on C^dA (x) C^dB, Alice's two observables and Bob's n observables,
    with Bob's observables commuting along the scenario's contexts."""

    state: DensityMatrix
    alice: tuple[DichotomicObservable, ...]
    bob: tuple[DichotomicObservable, ...]
    scenario: Scenario = CYCLE4_SCENARIO

    def __post_init__(self) -> None:
        da, db = self.state.dims
        if len(self.alice) != 2 or len(self.bob) != self.scenario.n_bob:
            raise QuantumError("wrong number of observables for the scenario")
        if any(o.dim != da for o in self.alice) or any(o.dim != db for o in self.bob):
            raise QuantumError("observable dimensions do not match the state")

    def max_commutator(self) -> float:
        return max(commutator_norm(self.bob[y1], self.bob[y2]) for y1, y2 in self.scenario.contexts)

    def to_json(self) -> str:
        def enc(m):
            m = np.asarray(m)
            return {"real": m.real.tolist(), "imag": m.imag.tolist()}

        return json.dumps(
            {
                "n_bob": self.scenario.n_bob,
                "dims": list(self.state.dims),
                "state": enc(self.state.matrix),
                "alice_plus": [enc(o.plus) for o in self.alice],
                "bob_plus": [enc(o.plus) for o in self.bob],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExtendedModel":
        d = json.loads(text)

        def dec(e):
            return np.array(e["real"]) + 1j * np.array(e["imag"])

        return cls(
            DensityMatrix(dec(d["state"]), tuple(d["dims"])),
            tuple(DichotomicObservable(dec(e)) for e in d["alice_plus"]),
            tuple(DichotomicObservable(dec(e)) for e in d["bob_plus"]),
            Scenario(d["n_bob"]),
        )


def extract_behavior(m: ExtendedModel, s: Scenario | None = None, tol: float = COMMUTATION_TOL) -> np.ndarray:
    """Correlator vector ``<A_x B_y1 B_y2> = Tr[rho A_x (x) B_y1 B_y2]`` etc."""
    s = s or m.scenario
    worst = m.max_commutator()
    if worst > tol:
        raise IncompatibleMeasurementsError(f"context observables fail to commute (norm {worst:.3g})")
    rho = m.state.matrix
    da, db = m.state.dims
    ia, ib = np.eye(da), np.eye(db)
    A = [o.matrix for o in m.alice]
    B = [o.matrix for o in m.bob]

    def ev(op_a, op_b):
        return float(np.real(np.trace(rho @ np.kron(op_a, op_b))))

    c = np.zeros(s.dimension)
    for x in range(2):
        c[s.pos_a(x)] = ev(A[x], ib)
    for y in range(s.n_bob):
        c[s.pos_b(y)] = ev(ia, B[y])
        for x in range(2):
            c[s.pos_ab(x, y)] = ev(A[x], B[y])
    for k, (y1, y2) in enumerate(s.contexts):
        bb = B[y1] @ B[y2]
        bb = (bb + bb.conj().T) / 2
        c[s.pos_bb(k)] = ev(ia, bb)
        for x in range(2):
            c[s.pos_abb(x, k)] = ev(A[x], bb)
    return c


def born_table(
    state: np.ndarray,
    dims: tuple[int, int],
    alice_effects: Sequence[Sequence[np.ndarray]],
    bob_effects: Sequence[Sequence[np.ndarray]],
    s: Scenario = CYCLE4_SCENARIO,
) -> ProbabilityTable:
    """p(a, b1, b2 | x, (y1, y2)) = Tr[rho P_a|x (x) Q_b1|y1 Q_b2|y2].

    Effects are indexed ``[setting][outcome index]`` (index 0 is +1). Effects
    may be any commuting POVM elements, e.g. the trivial ``{1/2, 1/2}``.
    """
    n = s.n_bob
    p = np.empty((2, n, 2, 2, 2))
    for x in range(2):
        for k, (y1, y2) in enumerate(s.contexts):
            for ia in range(2):
                for i1 in range(2):
                    for i2 in range(2):
                        op = np.kron(alice_effects[x][ia], bob_effects[y1][i1] @ bob_effects[y2][i2])
                        p[x, k, ia, i1, i2] = np.real(np.trace(state @ op))
    return ProbabilityTable(s, p)


def bipartite_probabilities(
    state: np.ndarray, alice_effects: Sequence[Sequence[np.ndarray]], bob_effects: Sequence[Sequence[np.ndarray]]
) -> np.ndarray:
    """Standard Bell behavior p[x, y, a, b] = Tr[rho P_a|x (x) Q_b|y]."""
    mx, my = len(alice_effects), len(bob_effects)
    p = np.empty((mx, my, 2, 2))
    for x in range(mx):
        for y in range(my):
            for ia in range(2):
                for ib in range(2):
                    p[x, y, ia, ib] = np.real(np.trace(state @ np.kron(alice_effects[x][ia], bob_effects[y][ib])))
    return p


def correlator(state: np.ndarray, *ops: np.ndarray) -> float:
    return float(np.real(np.trace(state @ kron(*ops))))
