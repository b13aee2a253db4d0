"""operator_core.py

Dense complex Hermitian operator algebra.

Everything downstream (state Hamiltonians, leaves, spin chains, dynamics) is
built on four immutable value types defined here:

- HermitianOperator   validated d x d complex matrix
- SpectralDecomposition   ascending eigenvalues + phase-fixed eigenvectors
- DensityMatrix       unit-trace PSD operator, optionally with an analytic
                      spectral form (Boltzmann states)
- PureState           unit-norm amplitude vector

All arrays held by these types are marked read-only, so values can be shared
freely across worker threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.special import entr, logsumexp
from scipy.stats import unitary_group

import config
from errors import DomainError, InvalidOperator, InvalidParameter, NumericalError

logger = logging.getLogger(__name__)

PAULI_AXES = ("x", "y", "z")

_GM = 1.0 / np.sqrt(3.0)
GELL_MANN = {
    1: [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
    2: [[0, -1j, 0], [1j, 0, 0], [0, 0, 0]],
    3: [[1, 0, 0], [0, -1, 0], [0, 0, 0]],
    4: [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    5: [[0, 0, -1j], [0, 0, 0], [1j, 0, 0]],
    6: [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
    7: [[0, 0, 0], [0, 0, -1j], [0, 1j, 0]],
    8: [[_GM, 0, 0], [0, _GM, 0], [0, 0, -2 * _GM]],
}


def _guard_dim(d: int) -> None:
    if d > config.MAX_DENSE_DIM and not config.ALLOW_LARGE:
        raise InvalidParameter(
            f"dense dimension {d} exceeds {config.MAX_DENSE_DIM}; set LEAFKIT_ALLOW_LARGE=1 to override"
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix. Stored exactly symmetrized after validation."""

    matrix: np.ndarray
    tol_herm: float = config.TOL_HERM

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidOperator(f"expected a non-empty square matrix, got shape {m.shape}")
        _guard_dim(m.shape[0])
        if not np.all(np.isfinite(m)):
            raise InvalidOperator("matrix has non-finite entries")
        mh = m.conj().T
        scale = float(np.max(np.abs(m)))
        defect = float(np.max(np.abs(m - mh)))
        if defect > self.tol_herm * scale:
            raise InvalidOperator(f"not Hermitian: max |A - A^H| = {defect:.3e} (scale {scale:.3e})")
        m += mh
        m *= 0.5
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def commutator_norm(self, other: "HermitianOperator | DensityMatrix") -> float:
        b = other.matrix
        ab = self.matrix @ b
        return float(np.linalg.norm(ab - ab.conj().T))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix + other.matrix)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix - other.matrix)

    def __mul__(self, scalar: float) -> "HermitianOperator":
        return HermitianOperator(float(scalar) * self.matrix)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.eigenvalues, dtype=np.float64)
        v = np.array(self.eigenvectors, dtype=np.complex128)
        if w.ndim != 1 or v.shape != (w.size, w.size):
            raise InvalidParameter(f"inconsistent spectral shapes {w.shape} / {v.shape}")
        if w.size > 1 and np.any(np.diff(w) < 0):
            raise InvalidParameter("eigenvalues must be ascending")
        object.__setattr__(self, "eigenvalues", _readonly(w))
        object.__setattr__(self, "eigenvectors", _readonly(v))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def to_basis(self, matrix: np.ndarray) -> np.ndarray:
        """V^H M V."""
        v = self.eigenvectors
        return v.conj().T @ matrix @ v


def phase_factors(vectors: np.ndarray) -> np.ndarray:
    """Unit factors that make the largest-magnitude entry of each column real positive.

    Ties go to the lowest row index (``argmax`` returns the first maximum).
    """
    pivot_rows = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[pivot_rows, np.arange(vectors.shape[1])]
    mags = np.abs(pivots)
    phase = np.ones(pivots.shape, dtype=np.complex128)
    nz = mags > 0
    phase[nz] = np.conj(pivots[nz]) / mags[nz]
    return phase


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    vectors = np.array(vectors, dtype=np.complex128)
    if vectors.ndim == 1:
        return fix_phases(vectors[:, None])[:, 0]
    return vectors * phase_factors(vectors)


def spectral_decompose(A: Union[HermitianOperator, np.ndarray]) -> SpectralDecomposition:
    if not isinstance(A, HermitianOperator):
        A = HermitianOperator(A)
    w, v = scipy.linalg.eigh(A.matrix, check_finite=False)
    return SpectralDecomposition(w, fix_phases(v))


def _spectral_map(S: SpectralDecomposition, values: np.ndarray) -> HermitianOperator:
    v = S.eigenvectors
    return HermitianOperator((v * values) @ v.conj().T)


def matrix_function(
    S: SpectralDecomposition,
    f: str,
    *,
    beta: float | None = None,
    window: tuple[float, float] | None = None,
) -> HermitianOperator:
    """Return V f(Lambda) V^H for f in {sqrt, exp_neg_beta, log, projector}."""
    lam = S.eigenvalues
    if f in ("sqrt", "log"):
        if S.dim and lam[0] <= 0:
            raise DomainError(f"{f} needs a positive spectrum (min eigenvalue {lam[0]:.3e})")
        values = np.sqrt(lam) if f == "sqrt" else np.log(lam)
    elif f == "exp_neg_beta":
        if beta is None or not np.isfinite(beta):
            raise InvalidParameter("exp_neg_beta needs a finite beta")
        values = np.exp(-beta * lam)
    elif f == "projector":
        if window is None:
            raise InvalidParameter("projector needs an energy window")
        lo, hi = window
        values = ((lam >= lo) & (lam <= hi)).astype(np.float64)
    else:
        raise InvalidParameter(f"unknown scalar map: {f}")
    return _spectral_map(S, values)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if a.size < 1:
            raise InvalidParameter("empty state")
        norm = float(np.linalg.norm(a))
        if abs(norm - 1.0) > config.TOL_NORM:
            raise InvalidParameter(f"state not normalized: |psi| = {norm:.15f}")
        object.__setattr__(self, "amplitudes", _readonly(a))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex] | np.ndarray) -> "PureState":
        a = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        return cls(a / np.linalg.norm(a))

    @classmethod
    def basis(cls, d: int, index: int) -> "PureState":
        a = np.zeros(d, dtype=np.complex128)
        a[index] = 1.0
        return cls(a)

    def projector(self) -> np.ndarray:
        a = self.amplitudes
        return np.outer(a, a.conj())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    op: HermitianOperator
    spectral_form: Optional[SpectralDecomposition] = None
    rank_floor: float = config.RANK_FLOOR

    def __post_init__(self) -> None:
        tr = self.op.trace
        if abs(tr - 1.0) > config.TOL_TRACE:
            raise InvalidOperator(f"density matrix trace is {tr!r}, expected 1")
        if self.spectral_form is not None:
            if self.spectral_form.dim != self.op.dim:
                raise InvalidParameter("spectral form dimension mismatch")
            self._check_positive(self.spectral_form.eigenvalues)

    @staticmethod
    def _check_positive(eigenvalues: np.ndarray) -> None:
        if eigenvalues.size and eigenvalues[0] < -config.TOL_POSITIVE:
            raise InvalidOperator(f"density matrix not positive: min eigenvalue {eigenvalues[0]:.3e}")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, *, check: bool = True, rank_floor: float = config.RANK_FLOOR) -> "DensityMatrix":
        rho = cls(HermitianOperator(matrix), rank_floor=rank_floor)
        if check:
            rho.spectral  # positivity is verified on first decomposition
        return rho

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityMatrix":
        eye = np.eye(d, dtype=np.complex128)
        return cls(HermitianOperator(eye / d), SpectralDecomposition(np.full(d, 1.0 / d), eye))

    @classmethod
    def from_pure(cls, psi: PureState) -> "DensityMatrix":
        return cls(HermitianOperator(psi.projector()))

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def analytic(self) -> bool:
        return self.spectral_form is not None

    @cached_property
    def spectral(self) -> SpectralDecomposition:
        if self.spectral_form is not None:
            return self.spectral_form
        s = spectral_decompose(self.op)
        self._check_positive(s.eigenvalues)
        return s

    @cached_property
    def populations(self) -> np.ndarray:
        """Eigenvalues clipped at zero (ascending)."""
        return _readonly(np.clip(self.spectral.eigenvalues, 0.0, None))

    @property
    def full_rank(self) -> bool:
        lam = self.populations
        if lam[-1] <= 0:
            return False
        if self.analytic:
            # analytic weights are exact; only true underflow counts as rank loss
            return bool(lam[0] > 0)
        return bool(lam[0] / lam[-1] > self.rank_floor)

    def sqrt(self) -> HermitianOperator:
        return _spectral_map(self.spectral, np.sqrt(self.populations))

    def purity(self) -> float:
        m = self.matrix
        return float(np.vdot(m, m).real)

    def entropy(self) -> float:
        """von Neumann entropy in nats."""
        return float(np.sum(entr(self.populations)))


State = Union[DensityMatrix, PureState]


def boltzmann_state(
    H0: HermitianOperator,
    beta: float,
    *,
    spectral: SpectralDecomposition | None = None,
) -> DensityMatrix:
    """e^{-beta H0}/Z carrying its spectral form analytically."""
    if beta is None or not np.isfinite(beta):
        raise InvalidParameter(f"beta must be finite, got {beta!r}")
    s = spectral if spectral is not None else spectral_decompose(H0)
    if s.dim != H0.dim:
        raise InvalidParameter("spectral decomposition does not match H0")
    log_w = -float(beta) * s.eigenvalues
    weights = np.exp(log_w - logsumexp(log_w))
    order = np.argsort(weights, kind="stable")
    form = SpectralDecomposition(weights[order], s.eigenvectors[:, order])
    v = s.eigenvectors
    op = HermitianOperator((v * weights) @ v.conj().T)
    return DensityMatrix(op, spectral_form=form)


def _check_site_map(L: int, factors: Mapping[int, str]) -> None:
    if L < 1:
        raise InvalidParameter(f"chain length must be >= 1, got {L}")
    _guard_dim(2 ** L)
    for site, axis in factors.items():
        if not 1 <= int(site) <= L:
            raise InvalidParameter(f"site {site} outside 1..{L}")
        if axis not in PAULI_AXES:
            raise InvalidParameter(f"unknown Pauli axis {axis!r}")


def pauli_action(L: int, factors: Mapping[int, str]) -> tuple[np.ndarray, np.ndarray]:
    """Return (flip mask, phases) with P|x> = phases[x] |x XOR mask>.

    Site 1 is the most significant bit, so site 1 is the leftmost tensor factor.
    """
    _check_site_map(L, factors)
    x = np.arange(2 ** L, dtype=np.int64)
    phases = np.ones(x.size, dtype=np.complex128)
    mask = 0
    for site, axis in sorted(factors.items()):
        shift = L - int(site)
        bit = (x >> shift) & 1
        sign = 1 - 2 * bit
        if axis == "z":
            phases *= sign
        elif axis == "y":
            phases *= 1j * sign
            mask |= 1 << shift
        else:
            mask |= 1 << shift
    return np.int64(mask), phases


def sparse_pauli_string(L: int, factors: Mapping[int, str]) -> scipy.sparse.csr_matrix:
    mask, phases = pauli_action(L, factors)
    x = np.arange(phases.size, dtype=np.int64)
    return scipy.sparse.csr_matrix((phases, (x ^ mask, x)), shape=(x.size, x.size))


def pauli_string(L: int, factors: Mapping[int, str]) -> HermitianOperator:
    return HermitianOperator(sparse_pauli_string(L, factors).toarray())


def gell_mann(j: int) -> HermitianOperator:
    if j not in GELL_MANN:
        raise InvalidParameter(f"Gell-Mann index must be 1..8, got {j}")
    return HermitianOperator(np.array(GELL_MANN[j], dtype=np.complex128))


def _imag_checked(value: complex, what: str) -> float:
    if abs(value.imag) > config.TOL_IMAG * max(1.0, abs(value.real)):
        raise NumericalError(f"{what} has imaginary residue {value.imag:.3e}")
    return float(value.real)


def expectation(O: HermitianOperator, state: State) -> float:
    if O.dim != state.dim:
        raise InvalidParameter(f"dimension mismatch: operator {O.dim}, state {state.dim}")
    if isinstance(state, PureState):
        a = state.amplitudes
        return _imag_checked(np.vdot(a, O.matrix @ a), "<psi|O|psi>")
    # tr[rho O] without forming the product
    return _imag_checked(np.sum(state.matrix * O.matrix.T), "tr[rho O]")


def state_variances(H: HermitianOperator, vectors: np.ndarray) -> np.ndarray:
    """Var(H) for every (normalized) column of ``vectors``."""
    hv = H.matrix @ vectors
    second = np.sum(np.abs(hv) ** 2, axis=0)
    mean = np.sum(vectors.conj() * hv, axis=0).real
    var = second - mean ** 2
    floor = -config.TOL_POSITIVE * np.maximum(1.0, second)
    if np.any(var < floor):
        raise NumericalError(f"negative variance {var.min():.3e}")
    return np.clip(var, 0.0, None)


def variance(H: HermitianOperator, psi: PureState) -> float:
    if H.dim != psi.dim:
        raise InvalidParameter(f"dimension mismatch: operator {H.dim}, state {psi.dim}")
    return float(state_variances(H, psi.amplitudes[:, None])[0])


# Qubit helpers

SIGMA = {axis: pauli_string(1, {1: axis}) for axis in PAULI_AXES}


def bloch_density(r: Sequence[float]) -> DensityMatrix:
    """(I + r.sigma)/2 for |r| <= 1."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3,) or np.linalg.norm(r) > 1 + 1e-12:
        raise InvalidParameter(f"Bloch vector must be a 3-vector of norm <= 1, got {r}")
    m = np.eye(2, dtype=np.complex128)
    for component, axis in zip(r, PAULI_AXES):
        m = m + component * SIGMA[axis].matrix
    return DensityMatrix(HermitianOperator(0.5 * m))


def bloch_state(n: Sequence[float]) -> PureState:
    """Pure qubit state with unit Bloch vector n."""
    rho = bloch_density(n)
    s = rho.spectral
    return PureState(s.eigenvectors[:, -1])


def bloch_vector(state: State) -> np.ndarray:
    return np.array([expectation(SIGMA[axis], state) for axis in PAULI_AXES])


# Seeded generators used by oracles and tests

def random_hermitian(d: int, rng: np.random.Generator) -> HermitianOperator:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return HermitianOperator(0.5 * (a + a.conj().T))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    k = d if rank is None else rank
    w = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    m = w @ w.conj().T
    return DensityMatrix.from_matrix(m / np.trace(m).real)


def random_pure(d: int, rng: np.random.Generator) -> PureState:
    return PureState.normalized(rng.standard_normal(d) + 1j * rng.standard_normal(d))


def haar_unitaries(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of ``count`` Haar-random d x d unitaries, shape (count, d, d)."""
    u = unitary_group.rvs(d, size=count, random_state=rng)
    return np.asarray(u).reshape(count, d, d)
