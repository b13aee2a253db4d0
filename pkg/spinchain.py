"""spinchain.py

Spin-1/2 chain Hamiltonians

    H = sum_l [ x_l x_{l+1} + g x_l + h z_l + D (z_l y_{l+1} - y_l z_{l+1}) ]

(xx coupling = 1, all other couplings are ratios to it), thermal initial
states, and the catalog of one- and two-site local observables.

Hamiltonians are assembled as sparse Pauli strings and densified once.
Observables are kept as Pauli strings and applied by index permutation, so a
12-entry catalog at L = 12 never materializes 12 dense 4096 x 4096 matrices.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterator, Mapping, Sequence, Union

import numpy as np
import scipy.sparse

from errors import InvalidParameter
from operator_core import (
    PAULI_AXES,
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    boltzmann_state,
    pauli_action,
    pauli_string,
    sparse_pauli_string,
)

MIN_L = 2
MAX_L = 14
BOUNDARIES = ("periodic", "open")

SUPPLEMENT_G = (math.sqrt(5.0) + 5.0) / 8.0
MAIN_TEXT_G = math.sqrt(10.0) / 8.0
G_READINGS = {"supplement": SUPPLEMENT_G, "main-text": MAIN_TEXT_G}

CHAOTIC_H = math.sqrt(5.0) / 2.0
CHAOTIC_D = math.pi / 20.0


@dataclass(frozen=True)
class ChainSpec:
    L: int
    g: float = SUPPLEMENT_G
    h: float = CHAOTIC_H
    D: float = CHAOTIC_D
    boundary: str = "periodic"

    def __post_init__(self) -> None:
        if isinstance(self.L, bool) or int(self.L) != self.L:
            raise InvalidParameter(f"L must be an integer, got {self.L!r}")
        if not MIN_L <= int(self.L) <= MAX_L:
            raise InvalidParameter(f"L must be in {MIN_L}..{MAX_L} for dense methods, got {self.L}")
        if self.boundary not in BOUNDARIES:
            raise InvalidParameter(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        for name in ("g", "h", "D"):
            if not math.isfinite(float(getattr(self, name))):
                raise InvalidParameter(f"{name} must be finite")
        object.__setattr__(self, "L", int(self.L))

    @property
    def dim(self) -> int:
        return 2 ** self.L

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def chaotic_spec(L: int, boundary: str = "periodic") -> ChainSpec:
    return ChainSpec(L, SUPPLEMENT_G, CHAOTIC_H, CHAOTIC_D, boundary)


def paramagnetic_h0(L: int, boundary: str = "periodic") -> ChainSpec:
    return ChainSpec(L, 0.0, 1.5, 0.0, boundary)


def _site(L: int, site: int, shift: int) -> int:
    return (site - 1 + shift) % L + 1


def hamiltonian_terms(spec: ChainSpec, shift: int = 0) -> list[tuple[float, dict[int, str]]]:
    """(coefficient, {site: axis}) terms; ``shift`` relabels every site by l -> l + shift."""
    L = spec.L
    bonds = L if spec.boundary == "periodic" else L - 1
    terms: list[tuple[float, dict[int, str]]] = []
    for l in range(1, bonds + 1):
        a, b = _site(L, l, shift), _site(L, l + 1, shift)
        terms.append((1.0, {a: "x", b: "x"}))
        if spec.D:
            terms.append((spec.D, {a: "z", b: "y"}))
            terms.append((-spec.D, {a: "y", b: "z"}))
    for l in range(1, L + 1):
        a = _site(L, l, shift)
        if spec.g:
            terms.append((spec.g, {a: "x"}))
        if spec.h:
            terms.append((spec.h, {a: "z"}))
    return terms


def build_hamiltonian(spec: ChainSpec, *, shift: int = 0) -> HermitianOperator:
    total = scipy.sparse.csr_matrix((spec.dim, spec.dim), dtype=np.complex128)
    for coef, factors in hamiltonian_terms(spec, shift):
        total = total + coef * sparse_pauli_string(spec.L, factors)
    return HermitianOperator(total.toarray())


def thermal_state(
    spec0: ChainSpec,
    beta: float,
    *,
    spectral: SpectralDecomposition | None = None,
) -> DensityMatrix:
    return boltzmann_state(build_hamiltonian(spec0), beta, spectral=spectral)


@dataclass(frozen=True)
class PauliObservable:
    label: str
    L: int
    factors: tuple[tuple[int, str], ...]

    @property
    def dim(self) -> int:
        return 2 ** self.L

    @property
    def operator(self) -> HermitianOperator:
        return pauli_string(self.L, dict(self.factors))

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """O @ vectors without forming O."""
        mask, phases = pauli_action(self.L, dict(self.factors))
        src = np.arange(self.dim, dtype=np.int64) ^ mask
        if vectors.ndim == 1:
            return phases[src] * vectors[src]
        return phases[src][:, None] * vectors[src]


@dataclass(frozen=True, eq=False)
class DenseObservable:
    label: str
    op: HermitianOperator

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def operator(self) -> HermitianOperator:
        return self.op

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return self.op.matrix @ vectors


Observable = Union[PauliObservable, DenseObservable]


@dataclass(frozen=True)
class ObservableCatalog:
    entries: tuple[Observable, ...]

    def __post_init__(self) -> None:
        labels = [o.label for o in self.entries]
        if len(set(labels)) != len(labels):
            raise InvalidParameter("duplicate observable labels")
        if len({o.dim for o in self.entries}) > 1:
            raise InvalidParameter("observables of different dimensions")

    def __iter__(self) -> Iterator[Observable]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, label: str) -> Observable:
        for o in self.entries:
            if o.label == label:
                return o
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.entries]

    def subset(self, labels: Sequence[str]) -> "ObservableCatalog":
        return ObservableCatalog(tuple(self[label] for label in labels))

    def extended(self, *extra: Observable) -> "ObservableCatalog":
        return ObservableCatalog(self.entries + tuple(extra))


def pauli_observable(L: int, factors: Mapping[int, str]) -> PauliObservable:
    items = tuple(sorted((int(s), a) for s, a in factors.items()))
    if not items:
        return PauliObservable("id", L, ())
    axes = "".join(a for _, a in items)
    sites = ",".join(str(s) for s, _ in items)
    return PauliObservable(f"{axes}@{sites}", L, items)


def identity_observable(L: int) -> PauliObservable:
    return PauliObservable("id", L, ())


def local_observables(L: int, site: int = 1) -> ObservableCatalog:
    """sigma^a at ``site`` (3) and sigma^a sigma^b on (site, site+1) (9)."""
    if L < MIN_L:
        raise InvalidParameter(f"L must be >= {MIN_L}")
    if not 1 <= site <= L:
        raise InvalidParameter(f"site {site} outside 1..{L}")
    nxt = site % L + 1
    entries: list[PauliObservable] = []
    for a in PAULI_AXES:
        entries.append(PauliObservable(f"{a}@{site}", L, ((site, a),)))
    for a in PAULI_AXES:
        for b in PAULI_AXES:
            # keep the label in chain order even when the neighbour wraps to site 1
            entries.append(PauliObservable(f"{a}{b}@{site},{nxt}", L, tuple(sorted(((site, a), (nxt, b))))))
    return ObservableCatalog(tuple(entries))


def main_observables(L: int, site: int = 1) -> ObservableCatalog:
    nxt = site % L + 1
    return local_observables(L, site).subset([f"z@{site}", f"zz@{site},{nxt}"])
