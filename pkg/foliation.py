"""foliation.py

Minimum-variance foliation of state space.

For a full-rank state rho and Hamiltonian H the state Hamiltonian H_rho solves
    1/2 {H_rho, rho} = sqrt(rho) H sqrt(rho).
Its eigenvectors |Psi_i> and eigenvalues E_i give the optimal (minimum average
energy variance) pure-state ensemble
    p_i = <Psi_i|rho|Psi_i>,   |phi_i> = sqrt(rho)|Psi_i> / sqrt(p_i),
with <phi_i|H|phi_i> = E_i. Varying the populations while keeping {|phi_i>}
moves the state along its leaf.

All constructions work in the eigenbasis of rho, where the defining equation
is entrywise:
    (H_rho)_kl = 2 sqrt(l_k l_l) / (l_k + l_l) * (V^H H V)_kl.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import entr, logsumexp
from scipy.stats import entropy

import config
import qmat
from errors import (
    ArtifactIOError,
    DegenerateStateHamiltonian,
    EmptyShell,
    InvalidParameter,
    RankDeficient,
)
from operator_core import (
    DensityMatrix,
    HermitianOperator,
    PureState,
    SpectralDecomposition,
    haar_unitaries,
    phase_factors,
    spectral_decompose,
    state_variances,
)

logger = logging.getLogger(__name__)

LEAF_MANIFEST = "leaf.json"
LEAF_H_RHO = "h_rho.qmat"
LEAF_STATES = "states.qmat"


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Leaf:
    """Optimal ensemble of a state, ordered by ascending leaf energy.

    ``states`` holds |phi_i> as columns, ``psi`` the eigenvectors |Psi_i> of
    H_rho. ``unique`` is False when the ensemble was built from a degenerate
    H_rho (arbitrary basis inside the degenerate block). ``unreliable`` marks
    populations below the underflow floor.
    """

    h_rho: HermitianOperator
    energies: np.ndarray
    populations: np.ndarray
    states: np.ndarray
    psi: np.ndarray
    source_energy: float
    unique: bool = True
    unreliable: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        d = self.h_rho.dim
        e = np.array(self.energies, dtype=np.float64)
        p = np.array(self.populations, dtype=np.float64)
        if e.shape != (d,) or p.shape != (d,):
            raise InvalidParameter("leaf energies/populations must have length d")
        if self.states.shape != (d, d) or self.psi.shape != (d, d):
            raise InvalidParameter("leaf state matrices must be d x d")
        if abs(p.sum() - 1.0) > 1e-10:
            raise InvalidParameter(f"leaf populations sum to {p.sum()!r}")
        mask = np.zeros(d, dtype=bool) if self.unreliable is None else np.array(self.unreliable, dtype=bool)
        object.__setattr__(self, "energies", _readonly(e))
        object.__setattr__(self, "populations", _readonly(p))
        object.__setattr__(self, "states", _readonly(np.array(self.states, dtype=np.complex128)))
        object.__setattr__(self, "psi", _readonly(np.array(self.psi, dtype=np.complex128)))
        object.__setattr__(self, "unreliable", _readonly(mask))

    @property
    def dim(self) -> int:
        return self.h_rho.dim

    @property
    def mask_count(self) -> int:
        return int(self.unreliable.sum())

    def state(self, i: int) -> PureState:
        return PureState(self.states[:, i])

    @property
    def pure_states(self) -> list[PureState]:
        return [self.state(i) for i in range(self.dim)]

    def flags(self) -> dict:
        return {
            "unique": bool(self.unique),
            "unreliable": [int(i) for i in np.flatnonzero(self.unreliable)],
        }


@dataclass(frozen=True)
class QubitLeafGeometry:
    n_hat: tuple[float, float, float]
    endpoint_plus: tuple[float, float, float]
    endpoint_minus: tuple[float, float, float]
    transverse_norm: float
    barycenter_entropy: float


def _check_dims(rho: DensityMatrix, H: HermitianOperator) -> None:
    if rho.dim != H.dim:
        raise InvalidParameter(f"dimension mismatch: state {rho.dim}, Hamiltonian {H.dim}")


def _relative_gap(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    width = float(values[-1] - values[0])
    if width <= 0:
        return 0.0
    return float(np.min(np.diff(values)) / width)


def _in_rho_basis(rho: DensityMatrix, H: HermitianOperator, rank_floor: float | None):
    _check_dims(rho, H)
    if rank_floor is not None and rank_floor != rho.rank_floor:
        rho = DensityMatrix(rho.op, rho.spectral_form, rank_floor=rank_floor)
    if not rho.full_rank:
        lam = rho.populations
        raise RankDeficient(f"state is not full rank (eigenvalue ratio {lam[0] / lam[-1]:.3e})")
    s = rho.spectral
    lam = rho.populations
    ht = s.to_basis(H.matrix)
    root = np.sqrt(lam)
    factor = 2.0 * np.outer(root, root) / np.add.outer(lam, lam)
    x = factor * ht
    x = 0.5 * (x + x.conj().T)
    return s, lam, ht, x


def state_hamiltonian(rho: DensityMatrix, H: HermitianOperator, *, rank_floor: float | None = None) -> HermitianOperator:
    s, _, _, x = _in_rho_basis(rho, H, rank_floor)
    v = s.eigenvectors
    return HermitianOperator(v @ x @ v.conj().T)


def optimal_ensemble(
    rho: DensityMatrix,
    H: HermitianOperator,
    *,
    gap_tol: float = config.GAP_TOL,
    rank_floor: float | None = None,
    allow_degenerate: bool = False,
) -> Leaf:
    s, lam, ht, x = _in_rho_basis(rho, H, rank_floor)
    v = s.eigenvectors
    energies, c = np.linalg.eigh(x)

    unique = True
    if energies.size > 1:
        gap = _relative_gap(energies)
        if gap < gap_tol:
            if not allow_degenerate:
                raise DegenerateStateHamiltonian(f"relative gap of H_rho is {gap:.3e} (< {gap_tol:.1e})")
            logger.warning("H_rho relative gap %.3e below %.1e; ensemble is not unique", gap, gap_tol)
            unique = False

    populations = np.einsum("k,ki->i", lam, np.abs(c) ** 2)
    populations = populations / populations.sum()
    unreliable = populations < config.UNDERFLOW

    phi = v @ (np.sqrt(lam)[:, None] * c)
    norms = np.linalg.norm(phi, axis=0)
    ok = norms > 0
    phi[:, ok] /= norms[ok]
    psi = v @ c
    phi[:, ~ok] = psi[:, ~ok]
    phases = phase_factors(phi)
    phi *= phases
    psi *= phases

    if unreliable.any():
        logger.info("%d leaf populations below %.0e flagged unreliable", int(unreliable.sum()), config.UNDERFLOW)

    return Leaf(
        h_rho=HermitianOperator(v @ x @ v.conj().T),
        energies=energies,
        populations=populations,
        states=phi,
        psi=psi,
        source_energy=float(np.dot(lam, ht.diagonal().real)),
        unique=unique,
        unreliable=unreliable,
    )


def commuting_leaf(H: HermitianOperator, spectral: SpectralDecomposition | None = None) -> Leaf:
    """Leaf of I/d: the eigenbasis of H with uniform populations.

    Built directly from the eigendecomposition, so a degenerate H (integrable
    benchmarks) yields a leaf flagged non-unique instead of an error.
    """
    s = spectral if spectral is not None else spectral_decompose(H)
    d = s.dim
    unique = d < 2 or _relative_gap(s.eigenvalues) >= config.GAP_TOL
    return Leaf(
        h_rho=H,
        energies=s.eigenvalues,
        populations=np.full(d, 1.0 / d),
        states=s.eigenvectors,
        psi=s.eigenvectors,
        source_energy=H.trace / d,
        unique=unique,
    )


def qfi(rho: DensityMatrix, H: HermitianOperator) -> float:
    """Quantum Fisher information 2 sum (l_k - l_l)^2/(l_k + l_l) |H_kl|^2."""
    _check_dims(rho, H)
    lam = rho.populations
    ht = rho.spectral.to_basis(H.matrix)
    den = np.add.outer(lam, lam)
    num = np.subtract.outer(lam, lam) ** 2
    keep = den > config.UNDERFLOW
    terms = np.zeros_like(den)
    terms[keep] = num[keep] / den[keep]
    return max(0.0, float(2.0 * np.sum(terms * np.abs(ht) ** 2)))


def average_variance(leaf: Leaf, H: HermitianOperator) -> float:
    if leaf.dim != H.dim:
        raise InvalidParameter(f"dimension mismatch: leaf {leaf.dim}, Hamiltonian {H.dim}")
    return float(np.dot(leaf.populations, state_variances(H, leaf.states)))


def leaf_fingerprint(leaf: Leaf, H: HermitianOperator) -> np.ndarray:
    """Ascending multiset of Var_phi_i(H); invariant under the flow of H."""
    if leaf.dim != H.dim:
        raise InvalidParameter(f"dimension mismatch: leaf {leaf.dim}, Hamiltonian {H.dim}")
    return np.sort(state_variances(H, leaf.states))


def decomposition_variance_oracle(
    rho: DensityMatrix,
    H: HermitianOperator,
    samples: int,
    seed: int,
    *,
    max_dim: int | None = None,
    batch: int = 1024,
) -> float:
    """Smallest average variance over ``samples`` random pure-state decompositions.

    Decompositions are W U with W = V sqrt(Lambda) and U Haar random; every
    d-element decomposition of rho has this form.
    """
    _check_dims(rho, H)
    d = rho.dim
    max_dim = config.ORACLE_MAX_DIM if max_dim is None else max_dim
    if d > max_dim:
        raise InvalidParameter(f"oracle limited to d <= {max_dim}, got {d}")
    if samples < 1:
        raise InvalidParameter("samples must be >= 1")
    h = H.matrix
    w = rho.spectral.eigenvectors * np.sqrt(rho.populations)
    second = float(np.sum(rho.matrix * (h @ h).T).real)
    if d == 1:
        return max(0.0, second - float(np.sum(rho.matrix * h.T).real) ** 2)

    rng = np.random.default_rng(seed)
    best = np.inf
    remaining = samples
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        mixed = w[None, :, :] @ haar_unitaries(d, n, rng)
        q = np.sum(np.abs(mixed) ** 2, axis=1)
        a = np.sum(mixed.conj() * (h @ mixed), axis=1).real
        keep = q > config.UNDERFLOW
        ratio = np.zeros_like(q)
        ratio[keep] = a[keep] ** 2 / q[keep]
        best = min(best, float(np.min(second - ratio.sum(axis=1))))
    return max(0.0, best)


def barycenter(leaf: Leaf) -> DensityMatrix:
    phi = leaf.states
    return DensityMatrix(HermitianOperator((phi @ phi.conj().T) / leaf.dim))


def incoherence(leaf: Leaf) -> float:
    """von Neumann entropy (nats) of the leaf barycenter."""
    value = barycenter(leaf).entropy()
    return float(min(max(value, 0.0), np.log(leaf.dim)))


def leaf_volume(leaf: Leaf) -> float:
    return float(np.exp(incoherence(leaf)))


def leaf_entropy(leaf: Leaf) -> float:
    return float(entropy(leaf.populations))


def gram_matrix(leaf: Leaf) -> np.ndarray:
    phi = leaf.states
    return phi.conj().T @ phi


def nonorthogonality(leaf: Leaf) -> float:
    """||G - I||_F; zero exactly on the commuting leaf."""
    return float(np.linalg.norm(gram_matrix(leaf) - np.eye(leaf.dim)))


def match_families(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best permutation pi with |<a_i|b_pi(i)>| maximal; returns (pi, overlaps)."""
    overlaps = np.abs(a.conj().T @ b)
    rows, cols = linear_sum_assignment(-overlaps)
    return cols[np.argsort(rows)], overlaps[rows, cols][np.argsort(rows)]


def leaf_transport(leaf: Leaf, new_populations: Sequence[float]) -> DensityMatrix:
    q = np.asarray(new_populations, dtype=np.float64)
    if q.shape != (leaf.dim,):
        raise InvalidParameter(f"expected {leaf.dim} populations, got shape {q.shape}")
    if not np.all(np.isfinite(q)) or np.any(q < 0) or not np.any(q > 0):
        raise InvalidParameter("populations must be finite, nonnegative and not all zero")
    q = q / q.sum()
    if np.any(q == 0):
        logger.debug("transport to a boundary point of the leaf (%d zero populations)", int(np.sum(q == 0)))
    phi = leaf.states
    return DensityMatrix(HermitianOperator((phi * q) @ phi.conj().T))


def leaf_canonical(leaf: Leaf, beta: float) -> DensityMatrix:
    """Maximum population entropy at fixed mean energy: p_i ~ exp(-beta E_i)."""
    if beta is None or not np.isfinite(beta):
        raise InvalidParameter(f"beta must be finite, got {beta!r}")
    log_w = -float(beta) * leaf.energies
    return leaf_transport(leaf, np.exp(log_w - logsumexp(log_w)))


def leaf_microcanonical(leaf: Leaf, window: tuple[float, float]) -> DensityMatrix:
    lo, hi = window
    inside = (leaf.energies >= lo) & (leaf.energies <= hi)
    if not inside.any():
        raise EmptyShell(f"no leaf energy in [{lo}, {hi}]")
    return leaf_transport(leaf, inside.astype(np.float64))


def nondegeneracy_gap(h_rho: HermitianOperator) -> float:
    return _relative_gap(spectral_decompose(h_rho).eigenvalues)


def leaf_gap(leaf: Leaf) -> float:
    """Relative gap of the leaf energies (the spectrum of H_rho)."""
    return _relative_gap(leaf.energies)


def _binary_entropy(x: float) -> float:
    return float(entr(x) + entr(1.0 - x))


def qubit_leaf_geometry(n_hat: Sequence[float]) -> QubitLeafGeometry:
    """Chord geometry of the qubit leaf through the unit Bloch vector n_hat (H ~ sigma^z)."""
    n = np.asarray(n_hat, dtype=np.float64)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise InvalidParameter(f"n_hat must be a unit 3-vector, got {n_hat!r}")
    reflected = n.copy()
    reflected[2] = -n[2]
    transverse = float(np.hypot(n[0], n[1]))
    return QubitLeafGeometry(
        n_hat=tuple(float(c) for c in n),
        endpoint_plus=tuple(float(c) for c in n),
        endpoint_minus=tuple(float(c) for c in reflected),
        transverse_norm=transverse,
        barycenter_entropy=_binary_entropy((1.0 - transverse) / 2.0),
    )


def leaf_record(leaf: Leaf) -> dict:
    return {
        "dim": leaf.dim,
        "energies": [float(e) for e in leaf.energies],
        "populations": [float(p) for p in leaf.populations],
        "source_energy": float(leaf.source_energy),
        "flags": leaf.flags(),
    }


def save_leaf(leaf: Leaf, out_dir: str) -> list[str]:
    """Write the leaf manifest plus QMAT1 blobs; returns written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(str(e), out_dir) from e
    manifest_path = os.path.join(out_dir, LEAF_MANIFEST)
    try:
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(leaf_record(leaf), f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as e:
        raise ArtifactIOError(str(e), manifest_path) from e
    # the state matrix is a general square matrix; "unitary" is the closest QMAT1 kind
    return [
        manifest_path,
        qmat.write_operator(os.path.join(out_dir, LEAF_H_RHO), leaf.h_rho),
        qmat.write(os.path.join(out_dir, LEAF_STATES), leaf.states, "unitary"),
    ]


def load_leaf(in_dir: str) -> Leaf:
    manifest_path = os.path.join(in_dir, LEAF_MANIFEST)
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, ValueError) as e:
        raise ArtifactIOError(str(e), manifest_path) from e
    _, h = qmat.read(os.path.join(in_dir, LEAF_H_RHO), expect="hermitian")
    _, phi = qmat.read(os.path.join(in_dir, LEAF_STATES), expect="unitary")
    h_rho = HermitianOperator(h)
    d = int(manifest["dim"])
    unreliable = np.zeros(d, dtype=bool)
    unreliable[list(manifest["flags"].get("unreliable", []))] = True
    return Leaf(
        h_rho=h_rho,
        energies=np.asarray(manifest["energies"]),
        populations=np.asarray(manifest["populations"]),
        states=phi,
        psi=spectral_decompose(h_rho).eigenvectors,
        source_energy=float(manifest["source_energy"]),
        unique=bool(manifest["flags"].get("unique", True)),
        unreliable=unreliable,
    )
