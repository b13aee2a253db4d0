"""dynamics.py

Exact unitary evolution in the eigenbasis of H, and the comparison between
the exact mixed-state evolution of local observables and the evolution of a
single representative leaf state.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

import config
from errors import InvalidParameter
from foliation import Leaf
from operator_core import (
    DensityMatrix,
    HermitianOperator,
    PureState,
    SpectralDecomposition,
    spectral_decompose,
)
from spinchain import Observable, ObservableCatalog
from typicality import ShellReport, shell_values

logger = logging.getLogger(__name__)

BAND_PERCENTILES = (16.0, 84.0)
CSV_HEADER = ("t", "exact", "representative", "band_low", "band_high")


@dataclass(frozen=True, eq=False)
class EvolutionComparison:
    times: np.ndarray
    observable_label: str
    exact: np.ndarray
    representative: np.ndarray
    band_low: np.ndarray
    band_high: np.ndarray
    representative_index: int
    representative_energy: float

    def __post_init__(self) -> None:
        n = self.times.size
        for name in ("exact", "representative", "band_low", "band_high"):
            if getattr(self, name).shape != (n,):
                raise InvalidParameter(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if np.any(self.band_low > self.band_high):
            raise InvalidParameter("band_low exceeds band_high")

    def rows(self) -> list[tuple]:
        return [
            tuple(float(v) for v in row)
            for row in zip(self.times, self.exact, self.representative, self.band_low, self.band_high)
        ]


def time_grid(t_max: float, dt: float) -> np.ndarray:
    if t_max < 0 or not np.isfinite(t_max):
        raise InvalidParameter(f"t_max must be finite and >= 0, got {t_max}")
    if t_max == 0:
        return np.zeros(1)
    if dt <= 0 or not np.isfinite(dt):
        raise InvalidParameter(f"dt must be finite and > 0, got {dt}")
    steps = int(np.floor(t_max / dt + 1e-9))
    return dt * np.arange(steps + 1)


def _check_dim(H_spec: SpectralDecomposition, d: int) -> None:
    if H_spec.dim != d:
        raise InvalidParameter(f"dimension mismatch: Hamiltonian {H_spec.dim}, state {d}")


def propagator(H_spec: SpectralDecomposition, t: float) -> np.ndarray:
    v = H_spec.eigenvectors
    return (v * np.exp(-1j * H_spec.eigenvalues * t)) @ v.conj().T


def evolve_pure(H_spec: SpectralDecomposition, psi: PureState, t: float) -> PureState:
    _check_dim(H_spec, psi.dim)
    v = H_spec.eigenvectors
    coeffs = np.exp(-1j * H_spec.eigenvalues * t) * (v.conj().T @ psi.amplitudes)
    return PureState.normalized(v @ coeffs)


def evolve_density(H_spec: SpectralDecomposition, rho: DensityMatrix, t: float) -> DensityMatrix:
    """U rho U^H; an analytic spectral form travels with the state."""
    _check_dim(H_spec, rho.dim)
    u = propagator(H_spec, t)
    op = HermitianOperator(u @ rho.matrix @ u.conj().T)
    form = None
    if rho.analytic:
        s = rho.spectral
        form = SpectralDecomposition(s.eigenvalues, u @ s.eigenvectors)
    return DensityMatrix(op, spectral_form=form, rank_floor=rho.rank_floor)


def representative_state(leaf: Leaf, target_energy: float | None = None) -> tuple[int, PureState]:
    """Leaf state whose energy is closest to the target; ties go to the lower index."""
    target = leaf.source_energy if target_energy is None else float(target_energy)
    dist = np.abs(leaf.energies - target)
    scale = max(1.0, abs(target), float(np.max(np.abs(leaf.energies))))
    index = int(np.flatnonzero(dist <= dist.min() + 1e-12 * scale)[0])
    return index, leaf.state(index)


def _band(values: np.ma.MaskedArray, start: int, stop: int) -> tuple[float, float]:
    block = values[start:stop].compressed()
    if block.size == 0:
        return float("nan"), float("nan")
    lo, hi = np.percentile(block, BAND_PERCENTILES)
    return float(lo), float(hi)


def compare_evolutions(
    leaf: Leaf,
    rho: DensityMatrix,
    H: HermitianOperator,
    catalog: ObservableCatalog,
    times: Sequence[float],
    shells: ShellReport,
    *,
    H_spec: SpectralDecomposition | None = None,
    target_energy: float | None = None,
    threads: int = config.THREADS,
) -> list[EvolutionComparison]:
    """Exact tr[rho(t) O] against <phi_r(t)|O|phi_r(t)> for every catalog entry, sorted by label."""
    if rho.dim != leaf.dim or H.dim != leaf.dim:
        raise InvalidParameter("leaf, state and Hamiltonian dimensions differ")
    if shells.shell_bounds[-1][1] != leaf.dim:
        raise InvalidParameter("shell report was not built from this leaf")
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    s = H_spec if H_spec is not None else spectral_decompose(H)
    v, w = s.eigenvectors, s.eigenvalues

    index, rep = representative_state(leaf, target_energy)
    lo_idx, hi_idx = shells.shell_bounds[shells.shell_of(index)]
    logger.info("representative state %d (E = %.6f), shell [%d, %d)", index, leaf.energies[index], lo_idx, hi_idx)

    rho_t = v.conj().T @ rho.matrix @ v
    rep_t = v.conj().T @ rep.amplitudes
    phases = np.exp(-1j * np.outer(t, w))

    def compare(obs: Observable) -> EvolutionComparison:
        o_t = v.conj().T @ obs.apply(v)
        exact = np.empty(t.size)
        representative = np.empty(t.size)
        for n, e in enumerate(phases):
            rho_n = (e[:, None] * rho_t) * e.conj()[None, :]
            exact[n] = np.sum(rho_n * o_t.T).real
            a = e * rep_t
            representative[n] = np.vdot(a, o_t @ a).real
        if obs.label in shells.per_observable:
            values = shells.per_observable[obs.label].values
        else:
            values = shell_values(leaf, obs)
        low, high = _band(values, lo_idx, hi_idx)
        return EvolutionComparison(
            times=t,
            observable_label=obs.label,
            exact=exact,
            representative=representative,
            band_low=np.full(t.size, low),
            band_high=np.full(t.size, high),
            representative_index=index,
            representative_energy=float(leaf.energies[index]),
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(compare, catalog))
    return sorted(results, key=lambda c: c.observable_label)


def band_coverage(comparison: EvolutionComparison, tol: float = 1e-12) -> float:
    """Fraction of time points where the representative curve lies inside the band."""
    r = comparison.representative
    inside = (r >= comparison.band_low - tol) & (r <= comparison.band_high + tol)
    return float(np.mean(inside))
