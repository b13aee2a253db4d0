"""typicality.py

Leaf-resolved diagonal ETH diagnostics.

The leaf's pure states, sorted by leaf energy, are grouped into energy shells
of consecutive levels. Each observable gets a piecewise-constant profile f_O
(the mean of <phi_i|O|phi_i> over the shell) and an outlier count

    N_delta = #{ i : |<phi_i|O|phi_i> - f_O(shell(i))| > delta }

reported on a delta grid together with log_d N_delta.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

import config
from errors import InvalidParameter
from foliation import Leaf, incoherence
from operator_core import DensityMatrix, HermitianOperator
from spinchain import DenseObservable, Observable, ObservableCatalog

logger = logging.getLogger(__name__)

DELTA_POINTS = 201
CSV_HEADER = ("delta", "N", "log_d_N")


@dataclass(frozen=True, eq=False)
class ObservableShells:
    values: np.ma.MaskedArray
    f: np.ndarray
    deviations: np.ma.MaskedArray


@dataclass(frozen=True, eq=False)
class ShellReport:
    """Shells are half-open index ranges [start, stop) over the energy-sorted leaf."""

    shell_bounds: tuple[tuple[int, int], ...]
    shell_mean_energy: np.ndarray
    per_observable: dict[str, ObservableShells] = field(default_factory=dict)
    mask_count: int = 0

    @property
    def shell_size(self) -> int:
        start, stop = self.shell_bounds[0]
        return stop - start

    def shell_of(self, index: int) -> int:
        for k, (start, stop) in enumerate(self.shell_bounds):
            if start <= index < stop:
                return k
        raise InvalidParameter(f"index {index} outside the partition")

    @property
    def labels(self) -> list[str]:
        return sorted(self.per_observable)


@dataclass(frozen=True, eq=False)
class DiagnosticsCurve:
    deltas: np.ndarray
    counts: np.ndarray
    log_d_counts: np.ndarray  # NaN where N = 0
    observable_label: str
    L: Optional[int]
    beta: Optional[float]
    incoherence_ratio: float
    shell_size: int
    mask_count: int = 0

    def sidecar(self) -> dict:
        return {
            "L": self.L,
            "beta": self.beta,
            "observable": self.observable_label,
            "shell_size": self.shell_size,
            "incoherence_ratio": self.incoherence_ratio,
            "mask_count": self.mask_count,
        }

    def rows(self) -> list[tuple]:
        return [
            (float(delta), int(n), None if n == 0 else float(ld))
            for delta, n, ld in zip(self.deltas, self.counts, self.log_d_counts)
        ]


@dataclass(frozen=True)
class SharpeningTrend:
    lengths: tuple[int, ...]
    log_d_counts: tuple[float, ...]  # -inf where N = 0
    sharpens: bool


def default_shell_size(d: int) -> int:
    return max(1, int(round(math.sqrt(d))))


def shell_partition(d: int, shell_size: int) -> list[tuple[int, int]]:
    if d < 1 or not 1 <= shell_size <= d:
        raise InvalidParameter(f"shell size must be in 1..{d}, got {shell_size}")
    return [(start, min(start + shell_size, d)) for start in range(0, d, shell_size)]


def _as_observable(O: Union[Observable, HermitianOperator]) -> Observable:
    if isinstance(O, HermitianOperator):
        return DenseObservable("O", O)
    return O


def shell_values(leaf: Leaf, O: Union[Observable, HermitianOperator]) -> np.ma.MaskedArray:
    """<phi_i|O|phi_i> in leaf order; entries with unreliable populations are masked."""
    obs = _as_observable(O)
    if obs.dim != leaf.dim:
        raise InvalidParameter(f"dimension mismatch: leaf {leaf.dim}, observable {obs.dim}")
    phi = leaf.states
    values = np.sum(phi.conj() * obs.apply(phi), axis=0).real
    return np.ma.masked_array(values, mask=leaf.unreliable.copy())


def ratio_values(leaf: Leaf, rho: DensityMatrix, O: Union[Observable, HermitianOperator]) -> np.ndarray:
    """<Psi_i|sqrt(rho) O sqrt(rho)|Psi_i> / <Psi_i|rho|Psi_i>, evaluated from the H_rho eigenvectors."""
    obs = _as_observable(O)
    root = rho.sqrt().matrix
    w = root @ leaf.psi
    num = np.sum(w.conj() * obs.apply(w), axis=0).real
    den = np.sum(leaf.psi.conj() * (rho.matrix @ leaf.psi), axis=0).real
    return num / den


def _shell_profile(values: np.ma.MaskedArray, bounds: Sequence[tuple[int, int]]) -> ObservableShells:
    f = np.full(len(bounds), np.nan)
    dev = np.ma.masked_array(np.zeros(values.size), mask=np.ma.getmaskarray(values).copy())
    for k, (start, stop) in enumerate(bounds):
        block = values[start:stop]
        if block.count() == 0:
            continue
        f[k] = float(block.mean())
        dev[start:stop] = np.abs(block - f[k])
    return ObservableShells(values=values, f=f, deviations=dev)


def build_shell_report(
    leaf: Leaf,
    catalog: ObservableCatalog,
    shell_size: int,
    *,
    threads: int = 1,
) -> ShellReport:
    bounds = tuple(shell_partition(leaf.dim, shell_size))
    mean_energy = np.array([leaf.energies[a:b].mean() for a, b in bounds])

    def profile(obs: Observable) -> ObservableShells:
        return _shell_profile(shell_values(leaf, obs), bounds)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        profiles = list(pool.map(profile, catalog))
    per_observable = {obs.label: p for obs, p in zip(catalog, profiles)}
    return ShellReport(bounds, mean_energy, per_observable, leaf.mask_count)


def log_d_count(count: int, d: int) -> float:
    if count <= 0:
        return -math.inf
    return math.log(count) / math.log(d)


def outlier_counts(deviations: np.ma.MaskedArray, deltas: np.ndarray) -> np.ndarray:
    valid = np.sort(deviations.compressed())
    return valid.size - np.searchsorted(valid, deltas, side="right")


def _check_grid(deltas: np.ndarray) -> None:
    if deltas.ndim != 1 or deltas.size == 0:
        raise InvalidParameter("delta grid must be a non-empty vector")
    if deltas[0] != 0 or np.any(np.diff(deltas) < 0):
        raise InvalidParameter("delta grid must be ascending and start at 0")


def delta_grid_for(deviations: np.ma.MaskedArray, points: int = DELTA_POINTS) -> np.ndarray:
    valid = deviations.compressed()
    top = float(valid.max()) if valid.size else 0.0
    return np.linspace(0.0, top, points)


def incoherence_ratio(leaf: Leaf) -> float:
    if leaf.dim == 1:
        return 1.0
    return float(min(max(incoherence(leaf) / math.log(leaf.dim), 0.0), 1.0))


def diagnostics(
    leaf: Leaf,
    catalog: ObservableCatalog,
    shell_size: int | None = None,
    delta_grid: Sequence[float] | None = None,
    *,
    delta_points: int = DELTA_POINTS,
    L: int | None = None,
    beta: float | None = None,
    threads: int = config.THREADS,
) -> tuple[ShellReport, list[DiagnosticsCurve]]:
    """Shell report plus one N_delta curve per observable (sorted by label).

    Without ``delta_grid`` every observable gets its own uniform grid from 0 to
    its largest deviation.
    """
    size = default_shell_size(leaf.dim) if shell_size is None else int(shell_size)
    report = build_shell_report(leaf, catalog, size, threads=threads)
    shared = None
    if delta_grid is not None:
        shared = np.asarray(delta_grid, dtype=np.float64)
        _check_grid(shared)
    ratio = incoherence_ratio(leaf)
    if leaf.mask_count:
        logger.info("%d masked leaf states excluded from shell statistics", leaf.mask_count)

    curves = []
    for label in report.labels:
        dev = report.per_observable[label].deviations
        deltas = shared if shared is not None else delta_grid_for(dev, delta_points)
        counts = outlier_counts(dev, deltas)
        log_d = np.array([log_d_count(int(n), leaf.dim) if n else np.nan for n in counts])
        curves.append(
            DiagnosticsCurve(
                deltas=deltas,
                counts=counts,
                log_d_counts=log_d,
                observable_label=label,
                L=L,
                beta=beta,
                incoherence_ratio=ratio,
                shell_size=size,
                mask_count=leaf.mask_count,
            )
        )
    return report, curves


def count_outliers(report: ShellReport, label: str, delta: float) -> int:
    dev = report.per_observable[label].deviations
    return int(outlier_counts(dev, np.array([float(delta)]))[0])


def sharpening_trend(points: Mapping[int, tuple[int, int]]) -> SharpeningTrend:
    """``points`` maps L -> (N_delta, d). Sharpens when log_d N_delta strictly decreases with L."""
    lengths = tuple(sorted(points))
    values = tuple(log_d_count(points[L][0], points[L][1]) for L in lengths)
    sharpens = len(values) > 1 and all(
        b < a or (a == b == -math.inf) for a, b in zip(values, values[1:])
    )
    return SharpeningTrend(lengths, values, sharpens)
