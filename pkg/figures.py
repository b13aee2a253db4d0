"""figures.py

Figure presets and the qutrit data behind the three-dimensional leaf picture.

Presets are plain experiment documents (see experiment_config) plus the list
of pipeline commands that produce the figure's data. A user config file is
deep-merged over the preset.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

import config
from errors import DegenerateStateHamiltonian, InvalidParameter, RankDeficient
from foliation import Leaf, barycenter, incoherence, leaf_canonical, optimal_ensemble
from operator_core import DensityMatrix, HermitianOperator, expectation, gell_mann

logger = logging.getLogger(__name__)

QUTRIT_AXES = (1, 3, 8)
QUTRIT_RANGE = 1.2
LEAF_ID_DECIMALS = 6

POINTS_HEADER = ("n1", "n3", "n8", "incoherence", "leaf_id")
CURVES_HEADER = ("leaf_id", "beta", "n1", "n3", "n8", "energy", "purity")

_PARAMAGNETIC = {"g": 0.0, "h": 1.5, "D": 0.0}
_FERROMAGNETIC = {"g": 0.0, "h": 0.5, "D": 0.0}
_SWEEP = [6, 8, 10, 12]


def _preset(state: dict, **sections) -> dict:
    doc = {"model": {"L": 12, "g": "supplement"}, "state": state}
    doc.update(sections)
    return doc


PRESETS: dict[str, tuple[dict, tuple[str, ...]]] = {
    "fig1": (
        _preset({"uniform": True}, model={"L": 2}, output={"emit": ["figures"]}),
        ("fig1",),
    ),
    "fig2-left": (
        _preset(
            {"h0": _PARAMAGNETIC, "beta": 0.25},
            sweep={"L": _SWEEP, "beta": [0.25, 0.75, 1.75]},
            diagnostics={"observables": "main", "benchmarks": True},
            output={"emit": ["diagnostics"]},
        ),
        ("diagnostics",),
    ),
    "fig2-right": (
        _preset(
            {"h0": _PARAMAGNETIC, "beta": 0.5},
            evolve={"observables": "main"},
            output={"emit": ["evolution"]},
        ),
        ("evolve",),
    ),
    "s1": (
        _preset(
            {"h0": _FERROMAGNETIC, "beta": 0.25},
            sweep={"L": _SWEEP},
            diagnostics={"benchmarks": True},
            output={"emit": ["diagnostics"]},
        ),
        ("diagnostics",),
    ),
    "s2": (
        _preset(
            {"h0": _FERROMAGNETIC, "beta": 0.75},
            sweep={"L": _SWEEP},
            diagnostics={"benchmarks": True},
            output={"emit": ["diagnostics"]},
        ),
        ("diagnostics",),
    ),
    "s3": (
        _preset(
            {"h0": _FERROMAGNETIC, "beta": 1.75},
            sweep={"L": _SWEEP},
            diagnostics={"benchmarks": True},
            output={"emit": ["diagnostics"]},
        ),
        ("diagnostics",),
    ),
    "s4": (
        _preset(
            {"h0": _FERROMAGNETIC, "beta": 0.25},
            sweep={"L": _SWEEP},
            swap_roles=True,
            output={"emit": ["diagnostics"]},
        ),
        ("diagnostics",),
    ),
}

# Incoherence ratios quoted for the L = 12 setups
EXPECTED_RATIOS = {"fig2-right": 0.71, "s1": 0.97, "s2": 0.76, "s3": 0.24, "s4": 0.92}


def preset(name: str) -> tuple[dict, tuple[str, ...]]:
    if name not in PRESETS:
        raise InvalidParameter(f"unknown figure {name!r} (expected one of {', '.join(PRESETS)})")
    doc, commands = PRESETS[name]
    return copy.deepcopy(doc), commands


@dataclass(frozen=True)
class Fig1Point:
    n1: float
    n3: float
    n8: float
    incoherence: float
    leaf_id: int

    def row(self) -> tuple:
        return (self.n1, self.n3, self.n8, self.incoherence, self.leaf_id)


def qutrit_hamiltonian() -> HermitianOperator:
    """1/2 lambda_3 + (3 sqrt(3)/2) lambda_8 = diag(2, 1, -3)."""
    return 0.5 * gell_mann(3) + (1.5 * math.sqrt(3.0)) * gell_mann(8)


def qutrit_matrix(n1: float, n3: float, n8: float) -> np.ndarray:
    m = np.eye(3, dtype=np.complex128) / 3.0
    for coeff, j in zip((n1, n3, n8), QUTRIT_AXES):
        m = m + 0.5 * coeff * gell_mann(j).matrix
    return m


def qutrit_state(n1: float, n3: float, n8: float) -> DensityMatrix:
    """I/3 + (n1 l1 + n3 l3 + n8 l8)/2; tr[rho l_j] = n_j."""
    return DensityMatrix.from_matrix(qutrit_matrix(n1, n3, n8))


def qutrit_coordinates(rho: DensityMatrix) -> tuple[float, float, float]:
    return tuple(expectation(gell_mann(j), rho) for j in QUTRIT_AXES)


def _grid(step: float) -> np.ndarray:
    count = int(round(2 * QUTRIT_RANGE / step))
    return np.round(np.linspace(-QUTRIT_RANGE, QUTRIT_RANGE, count + 1), 10)


def fig1_points(
    grid_step: float = 0.05,
    *,
    H: HermitianOperator | None = None,
    gap_tol: float = config.GAP_TOL,
    rank_floor: float = config.RANK_FLOOR,
) -> tuple[list[Fig1Point], dict[int, Leaf]]:
    """Grid points that are valid, full-rank states with a nondegenerate H_rho.

    Leaves are identified by their barycenter rounded to 1e-6; ids follow the
    grid order (n1, then n3, then n8 ascending).
    """
    if not 0 < grid_step <= 1:
        raise InvalidParameter(f"grid step must be in (0, 1], got {grid_step}")
    H = H if H is not None else qutrit_hamiltonian()
    axis = _grid(grid_step)
    n1, n3, n8 = np.meshgrid(axis, axis, axis, indexing="ij")
    coords = np.stack([n1.ravel(), n3.ravel(), n8.ravel()], axis=1)
    basis = np.stack([gell_mann(j).matrix for j in QUTRIT_AXES])
    mats = np.eye(3)[None] / 3.0 + 0.5 * np.einsum("nj,jab->nab", coords, basis)
    eig = np.linalg.eigvalsh(mats)
    valid = (eig[:, 0] > 0) & (eig[:, 0] > rank_floor * eig[:, -1])
    logger.info("fig1 grid: %d points, %d strictly positive", coords.shape[0], int(valid.sum()))

    ids: dict[tuple, int] = {}
    leaves: dict[int, Leaf] = {}
    points: list[Fig1Point] = []
    skipped = 0
    for c in coords[valid]:
        try:
            rho = DensityMatrix.from_matrix(qutrit_matrix(*c), rank_floor=rank_floor)
            leaf = optimal_ensemble(rho, H, gap_tol=gap_tol, rank_floor=rank_floor)
        except (RankDeficient, DegenerateStateHamiltonian):
            skipped += 1
            continue
        key = tuple(np.round(barycenter(leaf).matrix, LEAF_ID_DECIMALS).ravel().tolist())
        # -0.0 and 0.0 must land on the same key
        key = tuple(complex(z.real + 0.0, z.imag + 0.0) for z in key)
        if key not in ids:
            ids[key] = len(ids)
            leaves[ids[key]] = leaf
        points.append(Fig1Point(float(c[0]), float(c[1]), float(c[2]), incoherence(leaf), ids[key]))
    if skipped:
        logger.info("fig1 grid: %d points skipped (rank or degeneracy)", skipped)
    return points, leaves


def beta_grid(beta_max: float, points: int) -> np.ndarray:
    if beta_max <= 0 or points < 2:
        raise InvalidParameter("beta grid needs beta_max > 0 and at least 2 points")
    return np.linspace(-beta_max, beta_max, points)


def curve_leaf_ids(leaves: Mapping[int, Leaf], count: int) -> list[int]:
    """``count`` leaf ids spread evenly over the id range."""
    if count <= 0 or not leaves:
        return []
    ordered = sorted(leaves)
    picks = np.linspace(0, len(ordered) - 1, min(count, len(ordered)))
    return sorted({ordered[int(round(i))] for i in picks})


def fig1_curves(
    leaves: Mapping[int, Leaf],
    leaf_ids: Sequence[int],
    betas: Sequence[float],
    *,
    H: HermitianOperator | None = None,
) -> list[tuple]:
    """Leaf-canonical states along each selected leaf, both signs of beta."""
    H = H if H is not None else qutrit_hamiltonian()
    rows = []
    for leaf_id in leaf_ids:
        leaf = leaves[leaf_id]
        for beta in betas:
            rho = leaf_canonical(leaf, float(beta))
            n1, n3, n8 = qutrit_coordinates(rho)
            rows.append((leaf_id, float(beta), n1, n3, n8, expectation(H, rho), rho.purity()))
    return rows
