"""spectral_cache.py

On-disk cache of chain Hamiltonian eigendecompositions.

Each entry is a pair of QMAT1 files named after the content hash of the
ChainSpec: ``<hash>.values.qmat`` (kind=state, the eigenvalues as a complex
vector with zero imaginary parts) and ``<hash>.vectors.qmat`` (kind=unitary).
"""

from __future__ import annotations

import logging
import os

import numpy as np

import config
import qmat
from errors import ArtifactIOError, LeafkitError
from operator_core import HermitianOperator, SpectralDecomposition, spectral_decompose
from spinchain import ChainSpec, build_hamiltonian

logger = logging.getLogger(__name__)


class SpectralCache:
    def __init__(self, cache_dir: str | None = None, enabled: bool | None = None):
        self.cache_dir = cache_dir or config.CACHE_DIR
        self.enabled = (not config.CACHE_DISABLED) if enabled is None else enabled
        self.hits = 0
        self.misses = 0

    def _paths(self, spec: ChainSpec) -> tuple[str, str]:
        key = spec.content_hash()
        return (
            os.path.join(self.cache_dir, f"{key}.values.qmat"),
            os.path.join(self.cache_dir, f"{key}.vectors.qmat"),
        )

    def load(self, spec: ChainSpec) -> SpectralDecomposition | None:
        if not self.enabled:
            return None
        values_path, vectors_path = self._paths(spec)
        if not (os.path.isfile(values_path) and os.path.isfile(vectors_path)):
            return None
        try:
            _, w = qmat.read(values_path, expect="state")
            _, v = qmat.read(vectors_path, expect="unitary")
            if w.size != spec.dim or v.shape != (spec.dim, spec.dim):
                raise ArtifactIOError("cached entry has the wrong dimension", values_path)
            return SpectralDecomposition(w.real, v)
        except LeafkitError as e:
            logger.warning("Ignoring unreadable cache entry for L=%d (%s)", spec.L, e)
            return None

    def store(self, spec: ChainSpec, s: SpectralDecomposition) -> None:
        if not self.enabled:
            return
        values_path, vectors_path = self._paths(spec)
        try:
            qmat.write(vectors_path, s.eigenvectors, "unitary")
            qmat.write(values_path, s.eigenvalues.astype(np.complex128), "state")
        except ArtifactIOError as e:
            logger.warning("Could not write cache entry: %s", e)

    def hamiltonian(self, spec: ChainSpec) -> tuple[HermitianOperator, SpectralDecomposition]:
        """H and its eigendecomposition, from cache when available."""
        H = build_hamiltonian(spec)
        s = self.load(spec)
        if s is not None:
            self.hits += 1
            logger.info("Cache hit: L=%d g=%.6g h=%.6g D=%.6g", spec.L, spec.g, spec.h, spec.D)
            return H, s
        self.misses += 1
        logger.info("Diagonalizing H (d=%d)", spec.dim)
        s = spectral_decompose(H)
        self.store(spec, s)
        return H, s
