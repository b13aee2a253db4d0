"""qmat.py

QMAT1 binary container.

    QMAT1 d=<int> kind=<hermitian|density|unitary|state>\\n
    <d*d (or d for states) complex entries, row-major>

Each entry is two IEEE-754 binary64 little-endian values (real, imaginary),
no padding. ``numpy``'s ``<c16`` dtype has exactly that layout.
"""

from __future__ import annotations

import os
import re

import numpy as np

from errors import ArtifactIOError
from operator_core import DensityMatrix, HermitianOperator, PureState

MAGIC = "QMAT1"
KINDS = ("hermitian", "density", "unitary", "state")
_HEADER_RE = re.compile(rb"^QMAT1 d=(\d+) kind=(hermitian|density|unitary|state)$")
_ENTRY = np.dtype("<c16")


def encode(array: np.ndarray, kind: str) -> bytes:
    if kind not in KINDS:
        raise ValueError(f"unknown QMAT1 kind: {kind}")
    a = np.asarray(array, dtype=_ENTRY)
    if kind == "state":
        if a.ndim != 1:
            raise ValueError("state payload must be a vector")
        d = a.size
    else:
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix payload must be square")
        d = a.shape[0]
    header = f"{MAGIC} d={d} kind={kind}\n".encode("ascii")
    return header + np.ascontiguousarray(a).tobytes(order="C")


def decode(blob: bytes, source: str = "<bytes>") -> tuple[str, np.ndarray]:
    newline = blob.find(b"\n")
    if newline < 0:
        raise ArtifactIOError("missing QMAT1 header line", source)
    m = _HEADER_RE.match(blob[:newline])
    if not m:
        raise ArtifactIOError("malformed QMAT1 header", source)
    d = int(m.group(1))
    kind = m.group(2).decode("ascii")
    count = d if kind == "state" else d * d
    payload = blob[newline + 1:]
    if len(payload) != count * _ENTRY.itemsize:
        raise ArtifactIOError(
            f"QMAT1 payload has {len(payload)} bytes, expected {count * _ENTRY.itemsize}", source
        )
    a = np.frombuffer(payload, dtype=_ENTRY).astype(np.complex128)
    return kind, (a if kind == "state" else a.reshape(d, d))


def write(path: str, array: np.ndarray, kind: str) -> str:
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    try:
        with open(path, "wb") as f:
            f.write(encode(array, kind))
    except OSError as e:
        raise ArtifactIOError(str(e), path) from e
    return path


def read(path: str, expect: str | None = None) -> tuple[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise ArtifactIOError(str(e), path) from e
    kind, a = decode(blob, source=path)
    if expect is not None and kind != expect:
        raise ArtifactIOError(f"expected kind={expect}, found kind={kind}", path)
    return kind, a


def write_operator(path: str, op: HermitianOperator) -> str:
    return write(path, op.matrix, "hermitian")


def write_density(path: str, rho: DensityMatrix) -> str:
    return write(path, rho.matrix, "density")


def write_state(path: str, psi: PureState) -> str:
    return write(path, psi.amplitudes, "state")


def read_density(path: str) -> DensityMatrix:
    """Load a density matrix; any validation failure is reported against the file."""
    _, a = read(path, expect="density")
    try:
        return DensityMatrix.from_matrix(a)
    except Exception as e:
        raise ArtifactIOError(f"not a valid density matrix ({e})", path) from e
