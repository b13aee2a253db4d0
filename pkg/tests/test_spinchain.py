from __future__ import annotations

import math

import numpy as np
import pytest

from errors import InvalidParameter
from operator_core import SIGMA
from spinchain import (
    MAIN_TEXT_G,
    SUPPLEMENT_G,
    ChainSpec,
    DenseObservable,
    ObservableCatalog,
    build_hamiltonian,
    chaotic_spec,
    identity_observable,
    local_observables,
    main_observables,
    paramagnetic_h0,
    pauli_observable,
    thermal_state,
)

SX, SY, SZ = (SIGMA[a].matrix for a in ("x", "y", "z"))
I2 = np.eye(2)


def test_two_site_ising_coupling() -> None:
    H = build_hamiltonian(ChainSpec(2, 0.0, 0.0, 0.0, "open"))
    assert np.allclose(H.matrix, np.kron(SX, SX))
    periodic = build_hamiltonian(ChainSpec(2, 0.0, 0.0, 0.0, "periodic"))
    assert np.allclose(np.linalg.eigvalsh(periodic.matrix), [-2.0, -2.0, 2.0, 2.0])


def test_two_site_transverse_field_spectrum() -> None:
    h = 0.7
    H = build_hamiltonian(ChainSpec(2, 0.0, h, 0.0, "open"))
    assert np.allclose(H.matrix, np.kron(SX, SX) + h * (np.kron(SZ, I2) + np.kron(I2, SZ)))
    root = math.sqrt(1.0 + 4.0 * h * h)
    assert np.allclose(np.linalg.eigvalsh(H.matrix), sorted([-root, -1.0, 1.0, root]))


def test_dzyaloshinskii_moriya_term() -> None:
    H = build_hamiltonian(ChainSpec(2, 0.0, 0.0, 0.3, "open"))
    expected = np.kron(SX, SX) + 0.3 * (np.kron(SZ, SY) - np.kron(SY, SZ))
    assert np.allclose(H.matrix, expected)


def test_chaotic_chain_is_traceless_and_translation_invariant() -> None:
    for L in (3, 4, 6):
        spec = chaotic_spec(L)
        H = build_hamiltonian(spec)
        assert H.trace == pytest.approx(0.0, abs=1e-10)
        base = np.linalg.eigvalsh(H.matrix)
        for shift in (1, L - 1):
            shifted = np.linalg.eigvalsh(build_hamiltonian(spec, shift=shift).matrix)
            assert np.allclose(shifted, base, atol=1e-10)


def test_g_readings() -> None:
    assert SUPPLEMENT_G == pytest.approx((math.sqrt(5) + 5) / 8)
    assert MAIN_TEXT_G == pytest.approx(math.sqrt(10) / 8)
    assert chaotic_spec(4).g == SUPPLEMENT_G


def test_thermal_state_commutes_with_h0() -> None:
    spec0 = paramagnetic_h0(4)
    H0 = build_hamiltonian(spec0)
    rho = thermal_state(spec0, 0.75)
    assert rho.op.trace == pytest.approx(1.0)
    assert H0.commutator_norm(rho) <= 1e-10 * H0.frobenius()
    assert np.allclose(thermal_state(spec0, 0.0).matrix, np.eye(16) / 16)


def test_chain_spec_validation() -> None:
    for bad in (
        lambda: ChainSpec(1),
        lambda: ChainSpec(15),
        lambda: ChainSpec(4, boundary="twisted"),
        lambda: ChainSpec(4, h=float("nan")),
    ):
        with pytest.raises(InvalidParameter):
            bad()


def test_content_hash_is_stable_and_parameter_sensitive() -> None:
    assert chaotic_spec(6).content_hash() == chaotic_spec(6).content_hash()
    assert chaotic_spec(6).content_hash() != ChainSpec(6, h=0.5).content_hash()
    assert chaotic_spec(6).content_hash() != chaotic_spec(6, "open").content_hash()


def test_local_observable_catalog() -> None:
    catalog = local_observables(4, site=1)
    assert len(catalog) == 12
    assert catalog.labels[:3] == ["x@1", "y@1", "z@1"]
    assert {"zz@1,2", "xy@1,2", "zy@1,2"} <= set(catalog.labels)
    for obs in catalog:
        assert obs.operator.trace == pytest.approx(0.0)

    assert np.allclose(local_observables(2)["z@1"].operator.matrix, np.kron(SZ, I2))
    assert np.allclose(local_observables(2)["xy@1,2"].operator.matrix, np.kron(SX, SY))
    assert "zz@4,1" in local_observables(4, site=4).labels
    assert main_observables(6, site=2).labels == ["z@2", "zz@2,3"]

    with pytest.raises(InvalidParameter):
        local_observables(4, site=5)


def test_pauli_apply_matches_dense_operator(rng: np.random.Generator) -> None:
    L = 3
    vectors = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    for obs in local_observables(L, site=3):
        dense = obs.operator.matrix
        assert np.allclose(obs.apply(vectors), dense @ vectors)
        assert np.allclose(obs.apply(vectors[:, 0]), dense @ vectors[:, 0])
    ident = identity_observable(L)
    assert ident.label == "id"
    assert np.allclose(ident.apply(vectors), vectors)


def test_catalog_rules() -> None:
    zz = pauli_observable(3, {2: "z", 1: "z"})
    assert zz.label == "zz@1,2"
    with pytest.raises(InvalidParameter):
        ObservableCatalog((zz, zz))
    with pytest.raises(InvalidParameter):
        ObservableCatalog((zz, identity_observable(2)))
    dense = DenseObservable("H", build_hamiltonian(chaotic_spec(3)))
    extended = ObservableCatalog((zz,)).extended(dense)
    assert extended.labels == ["zz@1,2", "H"]
    with pytest.raises(KeyError):
        extended["x@1"]
