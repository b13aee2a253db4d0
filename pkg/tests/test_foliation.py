from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from dynamics import evolve_density, evolve_pure
from errors import DegenerateStateHamiltonian, EmptyShell, InvalidParameter, RankDeficient
from foliation import (
    average_variance,
    barycenter,
    commuting_leaf,
    decomposition_variance_oracle,
    incoherence,
    leaf_canonical,
    leaf_entropy,
    leaf_fingerprint,
    leaf_gap,
    leaf_microcanonical,
    leaf_transport,
    leaf_volume,
    load_leaf,
    match_families,
    nondegeneracy_gap,
    nonorthogonality,
    optimal_ensemble,
    qfi,
    qubit_leaf_geometry,
    save_leaf,
    state_hamiltonian,
)
from operator_core import (
    SIGMA,
    DensityMatrix,
    HermitianOperator,
    PureState,
    bloch_density,
    bloch_vector,
    boltzmann_state,
    random_density,
    random_hermitian,
    spectral_decompose,
)


FULL_RANGE = tuple(range(2, 17))


def _random_problems(rng: np.random.Generator, count: int, dims=(2, 3, 4, 5, 6, 8)):
    for k in range(count):
        d = dims[k % len(dims)]
        yield random_density(d, rng), random_hermitian(d, rng)


def test_commuting_qubit_example() -> None:
    rho = DensityMatrix.from_matrix(np.diag([0.2, 0.8]))
    leaf = optimal_ensemble(rho, SIGMA["z"])
    assert np.allclose(leaf.h_rho.matrix, SIGMA["z"].matrix)
    assert np.allclose(leaf.energies, [-1.0, 1.0])
    assert np.allclose(leaf.populations, [0.8, 0.2])
    assert np.allclose(np.abs(leaf.states), [[0.0, 1.0], [1.0, 0.0]])
    assert qfi(rho, SIGMA["z"]) == pytest.approx(0.0, abs=1e-14)


def test_coherent_qubit_example() -> None:
    rho = bloch_density((0.6, 0.0, 0.0))
    leaf = optimal_ensemble(rho, SIGMA["z"])
    assert np.allclose(leaf.h_rho.matrix, 0.8 * SIGMA["z"].matrix, atol=1e-12)
    assert np.allclose(leaf.energies, [-0.8, 0.8])
    assert np.allclose(leaf.populations, [0.5, 0.5])
    assert np.allclose(bloch_vector(leaf.state(0)), (0.6, 0.0, -0.8), atol=1e-12)
    assert np.allclose(bloch_vector(leaf.state(1)), (0.6, 0.0, 0.8), atol=1e-12)


def test_defining_equation_and_energy_bookkeeping(rng: np.random.Generator) -> None:
    for rho, H in _random_problems(rng, 200, dims=FULL_RANGE):
        leaf = optimal_ensemble(rho, H)
        root = rho.sqrt().matrix
        h_rho = leaf.h_rho.matrix
        residual = 0.5 * (h_rho @ rho.matrix + rho.matrix @ h_rho) - root @ H.matrix @ root
        assert np.linalg.norm(residual) <= 1e-9 * H.frobenius()
        assert np.allclose(state_hamiltonian(rho, H).matrix, h_rho)

        energy = np.trace(rho.matrix @ H.matrix).real
        assert math.isclose(np.dot(leaf.populations, leaf.energies), energy, abs_tol=1e-10)
        assert math.isclose(leaf.source_energy, energy, abs_tol=1e-10)

        phi = leaf.states
        means = np.sum(phi.conj() * (H.matrix @ phi), axis=0).real
        assert np.allclose(means, leaf.energies, atol=1e-9)
        assert np.allclose((phi * leaf.populations) @ phi.conj().T, rho.matrix, atol=1e-10)
        assert np.allclose(np.linalg.norm(phi, axis=0), 1.0)
        assert np.all(leaf.populations >= 0)
        assert np.all(np.diff(leaf.energies) > 0)


def test_qfi_is_four_times_minimal_average_variance(rng: np.random.Generator) -> None:
    for rho, H in _random_problems(rng, 200, dims=FULL_RANGE):
        leaf = optimal_ensemble(rho, H)
        f = qfi(rho, H)
        assert abs(4.0 * average_variance(leaf, H) - f) <= 1e-8 * max(f, 1.0)


def test_thermal_state_of_h_is_on_the_commuting_leaf(rng: np.random.Generator) -> None:
    H = random_hermitian(6, rng)
    rho = boltzmann_state(H, 0.9)
    leaf = optimal_ensemble(rho, H)
    assert qfi(rho, H) < 1e-12
    assert nonorthogonality(leaf) < 1e-8
    assert incoherence(leaf) == pytest.approx(math.log(6), abs=1e-9)
    assert leaf_volume(leaf) == pytest.approx(6.0, abs=1e-8)


def test_pure_state_is_rank_deficient() -> None:
    rho = DensityMatrix.from_pure(PureState.normalized([1.0, 1.0]))
    with pytest.raises(RankDeficient):
        optimal_ensemble(rho, SIGMA["z"])
    with pytest.raises(RankDeficient):
        state_hamiltonian(rho, SIGMA["z"])


def test_degenerate_state_hamiltonian() -> None:
    rho = DensityMatrix.maximally_mixed(3)
    H = HermitianOperator(np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(DegenerateStateHamiltonian):
        optimal_ensemble(rho, H)
    leaf = optimal_ensemble(rho, H, allow_degenerate=True)
    assert not leaf.unique
    assert leaf.flags()["unique"] is False
    assert nondegeneracy_gap(leaf.h_rho) == pytest.approx(0.0, abs=1e-12)


def test_dimension_mismatch() -> None:
    with pytest.raises(InvalidParameter):
        optimal_ensemble(DensityMatrix.maximally_mixed(3), SIGMA["z"])


def test_no_sampled_decomposition_beats_the_leaf(rng: np.random.Generator) -> None:
    for seed, (rho, H) in enumerate(_random_problems(rng, 12, dims=(2, 3))):
        leaf = optimal_ensemble(rho, H)
        best = decomposition_variance_oracle(rho, H, samples=400, seed=seed)
        assert best >= average_variance(leaf, H) - 1e-9


@pytest.mark.slow
def test_no_sampled_decomposition_beats_the_leaf_large_sample(rng: np.random.Generator) -> None:
    for seed, (rho, H) in enumerate(_random_problems(rng, 50, dims=(2, 3, 4))):
        leaf = optimal_ensemble(rho, H)
        best = decomposition_variance_oracle(rho, H, samples=10_000, seed=seed)
        assert best >= average_variance(leaf, H) - 1e-9


def test_oracle_rejects_large_dimensions(rng: np.random.Generator) -> None:
    with pytest.raises(InvalidParameter):
        decomposition_variance_oracle(random_density(17, rng), random_hermitian(17, rng), samples=1, seed=0)


def test_qubit_leaves_match_the_chord_geometry(rng: np.random.Generator) -> None:
    for _ in range(100):
        direction = rng.standard_normal(3)
        r = direction / np.linalg.norm(direction) * rng.uniform(0.05, 0.95)
        rho = bloch_density(r)
        leaf = optimal_ensemble(rho, SIGMA["z"])

        transverse = math.hypot(r[0], r[1])
        n_hat = (r[0], r[1], math.sqrt(1.0 - transverse ** 2))
        geometry = qubit_leaf_geometry(n_hat)
        assert np.allclose(bloch_vector(leaf.state(0)), geometry.endpoint_minus, atol=1e-9)
        assert np.allclose(bloch_vector(leaf.state(1)), geometry.endpoint_plus, atol=1e-9)
        assert geometry.transverse_norm == pytest.approx(transverse)
        assert incoherence(leaf) == pytest.approx(geometry.barycenter_entropy, abs=1e-9)
        assert qfi(rho, SIGMA["z"]) == pytest.approx(4.0 * transverse ** 2, abs=1e-9)


def test_transverse_leaves_carry_the_largest_qfi(rng: np.random.Generator) -> None:
    ceiling = 4.0 * qubit_leaf_geometry((1.0, 0.0, 0.0)).transverse_norm ** 2
    values = []
    for _ in range(100):
        direction = rng.standard_normal(3)
        r = direction / np.linalg.norm(direction) * rng.uniform(0.05, 0.95)
        n_hat = (r[0], r[1], math.sqrt(1.0 - r[0] ** 2 - r[1] ** 2))
        transverse = qubit_leaf_geometry(n_hat).transverse_norm
        values.append((transverse, qfi(bloch_density(r), SIGMA["z"])))
    values.sort()
    fisher = np.array([f for _, f in values])
    assert np.all(np.diff(fisher) >= -1e-12)
    assert np.all(fisher < ceiling)
    assert ceiling == pytest.approx(4.0)

    # the leaf through (r, 0, 0) has |n x z| = r
    for radius in (0.9, 0.99, 0.999):
        assert qfi(bloch_density((radius, 0.0, 0.0)), SIGMA["z"]) == pytest.approx(ceiling * radius ** 2, abs=1e-9)


def test_incoherence_is_strictly_below_log_d_off_the_commuting_leaf(rng: np.random.Generator) -> None:
    for rho, H in _random_problems(rng, 40, dims=(2, 3, 4, 6, 8, 12)):
        leaf = optimal_ensemble(rho, H)
        assert nonorthogonality(leaf) > 1e-6
        value = incoherence(leaf)
        assert 0.0 <= value < math.log(leaf.dim)


def test_transport_commutes_with_evolution(rng: np.random.Generator) -> None:
    for rho, H in _random_problems(rng, 14, dims=(2, 3, 4, 6, 8, 12, 16)):
        leaf = optimal_ensemble(rho, H)
        spec = spectral_decompose(H)
        q = rng.dirichlet(np.ones(leaf.dim))
        for t in (0.3, 1.7, 5.0):
            moved = np.column_stack([evolve_pure(spec, psi, t).amplitudes for psi in leaf.pure_states])
            exact = evolve_density(spec, rho, t).matrix
            assert np.linalg.norm((moved * leaf.populations) @ moved.conj().T - exact) <= 1e-9
            transported = evolve_density(spec, leaf_transport(leaf, q), t).matrix
            assert np.linalg.norm((moved * q) @ moved.conj().T - transported) <= 1e-9


def test_qubit_geometry_rejects_non_unit_vectors() -> None:
    with pytest.raises(InvalidParameter):
        qubit_leaf_geometry((0.5, 0.0, 0.0))


def test_mixtures_on_one_leaf_keep_its_family(rng: np.random.Generator) -> None:
    for rho, H in _random_problems(rng, 12, dims=(3, 4, 6, 8)):
        leaf = optimal_ensemble(rho, H)
        d = leaf.dim
        rho1 = leaf_transport(leaf, rng.dirichlet(np.ones(d)))
        rho2 = leaf_transport(leaf, rng.dirichlet(np.ones(d)))
        w = rng.uniform(0.2, 0.8)
        mixed = DensityMatrix.from_matrix(w * rho1.matrix + (1 - w) * rho2.matrix)
        for target in (rho1, mixed):
            other = optimal_ensemble(target, H)
            _, overlaps = match_families(leaf.states, other.states)
            assert np.all(overlaps >= 1 - 1e-8)
            assert np.allclose(np.sort(leaf_fingerprint(other, H)), leaf_fingerprint(leaf, H), atol=1e-8)


def test_leaf_canonical_recovers_gibbs_on_the_commuting_leaf(rng: np.random.Generator) -> None:
    for d in (2, 4, 8, 16):
        H = random_hermitian(d, rng)
        leaf = optimal_ensemble(DensityMatrix.maximally_mixed(d), H)
        for beta in (-1.0, 0.0, 0.4, 2.5):
            expected = scipy.linalg.expm(-beta * H.matrix)
            expected /= np.trace(expected).real
            assert np.allclose(leaf_canonical(leaf, beta).matrix, expected, atol=1e-10)


def test_leaf_canonical_zero_beta_is_the_barycenter(rng: np.random.Generator) -> None:
    leaf = optimal_ensemble(random_density(5, rng), random_hermitian(5, rng))
    assert np.allclose(leaf_canonical(leaf, 0.0).matrix, barycenter(leaf).matrix)
    with pytest.raises(InvalidParameter):
        leaf_canonical(leaf, float("inf"))


def test_leaf_microcanonical_windows() -> None:
    leaf = commuting_leaf(HermitianOperator(np.diag([1.0, 2.0, 3.0, 4.0])))
    shell = leaf_microcanonical(leaf, (1.5, 3.5))
    assert np.allclose(shell.matrix, np.diag([0.0, 0.5, 0.5, 0.0]))
    assert np.allclose(leaf_microcanonical(leaf, (0.0, 10.0)).matrix, np.eye(4) / 4)
    with pytest.raises(EmptyShell):
        leaf_microcanonical(leaf, (5.0, 6.0))


def test_leaf_transport_validates_populations(rng: np.random.Generator) -> None:
    leaf = optimal_ensemble(random_density(3, rng), random_hermitian(3, rng))
    with pytest.raises(InvalidParameter):
        leaf_transport(leaf, [0.5, 0.5])
    with pytest.raises(InvalidParameter):
        leaf_transport(leaf, [0.5, -0.1, 0.6])
    with pytest.raises(InvalidParameter):
        leaf_transport(leaf, [0.0, 0.0, 0.0])
    # unnormalized weights are normalized
    assert leaf_transport(leaf, [2.0, 2.0, 4.0]).op.trace == pytest.approx(1.0)


def test_commuting_leaf_never_raises_on_degeneracy() -> None:
    leaf = commuting_leaf(HermitianOperator(np.diag([0.0, 1.0, 1.0, 3.0])))
    assert not leaf.unique
    assert np.allclose(leaf.populations, 0.25)
    assert leaf.source_energy == pytest.approx(1.25)
    assert leaf_gap(leaf) == pytest.approx(0.0)
    assert leaf_entropy(leaf) == pytest.approx(math.log(4))


def test_save_and_load_leaf(tmp_path: Path, rng: np.random.Generator) -> None:
    leaf = optimal_ensemble(random_density(4, rng), random_hermitian(4, rng))
    written = save_leaf(leaf, str(tmp_path / "leaf"))
    assert [Path(p).name for p in written] == ["leaf.json", "h_rho.qmat", "states.qmat"]
    loaded = load_leaf(str(tmp_path / "leaf"))
    assert np.array_equal(loaded.energies, leaf.energies)
    assert np.array_equal(loaded.states, leaf.states)
    assert loaded.source_energy == leaf.source_energy
    assert loaded.unique
