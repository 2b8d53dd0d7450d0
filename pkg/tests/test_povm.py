import itertools
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from app.helpers.Exceptions import DimensionMismatch, InvalidPovm
from app.models.Operator import HermitianMatrix
from app.models.Povm import FinitePovm, OutcomeVector
from app.schemas.Scenario import SearchBudget
from app.services.PovmService import PovmService
from tests.conftest import qubit_povm, seeds

PLUS = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
MINUS = np.eye(2) - PLUS


def sharp_povm() -> FinitePovm:
    return FinitePovm([PLUS, MINUS])


def test_contract_basics():
    povm = qubit_povm()
    assert povm.contract(np.ones(3)).allclose(HermitianMatrix.identity(2), atol=1e-12)
    assert np.allclose(povm.contract([1.0, 0.0, 0.0]).entries, povm.stack[0])
    trivial = FinitePovm.trivial(3, 4)
    assert trivial.contract([1, -1, 1, -1]).op_norm() == 0.0


def test_contract_length_mismatch():
    with pytest.raises(DimensionMismatch):
        qubit_povm().contract([1.0, 0.0])


def test_outcome_vector_must_stay_in_cube():
    with pytest.raises(ValueError):
        OutcomeVector([0.5, 1.5])
    assert OutcomeVector([1.0 + 1e-13, -1.0]).tolist() == [1.0, -1.0]


def test_invalid_povms_are_rejected():
    with pytest.raises(InvalidPovm):
        FinitePovm([np.eye(2), np.eye(2)])
    with pytest.raises(InvalidPovm):
        FinitePovm([np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])])
    with pytest.raises(InvalidPovm):
        FinitePovm.from_diagonals([[0.2, 0.2], [0.2, 0.8]])


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=5), st.integers(min_value=2, max_value=5))
def test_noise_operator_is_psd_and_matches_sandwich_form(povm_seed, dim, n):
    povm = PovmService.random_povm(dim, n, povm_seed)
    x = np.random.default_rng(povm_seed).uniform(-1.0, 1.0, size=n)
    delta = povm.noise_operator(x)
    assert delta.min_eigenvalue() >= -1e-9
    assert delta.allclose(povm.noise_operator_sandwich(x), atol=1e-9)


def test_noise_operator_examples():
    assert sharp_povm().noise_operator([0.3, -0.7]).op_norm() <= 1e-12
    trivial = FinitePovm.trivial(2, 4)
    assert trivial.noise_operator([1, 1, -1, -1]).allclose(HermitianMatrix.identity(2), atol=1e-12)
    assert qubit_povm().noise_operator(np.zeros(3)).op_norm() == 0.0


def test_diagonal_storage_agrees_with_dense():
    diag = np.array([[0.2, 0.9, 0.5], [0.8, 0.1, 0.5]])
    compact = FinitePovm.from_diagonals(diag)
    dense = FinitePovm([np.diag(d) for d in diag])
    x = [0.4, -0.9]
    assert compact.contract(x).allclose(dense.contract(x), atol=1e-14)
    assert compact.noise_operator(x).allclose(dense.noise_operator(x), atol=1e-14)
    assert compact.noise_norm(np.array(x)) == pytest.approx(dense.noise_norm(np.array(x)))
    assert compact.is_commutative() and dense.is_commutative()


def test_noise_magnitude_sharp_and_trivial(povm_service):
    value, _ = povm_service.noise_magnitude(sharp_povm())
    assert value <= 1e-12
    value, witness = povm_service.noise_magnitude(FinitePovm.trivial(3, 4))
    assert value == 1.0
    assert sorted(witness.tolist()) == [-1.0, -1.0, 1.0, 1.0]
    nu_q, _, _ = povm_service.noncommutativity(FinitePovm.trivial(3, 4))
    assert nu_q == 0.0


def test_noise_magnitude_of_a_half_valued_multiplication(povm_service):
    povm = FinitePovm.from_diagonals([[0.5, 1.0, 0.0], [0.5, 0.0, 1.0]])
    value, witness = povm_service.noise_magnitude(povm)
    assert value >= 0.25
    assert value == pytest.approx(povm.noise_norm(witness.values))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_noise_magnitude_is_a_unit_interval_lower_bound(seed):
    service = PovmService(workers=1)
    povm = service.random_povm(3, 3, seed)
    value, witness = service.noise_magnitude(povm, SearchBudget(starts=8, iterations=40))
    assert 0.0 <= value <= 1.0 + 1e-12
    assert value == pytest.approx(povm.noise_norm(witness.values))
    # every basis vector is a candidate, so the bound dominates them
    assert value >= max(povm.noise_norm(e) for e in np.eye(3)) - 1e-12


def test_noncommutativity_vanishes_for_commuting_povms(povm_service):
    assert povm_service.noncommutativity(FinitePovm.from_diagonals([[0.3, 1.0], [0.7, 0.0]]))[0] == 0.0
    assert povm_service.noncommutativity(FinitePovm([np.diag([0.3, 1.0]), np.diag([0.7, 0.0])]))[0] <= 1e-12
    assert povm_service.noncommutativity(sharp_povm())[0] <= 1e-12


def test_noncommutativity_matches_exhaustive_vertices(povm_service):
    povm = qubit_povm()
    brute = max(
        povm.commutator_norm(np.array(x), np.array(y))
        for x in itertools.product([-1.0, 1.0], repeat=3)
        for y in itertools.product([-1.0, 1.0], repeat=3)
    )
    value, x, y = povm_service.noncommutativity(povm)
    assert value == pytest.approx(brute, abs=1e-12)
    assert set(np.abs(x.values)) == {1.0} and set(np.abs(y.values)) == {1.0}
    assert value == pytest.approx(povm.contract(x).comm_norm(povm.contract(y)))


def test_noncommutativity_local_search_is_a_valid_lower_bound(povm_service):
    povm = povm_service.random_povm(3, 6, 11)
    budget = SearchBudget(exhaustive_cutoff=4, starts=6, iterations=20)
    heuristic, x, y = povm_service.noncommutativity(povm, budget)
    exact, _, _ = povm_service.noncommutativity(povm)
    assert 0.0 < heuristic <= exact + 1e-12
    assert heuristic == pytest.approx(povm.commutator_norm(x.values, y.values))


def test_single_outcome_povm_is_degenerate_but_valid(povm_service):
    povm = FinitePovm([np.eye(3)])
    assert povm_service.noise_magnitude(povm)[0] == 0.0
    assert povm_service.noncommutativity(povm)[0] == 0.0


def test_janssens_residual_examples(povm_service):
    assert povm_service.janssens_residual(sharp_povm(), [0.2, 1.0], [-1.0, 0.4]) == pytest.approx(0.0, abs=1e-12)
    povm = qubit_povm()
    x = [0.3, -0.8, 1.0]
    assert povm_service.janssens_residual(povm, x, x) == pytest.approx(povm.noise_norm(np.array(x)))


def test_janssens_fuzz_campaign(povm_service):
    worst = np.inf
    for case in range(1000):
        rng = np.random.default_rng(case)
        dim, n = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        povm = povm_service.random_povm(dim, n, case)
        x, y = rng.uniform(-1, 1, size=n), rng.uniform(-1, 1, size=n)
        worst = min(worst, povm_service.janssens_residual(povm, x, y))
    assert worst >= -1e-9


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_restricted_sup_noise_dominates_half_commutator(seed):
    povm = PovmService.random_povm(3, 4, seed)
    candidates = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(6, 4))
    sup = PovmService.restricted_sup(povm, candidates)
    assert sup["noise"] >= sup["half_commutator"] - 1e-9


def test_unsharp_povm_has_noise_at_distinct_values(povm_service):
    povm = povm_service.random_povm(3, 3, 5)
    assert not povm.is_projection_valued()
    assert povm.noise_operator([0.9, -0.1, 0.4]).op_norm() > 1e-6


def test_naimark_for_a_sharp_povm_is_exact(povm_service):
    povm = sharp_povm()
    dilation = povm_service.naimark_dilate(povm)
    for j, p in enumerate(dilation.projectors):
        assert np.allclose(dilation.compress(p).entries, povm.stack[j], atol=1e-12)


def test_naimark_invariants_on_random_povms(povm_service):
    worst = {}
    for case in range(200):
        rng = np.random.default_rng(case)
        povm = povm_service.random_povm(int(rng.integers(1, 6)), int(rng.integers(2, 5)), case)
        dilation = povm_service.naimark_dilate(povm)
        residuals = povm_service.naimark_residuals(povm, dilation, rng.uniform(-1, 1, size=povm.n))
        for key, value in residuals.items():
            worst[key] = max(worst.get(key, 0.0), value)
    for key in ("isometry", "idempotent", "hermitian", "completeness", "orthogonal"):
        assert worst[key] <= 1e-10, key
    for key in ("compression", "contraction", "noise"):
        assert worst[key] <= 1e-9, key


def test_random_povm_construction(povm_service):
    povm = povm_service.random_povm(2, 3, 42)
    assert np.max(np.abs(povm.stack.sum(axis=0) - np.eye(2))) <= 1e-10
    scalars = povm_service.random_povm(1, 2, 7)
    assert scalars.dim == 1 and np.all(scalars.stack.real >= 0)
    assert scalars.stack.sum() == pytest.approx(1.0)
    again = povm_service.random_povm(2, 3, 42)
    assert np.array_equal(povm.stack, again.stack)
    with pytest.raises(InvalidPovm):
        povm_service.random_povm(2, 1, 0)


def test_probabilities_and_variance_gap(povm_service):
    povm = povm_service.random_povm(3, 4, 3)
    xi = np.array([1.0, 1j, -0.5])
    p = povm.outcome_probabilities(xi)
    assert np.all(p >= -1e-12) and p.sum() == pytest.approx(1.0)
    x = [0.9, -0.3, 0.2, -1.0]
    unit = xi / np.linalg.norm(xi)
    expected = np.real(unit.conj() @ povm.noise_operator(x).entries @ unit)
    assert povm.variance_gap(x, xi) == pytest.approx(expected, abs=1e-12)


def test_povm_payload_round_trip():
    povm = qubit_povm()
    restored = FinitePovm.from_payload(povm.to_payload())
    assert np.allclose(restored.stack, povm.stack)
    with pytest.raises(InvalidPovm):
        FinitePovm.from_payload({"dim": 2, "N": 2, "elements": []})


def test_unsharpness_ratios_over_a_small_ensemble(povm_service):
    table = povm_service.unsharpness_ratios(6, (2, 3), (2, 3), seed=9, budget=SearchBudget(starts=4, iterations=30))
    assert len(table) == 6
    for entry in table:
        assert 2 <= entry["dim"] <= 3 and 2 <= entry["N"] <= 3
        if entry["ratio"] is not None:
            # the nu_q witnesses are vertices, which the noise search enumerates
            assert entry["ratio"] >= 0.5 - 1e-9
