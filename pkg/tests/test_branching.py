import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab.branching import (
    branch_overlap_matrix,
    conditional_state,
    decompose,
    perception_matrix,
    project,
    record_support,
    verify_isolation,
)
from branchlab.dynamics import apply, identity_op, local_unitary
from branchlab.errors import EmptyConditionalError, PreconditionError, SchemaError
from branchlab.experiments import build, parse_config
from branchlab.hilbert import StateVector, basis_state, inner_product, make_layout, superpose


def _measured(a=(0.6, 0.8)):
    setup = build(parse_config("stern-gerlach", {"amplitudes": [[z.real, z.imag] for z in map(complex, a)]}))
    return setup, apply(setup.pipeline, setup.initial)


def _random_unitary(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- decomposition -------------------------------------------------------------

def test_measured_state_has_two_branches():
    setup, final = _measured()
    branches = decompose(final, ["Obs"])
    assert [b.record["Obs"] for b in branches] == ["yes,no", "no,yes"]
    assert [b.norm2 for b in branches] == pytest.approx([0.36, 0.64], abs=1e-12)
    assert all(abs(b.state.norm2() - 1) <= 1e-12 for b in branches)


def test_branches_reconstruct_the_state():
    _, final = _measured((0.6, 0.8j))
    branches = decompose(final, ["Obs"])
    rebuilt = superpose([(b.weight, b.state) for b in branches])
    assert abs(inner_product(rebuilt, final) - 1) <= 1e-12


def test_basis_state_is_one_branch():
    layout = make_layout([("a", 2), ("r", 3)])
    s = basis_state(layout, {"a": "1", "r": "2"})
    (b,) = decompose(s, ["r"])
    assert abs(b.weight) == 1.0


def test_zero_state_has_no_branches():
    layout = make_layout([("a", 2)])
    assert decompose(StateVector(layout), ["a"]) == []


def test_phase_is_taken_from_the_leading_amplitude():
    layout = make_layout([("a", 2), ("r", 2)])
    s = StateVector(layout, {0: 0.6j, 3: -0.8})
    b0, b1 = decompose(s, ["r"])
    assert b0.phase == pytest.approx(math.pi / 2)
    assert b1.phase == pytest.approx(math.pi)
    assert b0.state[0] == pytest.approx(1.0)


# -- projection ------------------------------------------------------------------

def test_condition_on_first_record_gives_minus_branch():
    _, final = _measured()
    cond = conditional_state(final, {"Obs": "yes,no"})
    labels = {final.layout.label_at(i, "spin") for i in cond.support}
    assert labels == {"-"}
    assert abs(cond.norm2() - 1) <= 1e-12


def test_condition_covering_support_is_identity():
    _, final = _measured()
    cond = conditional_state(final, {"Obs": "yes,no", "Det+": "no"})
    assert cond.support == project(final, {"Obs": "yes,no"}).support
    layout = make_layout([("a", 2), ("b", 2)])
    s = StateVector(layout, {0: 0.6, 1: 0.8})
    assert conditional_state(s, {"a": "0"}).amplitudes == s.amplitudes


def test_empty_conditional():
    _, final = _measured((1, 0))
    with pytest.raises(EmptyConditionalError):
        conditional_state(final, {"Obs": "no,yes"})


# -- isolation ----------------------------------------------------------------------

def test_measurement_protocol_isolates_versions():
    setup, _ = _measured()
    rep = verify_isolation(setup.isolation_protocol, *setup.versions, amplitude_samples=100, seed=0,
                           record_subsystems=setup.records)
    assert rep.samples == 100
    assert rep.max_field() <= 1e-12


def test_identity_protocol_isolation_is_trivial():
    layout = make_layout([("a", 3)])
    v = [basis_state(layout, {"a": str(k)}) for k in range(3)]
    rep = verify_isolation(identity_op(layout, ["a"]), *v, amplitude_samples=20)
    assert rep.max_field() <= 1e-15
    assert rep.versions == 3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), samples=st.integers(1, 30))
def test_any_unitary_has_no_cross_talk(seed, samples):
    rng = np.random.default_rng(seed)
    layout = make_layout([("a", 2), ("b", 3)])
    op = local_unitary(layout, ["a", "b"], _random_unitary(rng, 6))
    basis = _random_unitary(rng, 6)
    v1 = StateVector.from_dense(layout, basis[:, 0], prune_threshold=0.0)
    v2 = StateVector.from_dense(layout, basis[:, 1], prune_threshold=0.0)
    rep = verify_isolation(op, v1, v2, amplitude_samples=samples, seed=seed)
    assert rep.cross_talk <= 1e-11
    assert rep.linearity_residual <= 1e-12


def test_isolation_preconditions():
    layout = make_layout([("a", 2)])
    v = basis_state(layout, {"a": "0"})
    with pytest.raises(PreconditionError):
        verify_isolation(identity_op(layout, ["a"]), v, v)
    with pytest.raises(PreconditionError):
        verify_isolation(identity_op(layout, ["a"]), v, v.scaled(2.0))


def test_isolation_detects_cross_talk():
    # a record-dependent rotation on the other version's record breaks isolation
    layout = make_layout([("p", 2), ("r", 2)])
    v1 = basis_state(layout, {"p": "0", "r": "0"})
    v2 = basis_state(layout, {"p": "1", "r": "1"})
    mix = np.kron(np.eye(2), np.array([[1, 1], [1, -1]]) / math.sqrt(2))
    rep = verify_isolation(local_unitary(layout, ["p", "r"], mix), v1, v2, amplitude_samples=5,
                           record_subsystems=["r"])
    assert rep.branch_fidelity_deviation > 1e-3


# -- record support ---------------------------------------------------------------

def test_observer_support_after_measurement():
    _, final = _measured()
    rep = record_support(final, "Obs", ["yes,no", "no,yes"])
    assert rep.reduced_rank == 2
    assert rep.leakage <= 1e-12


def test_observer_support_before_measurement():
    setup, _ = _measured()
    rep = record_support(setup.initial, "Obs", ["blank"])
    assert rep.reduced_rank == 1
    assert rep.leakage == 0


def test_single_outcome_has_rank_one():
    _, final = _measured((1, 0))
    assert record_support(final, "Obs", ["yes,no", "no,yes"]).reduced_rank == 1


def test_leakage_counts_unexpected_records():
    _, final = _measured()
    assert record_support(final, "Obs", ["yes,no"]).leakage == pytest.approx(0.64, abs=1e-12)


def test_support_unknown_label():
    _, final = _measured()
    with pytest.raises(SchemaError):
        record_support(final, "Obs", ["maybe"])


# -- perception and overlaps ------------------------------------------------------------

def test_perception_is_identity():
    setup, final = _measured((0.6, 0.8))
    branches = decompose(final, ["Obs"])
    m = perception_matrix(branches, setup.outcomes, setup.record_map)
    assert np.max(np.abs(m - np.eye(2))) <= 1e-12


def test_perception_single_branch():
    setup, final = _measured((1, 0))
    branches = decompose(final, ["Obs"])
    assert perception_matrix(branches, setup.outcomes, setup.record_map).tolist() == [[1.0]]


def test_perception_unmapped_record():
    setup, final = _measured()
    with pytest.raises(SchemaError):
        perception_matrix(decompose(final, ["Obs"]), setup.outcomes, {"yes,no": "-"})


def test_overlap_matrix():
    _, final = _measured()
    assert np.max(np.abs(branch_overlap_matrix(decompose(final, ["Obs"])) - np.eye(2))) <= 1e-12
    _, final = _measured((1, 0))
    assert branch_overlap_matrix(decompose(final, ["Obs"])).tolist() == [[1.0]]
