import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab.errors import CapacityError, LayoutMismatchError, SchemaError
from branchlab.hilbert import (
    StateVector,
    basis_state,
    inner_product,
    make_layout,
    partial_trace,
    reduced_spectrum,
    superpose,
)
from branchlab.oracles import dense_partial_trace

SPIN_LAYOUT = [("spin", ["-", "+"]), ("Det-", ["no", "yes"]), ("Det+", ["no", "yes"])]

dims_st = st.lists(st.integers(1, 5), min_size=1, max_size=5)


def _layout(dims):
    return make_layout([(f"s{k}", d) for k, d in enumerate(dims)])


def _random_state(layout, rng):
    vec = rng.standard_normal(layout.dimension) + 1j * rng.standard_normal(layout.dimension)
    return StateVector.from_dense(layout, vec / np.linalg.norm(vec), prune_threshold=0.0)


# -- layouts ---------------------------------------------------------------

def test_single_spin_dimension():
    assert make_layout([("spin", ["-", "+"])]).dimension == 2


@pytest.mark.parametrize("k", [1, 3, 4, 7])
def test_measurement_layout_dimension_is_8k(k):
    layout = make_layout(SPIN_LAYOUT + [("Obs", k)])
    assert layout.dimension == 8 * k


def test_duplicate_subsystem_name_rejected():
    with pytest.raises(SchemaError):
        make_layout([("a", ["x"]), ("a", ["y"])])


@pytest.mark.parametrize(
    "bad",
    [[], [("a", [])], [("a", ["x", "x"])], [("", 2)], [("a", ["x", ""])]],
)
def test_malformed_layouts_rejected(bad):
    with pytest.raises(SchemaError):
        make_layout(bad)


def test_capacity_cap():
    with pytest.raises(CapacityError):
        make_layout([("a", 2**10), ("b", 2**10)], max_dimension=2**16)
    assert make_layout([(f"q{k}", 8) for k in range(30)], max_dimension=None).dimension == 2**90


def test_first_subsystem_is_most_significant():
    layout = make_layout([("a", 3), ("b", 4)])
    assert layout.strides == (4, 1)
    assert layout.index({"a": "2", "b": "1"}) == 9


def test_unknown_label_rejected():
    layout = make_layout(SPIN_LAYOUT)
    with pytest.raises(SchemaError):
        layout.index({"spin": "up", "Det-": "no", "Det+": "no"})
    with pytest.raises(SchemaError):
        basis_state(layout, {"spin": "-", "Det-": "no"})


@settings(max_examples=60, deadline=None)
@given(dims=dims_st, data=st.data())
def test_index_labels_bijection(dims, data):
    layout = _layout(dims)
    idx = data.draw(st.integers(0, layout.dimension - 1))
    assert layout.index(layout.labels_of(idx)) == idx
    assert layout.index_of_ordinals(layout.ordinals_of(idx)) == idx


@settings(max_examples=30, deadline=None)
@given(dims=dims_st)
def test_every_index_decodes_uniquely(dims):
    layout = _layout(dims)
    seen = {tuple(layout.labels_of(i).values()) for i in range(layout.dimension)}
    assert len(seen) == layout.dimension


# -- states ----------------------------------------------------------------

def test_basis_state_norm_and_support():
    layout = make_layout(SPIN_LAYOUT + [("Obs", ["blank", "yes,no", "no,yes", "other"])])
    s = basis_state(layout, {"spin": "-", "Det-": "no", "Det+": "no", "Obs": "blank"})
    assert s.norm2() == 1.0
    assert len(s.support) == 1


def test_distinct_basis_states_orthogonal():
    layout = make_layout(SPIN_LAYOUT)
    a = basis_state(layout, {"spin": "-", "Det-": "no", "Det+": "no"})
    b = basis_state(layout, {"spin": "+", "Det-": "no", "Det+": "no"})
    assert inner_product(a, b) == 0


def test_superpose_weights():
    layout = make_layout(SPIN_LAYOUT)
    minus = basis_state(layout, {"spin": "-", "Det-": "no", "Det+": "no"})
    plus = basis_state(layout, {"spin": "+", "Det-": "no", "Det+": "no"})
    psi = superpose([(0.6, minus), (0.8, plus)])
    assert abs(psi.norm2() - 1.0) <= 1e-12
    assert inner_product(minus, psi) == pytest.approx(0.6, abs=1e-15)


def test_superpose_cancellation():
    layout = make_layout(SPIN_LAYOUT)
    psi = basis_state(layout, {"spin": "-", "Det-": "no", "Det+": "no"})
    out = superpose([(1, psi), (-1, psi)])
    assert out.support == ()
    assert out.norm() == 0.0


def test_superpose_layout_mismatch():
    a = basis_state(make_layout([("x", 2)]), {"x": "0"})
    b = basis_state(make_layout([("y", 2)]), {"y": "0"})
    with pytest.raises(LayoutMismatchError):
        superpose([(1, a), (1, b)])
    with pytest.raises(LayoutMismatchError):
        inner_product(a, b)


def test_pruning_tracks_lost_mass():
    layout = make_layout([("x", 3)])
    s = StateVector(layout, {0: 1.0, 1: 1e-15, 2: 1e-16})
    assert s.support == (0,)
    assert s.pruned_mass == pytest.approx(1e-30 + 1e-32, rel=1e-12)


def test_dense_round_trip():
    rng = np.random.default_rng(3)
    layout = make_layout([("a", 3), ("b", 2), ("c", 4)])
    s = _random_state(layout, rng)
    assert np.array_equal(StateVector.from_dense(layout, s.to_dense(), prune_threshold=0.0).to_dense(), s.to_dense())


@settings(max_examples=40, deadline=None)
@given(dims=dims_st, seed=st.integers(0, 2**32 - 1))
def test_inner_product_conjugate_symmetry_and_cauchy_schwarz(dims, seed):
    rng = np.random.default_rng(seed)
    layout = _layout(dims)
    a, b = _random_state(layout, rng), _random_state(layout, rng).scaled(1.7 - 0.3j)
    ab, ba = inner_product(a, b), inner_product(b, a)
    assert abs(ab - ba.conjugate()) <= 1e-12
    assert abs(ab) <= a.norm() * b.norm() + 1e-12
    assert abs(ab - np.vdot(a.to_dense(), b.to_dense())) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(dims=dims_st, seed=st.integers(0, 2**32 - 1))
def test_inner_product_linear_in_second_argument(dims, seed):
    rng = np.random.default_rng(seed)
    layout = _layout(dims)
    a, b, c = (_random_state(layout, rng) for _ in range(3))
    x, y = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    lhs = inner_product(a, superpose([(x, b), (y, c)]))
    rhs = x * inner_product(a, b) + y * inner_product(a, c)
    assert abs(lhs - rhs) <= 1e-12


# -- partial trace ---------------------------------------------------------

def test_product_state_reduces_to_pure_projector():
    layout = make_layout([("a", 2), ("b", 3)])
    keep = np.array([0.6, 0.8j])
    rest = np.array([1, 1, 1]) / math.sqrt(3)
    s = StateVector.from_dense(layout, np.kron(keep, rest))
    rho = partial_trace(s, ["a"])
    assert rho.rank() == 1
    assert np.max(np.abs(rho.entries - np.outer(keep, keep.conj()))) <= 1e-12


def test_bell_pair_reduces_to_maximally_mixed():
    layout = make_layout([("a", 2), ("b", 2)])
    s = StateVector.from_dense(layout, np.array([1, 0, 0, 1]) / math.sqrt(2))
    rho = partial_trace(s, ["a"])
    assert np.max(np.abs(rho.entries - np.diag([0.5, 0.5]))) <= 1e-15


def test_measured_state_observer_eigenvalues():
    obs = ["blank", "yes,no", "no,yes", "other"]
    layout = make_layout(SPIN_LAYOUT + [("Obs", obs)])
    b1 = basis_state(layout, {"spin": "-", "Det-": "yes", "Det+": "no", "Obs": "yes,no"})
    b2 = basis_state(layout, {"spin": "+", "Det-": "no", "Det+": "yes", "Obs": "no,yes"})
    psi = superpose([(0.6, b1), (0.8, b2)])
    rho = partial_trace(psi, ["Obs"])
    assert rho.rank() == 2
    assert np.allclose(sorted(rho.eigenvalues())[-2:], [0.36, 0.64], atol=1e-10, rtol=0)
    dense = dense_partial_trace(layout, psi.to_dense(), ["Obs"])
    assert np.max(np.abs(rho.entries - dense)) <= 1e-12


def test_partial_trace_unknown_subsystem():
    layout = make_layout([("a", 2)])
    with pytest.raises(SchemaError):
        partial_trace(basis_state(layout, {"a": "0"}), ["zz"])


@settings(max_examples=40, deadline=None)
@given(dims=st.lists(st.integers(1, 4), min_size=2, max_size=4), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_partial_trace_matches_dense_and_is_a_density_matrix(dims, seed, data):
    rng = np.random.default_rng(seed)
    layout = _layout(dims)
    names = list(layout.names)
    keep = data.draw(st.lists(st.sampled_from(names), min_size=1, max_size=len(names), unique=True))
    s = _random_state(layout, rng)
    rho = partial_trace(s, keep)
    assert np.max(np.abs(rho.entries - dense_partial_trace(layout, s.to_dense(), keep))) <= 1e-10
    assert abs(rho.trace() - 1.0) <= 1e-12
    assert rho.hermiticity_error() <= 1e-15
    assert np.min(rho.eigenvalues()) >= -1e-12


@settings(max_examples=40, deadline=None)
@given(
    dims=st.lists(st.integers(1, 4), min_size=2, max_size=4),
    seed=st.integers(0, 2**32 - 1),
    density=st.floats(0.05, 1.0),
    data=st.data(),
)
def test_blockwise_spectrum_matches_dense(dims, seed, density, data):
    rng = np.random.default_rng(seed)
    layout = _layout(dims)
    names = list(layout.names)
    keep = data.draw(st.lists(st.sampled_from(names), min_size=1, max_size=len(names), unique=True))
    vec = rng.standard_normal(layout.dimension) + 1j * rng.standard_normal(layout.dimension)
    vec[rng.random(layout.dimension) > density] = 0
    vec[0] = 1.0
    s = StateVector.from_dense(layout, vec / np.linalg.norm(vec), prune_threshold=0.0)
    spectrum = reduced_spectrum(s, keep)
    rho = partial_trace(s, keep)
    dense_evals = np.sort(rho.eigenvalues())
    got = np.concatenate([np.zeros(rho.dimension - len(spectrum.eigenvalues)), spectrum.eigenvalues])
    assert np.max(np.abs(got - dense_evals)) <= 1e-12
    assert spectrum.rank() == rho.rank()
    dense_pops = {k: v for k, v in rho.populations().items() if v > 0}
    assert set(spectrum.populations) == set(dense_pops)
    assert all(abs(spectrum.populations[k] - dense_pops[k]) <= 1e-12 for k in dense_pops)


def test_separated_records_form_one_block_each():
    layout = make_layout([("env", 3), ("rec", 3)])
    s = StateVector(layout, {0: 0.6, 4: 0.8j})
    spectrum = reduced_spectrum(s, ["rec"])
    assert spectrum.blocks == 2
    assert np.allclose(spectrum.eigenvalues, [0.36, 0.64], atol=1e-15)
