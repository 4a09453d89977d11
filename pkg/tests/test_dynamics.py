import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab.dynamics import (
    HamiltonianTerm,
    apply,
    compose,
    controlled_flip,
    controlled_permutation,
    hamiltonian_evolution,
    identity_op,
    inverse,
    local_unitary,
)
from branchlab.errors import CapacityError, LayoutMismatchError, SchemaError
from branchlab.hilbert import StateVector, basis_state, inner_product, make_layout
from branchlab.oracles import dense_apply, dense_operator

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _random_unitary(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _random_state(layout, rng):
    vec = rng.standard_normal(layout.dimension) + 1j * rng.standard_normal(layout.dimension)
    return StateVector.from_dense(layout, vec / np.linalg.norm(vec), prune_threshold=0.0)


@pytest.fixture
def spin_det():
    return make_layout([("spin", ["-", "+"]), ("Det-", ["no", "yes"])])


# -- construction ------------------------------------------------------------

def test_non_unitary_kernel_rejected():
    layout = make_layout([("a", 2)])
    with pytest.raises(SchemaError):
        local_unitary(layout, ["a"], np.array([[1, 0], [0, 1.001]]))


def test_kernel_shape_must_match_acting_dimension():
    layout = make_layout([("a", 2), ("b", 3)])
    with pytest.raises(SchemaError):
        local_unitary(layout, ["a", "b"], np.eye(4))


def test_acting_dimension_cap():
    layout = make_layout([("a", 64), ("b", 128)])
    with pytest.raises(CapacityError):
        identity_op(layout, ["a", "b"])


def test_non_hermitian_hamiltonian_rejected():
    layout = make_layout([("a", 2)])
    with pytest.raises(SchemaError):
        HamiltonianTerm(layout, ("a",), np.array([[0, 1], [0, 0]]))


# -- controlled flip ----------------------------------------------------------

def test_controlled_flip_records_spin(spin_det):
    flip = controlled_flip(spin_det, "spin", ["-"], "Det-", "no", "yes")
    out = apply(flip, basis_state(spin_det, {"spin": "-", "Det-": "no"}))
    assert out.amplitudes == {spin_det.index({"spin": "-", "Det-": "yes"}): 1}
    out = apply(flip, basis_state(spin_det, {"spin": "+", "Det-": "no"}))
    assert out.amplitudes == {spin_det.index({"spin": "+", "Det-": "no"}): 1}
    assert flip.is_permutation
    assert flip.provenance == "flip"


def test_controlled_flip_is_an_involution(spin_det):
    flip = controlled_flip(spin_det, "spin", ["-"], "Det-", "no", "yes")
    for idx in range(spin_det.dimension):
        s = StateVector(spin_det, {idx: 1.0})
        assert apply([flip, flip], s).amplitudes == s.amplitudes


def test_controlled_flip_rejects_control_equal_target(spin_det):
    with pytest.raises(SchemaError):
        controlled_flip(spin_det, "spin", ["-"], "spin", "-", "+")


def test_controlled_permutation_rejects_overlapping_swaps():
    layout = make_layout([("c", 2), ("t", 3)])
    with pytest.raises(SchemaError):
        controlled_permutation(layout, ["c"], "t", {("0",): [("0", "1"), ("1", "2")]})


def test_controlled_permutation_on_joint_controls():
    layout = make_layout([("a", 2), ("b", 2), ("t", 3)])
    op = controlled_permutation(layout, ["a", "b"], "t", {("1", "1"): [("0", "2")]})
    for a in "01":
        for b in "01":
            out = apply(op, basis_state(layout, {"a": a, "b": b, "t": "0"}))
            want = "2" if (a, b) == ("1", "1") else "0"
            assert out.amplitudes == {layout.index({"a": a, "b": b, "t": want}): 1}


# -- Hamiltonian evolution ------------------------------------------------------

def test_zero_time_is_identity(spin_det):
    term = HamiltonianTerm(spin_det, ("spin", "Det-"), np.kron(np.diag([1, 0]), SIGMA_X))
    op = hamiltonian_evolution(term, 0.0)
    assert np.max(np.abs(op.kernel - np.eye(4))) <= 1e-15


def test_quarter_period_gives_flip_with_phase(spin_det):
    # H = |-><-| (x) sigma_x; exp(-i (pi/2) sigma_x) = -i sigma_x on the flipped block
    term = HamiltonianTerm(spin_det, ("spin", "Det-"), np.kron(np.diag([1, 0]), SIGMA_X))
    op = hamiltonian_evolution(term, math.pi / 2)
    expected = np.zeros((4, 4), dtype=complex)
    expected[:2, :2] = -1j * SIGMA_X
    expected[2:, 2:] = np.eye(2)
    assert np.max(np.abs(op.kernel - expected)) <= 1e-12
    flip = controlled_flip(spin_det, "spin", ["-"], "Det-", "no", "yes")
    out = apply(op, basis_state(spin_det, {"spin": "-", "Det-": "no"}))
    ref = apply(flip, basis_state(spin_det, {"spin": "-", "Det-": "no"}))
    assert abs(inner_product(ref, out) - (-1j)) <= 1e-12


def test_coupling_scales_time():
    layout = make_layout([("a", 2)])
    a = hamiltonian_evolution(HamiltonianTerm(layout, ("a",), SIGMA_X, coupling=2.0), 0.3)
    b = hamiltonian_evolution(HamiltonianTerm(layout, ("a",), SIGMA_X), 0.6)
    assert np.max(np.abs(a.kernel - b.kernel)) <= 1e-14


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t1=st.floats(-5, 5), t2=st.floats(-5, 5))
def test_evolution_group_law(seed, t1, t2):
    rng = np.random.default_rng(seed)
    layout = make_layout([("a", 3), ("b", 2)])
    z = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    term = HamiltonianTerm(layout, ("a", "b"), z + z.conj().T)
    joint = compose(hamiltonian_evolution(term, t1), hamiltonian_evolution(term, t2))
    direct = hamiltonian_evolution(term, t1 + t2)
    assert np.max(np.abs(joint.kernel - direct.kernel)) <= 1e-10
    assert direct.unitarity_error() <= 1e-12


# -- compose / inverse / apply ------------------------------------------------

def test_compose_with_inverse_is_identity():
    rng = np.random.default_rng(1)
    layout = make_layout([("a", 2), ("b", 3), ("c", 2)])
    u = local_unitary(layout, ["c", "a"], _random_unitary(rng, 4))
    v = local_unitary(layout, ["b"], _random_unitary(rng, 3))
    w = compose(u, v)
    assert w.acting == ("a", "b", "c")
    assert np.max(np.abs(compose(w, inverse(w)).kernel - np.eye(12))) <= 1e-12


def test_compose_order_is_second_after_first():
    rng = np.random.default_rng(2)
    layout = make_layout([("a", 2), ("b", 2)])
    u = local_unitary(layout, ["a", "b"], _random_unitary(rng, 4))
    v = local_unitary(layout, ["b"], _random_unitary(rng, 2))
    s = _random_state(layout, rng)
    direct = apply(compose(u, v), s).to_dense()
    stepwise = apply([u, v], s).to_dense()
    assert np.max(np.abs(direct - stepwise)) <= 1e-12


def test_compose_union_cap():
    layout = make_layout([("a", 64), ("b", 128)])
    with pytest.raises(CapacityError):
        compose(identity_op(layout, ["a"]), identity_op(layout, ["b"]))


def test_identity_leaves_state_unchanged():
    rng = np.random.default_rng(4)
    layout = make_layout([("a", 3), ("b", 2)])
    s = _random_state(layout, rng)
    assert apply(identity_op(layout, ["b"]), s).amplitudes == s.amplitudes


def test_apply_layout_mismatch():
    a = make_layout([("a", 2)])
    b = make_layout([("b", 2)])
    with pytest.raises(LayoutMismatchError):
        apply(identity_op(a, ["a"]), basis_state(b, {"b": "0"}))


def test_acting_order_is_respected():
    layout = make_layout([("a", 2), ("b", 3)])
    rng = np.random.default_rng(5)
    m = _random_unitary(rng, 6)
    op = local_unitary(layout, ["b", "a"], m)
    # the same matrix written in layout order (a, b)
    reordered = m.reshape(3, 2, 3, 2).transpose(1, 0, 3, 2).reshape(6, 6)
    assert np.max(np.abs(dense_operator(op) - reordered)) <= 1e-15


@settings(max_examples=40, deadline=None)
@given(
    dims=st.lists(st.integers(1, 4), min_size=1, max_size=4),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_sparse_apply_matches_dense_and_preserves_inner_products(dims, seed, data):
    rng = np.random.default_rng(seed)
    layout = make_layout([(f"s{k}", d) for k, d in enumerate(dims)])
    names = list(layout.names)
    acting = data.draw(st.lists(st.sampled_from(names), min_size=1, max_size=len(names), unique=True))
    op = local_unitary(layout, acting, _random_unitary(rng, layout.sub_dimension(acting)))
    a, b = _random_state(layout, rng), _random_state(layout, rng)
    ua, ub = apply(op, a), apply(op, b)
    assert np.max(np.abs(ua.to_dense() - dense_apply(op, a.to_dense()))) <= 1e-12
    assert np.max(np.abs(ua.to_dense() - dense_operator(op) @ a.to_dense())) <= 1e-12
    assert abs(inner_product(ua, ub) - inner_product(a, b)) <= 1e-12
    assert abs(ua.norm2() - 1.0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_apply_is_linear(seed):
    rng = np.random.default_rng(seed)
    layout = make_layout([("a", 3), ("b", 2), ("c", 2)])
    op = local_unitary(layout, ["a", "c"], _random_unitary(rng, 6))
    a, b = _random_state(layout, rng), _random_state(layout, rng)
    x, y = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    combo = StateVector.from_dense(layout, x * a.to_dense() + y * b.to_dense(), prune_threshold=0.0)
    lhs = apply(op, combo).to_dense()
    rhs = x * apply(op, a).to_dense() + y * apply(op, b).to_dense()
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_apply_on_huge_sparse_layout():
    # composite index far beyond 64 bits; only the support is touched
    layout = make_layout([(f"q{k}", 4) for k in range(40)], max_dimension=None)
    s = basis_state(layout, {f"q{k}": "0" for k in range(40)})
    hadamard = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    op = local_unitary(layout, ["q39"], np.kron(hadamard, np.eye(2)))
    out = apply(op, s)
    assert len(out.support) == 2
    assert abs(out.norm2() - 1.0) <= 1e-15
