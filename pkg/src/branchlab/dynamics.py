"""Exact unitary operators on small acting subspaces, applied to sparse states.

Every operator carries a dense kernel on the subsystems it touches and acts as
the identity elsewhere.  Kernels are indexed row-major over the acting
subsystems in layout order, matching the composite index convention of
:class:`~branchlab.hilbert.SystemLayout`.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, LayoutMismatchError, SchemaError
from .hilbert import StateVector, SystemLayout, check_same_layout

__all__ = [
    "MAX_ACTING_DIMENSION",
    "UnitaryOp",
    "HamiltonianTerm",
    "Pipeline",
    "controlled_flip",
    "controlled_permutation",
    "local_unitary",
    "identity_op",
    "hamiltonian_evolution",
    "compose",
    "inverse",
    "apply",
]

MAX_ACTING_DIMENSION = 2**12
UNITARITY_TOL = 1e-12
HERMITICITY_TOL = 1e-12


def _local_strides(dims: Sequence[int]) -> list[int]:
    out = []
    acc = 1
    for d in reversed(dims):
        out.append(acc)
        acc *= d
    out.reverse()
    return out


def _reorder_kernel(
    kernel: np.ndarray, layout: SystemLayout, given: Sequence[str], target: Sequence[str]
) -> np.ndarray:
    """Embed ``kernel`` (indexed over ``given``) into ``target`` ⊇ ``given``.

    Subsystems in ``target`` missing from ``given`` get identity factors; the
    result is indexed row-major over ``target``.
    """
    given = list(given)
    rest = [n for n in target if n not in given]
    d_rest = math.prod(layout.dim(n) for n in rest)
    big = np.kron(kernel, np.eye(d_rest)) if rest else kernel
    order = given + rest
    dims = [layout.dim(n) for n in order]
    k = len(order)
    if k == 1:
        return np.array(big, dtype=complex)
    perm = [order.index(n) for n in target]
    tensor = big.reshape(dims + dims).transpose(perm + [k + p for p in perm])
    size = big.shape[0]
    return np.ascontiguousarray(tensor.reshape(size, size), dtype=complex)


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """Unitary acting on ``acting`` (layout order) and trivially elsewhere.

    ``provenance`` records how the kernel was obtained: ``"flip"``,
    ``"permutation"``, ``"exp"``, ``"composition"``, ``"dense"`` or
    ``"identity"``.
    """

    layout: SystemLayout
    acting: tuple[str, ...]
    kernel: np.ndarray
    provenance: str
    name: str = ""
    max_acting_dimension: int = MAX_ACTING_DIMENSION

    _offsets: tuple[int, ...] = field(init=False, repr=False)
    _perm: tuple[int, ...] | None = field(init=False, repr=False)

    def __post_init__(self):
        layout = self.layout
        acting = tuple(self.acting)
        if not acting:
            raise SchemaError("operator must act on at least one subsystem")
        if acting != layout.in_layout_order(acting):
            raise SchemaError(f"acting subsystems {acting} not in layout order")
        dim = layout.sub_dimension(acting)
        if dim > self.max_acting_dimension:
            raise CapacityError(
                f"acting dimension {dim} exceeds cap {self.max_acting_dimension}"
            )
        kernel = np.array(self.kernel, dtype=complex)
        if kernel.shape != (dim, dim):
            raise SchemaError(f"kernel shape {kernel.shape} does not match acting dimension {dim}")
        perm = None
        if np.all((kernel == 0) | (kernel == 1)):
            # a 0/1 matrix is unitary iff it is a permutation: one unit entry per row and column
            real = kernel.real
            if not (np.all(real.sum(axis=0) == 1) and np.all(real.sum(axis=1) == 1)):
                raise SchemaError("0/1 kernel is not a permutation matrix")
            perm = tuple(int(r) for r in np.argmax(real, axis=0))
        else:
            err = np.max(np.abs(kernel.conj().T @ kernel - np.eye(dim)))
            if err > UNITARITY_TOL:
                raise SchemaError(f"kernel is not unitary (max |K†K - I| = {err:.3e})")
        kernel.setflags(write=False)

        dims = [layout.dim(n) for n in acting]
        strides = [layout.stride(n) for n in acting]
        lstr = _local_strides(dims)
        offsets = []
        for local in range(dim):
            offsets.append(sum(((local // ls) % d) * s for ls, d, s in zip(lstr, dims, strides)))

        set_ = object.__setattr__
        set_(self, "acting", acting)
        set_(self, "kernel", kernel)
        set_(self, "_offsets", tuple(offsets))
        set_(self, "_perm", perm)

    @property
    def dimension(self) -> int:
        return self.kernel.shape[0]

    @property
    def is_permutation(self) -> bool:
        return self._perm is not None

    def unitarity_error(self) -> float:
        k = self.kernel
        return float(np.max(np.abs(k.conj().T @ k - np.eye(k.shape[0]))))

    def promoted(self, acting: Sequence[str]) -> np.ndarray:
        """Kernel embedded in a larger acting set (identity on the extra factors)."""
        target = self.layout.in_layout_order(acting)
        if not set(self.acting) <= set(target):
            raise SchemaError("promotion target must contain the acting subsystems")
        return _reorder_kernel(self.kernel, self.layout, self.acting, target)


Pipeline = UnitaryOp | Sequence[UnitaryOp]


@dataclass(frozen=True)
class HamiltonianTerm:
    """Hermitian ``coupling * kernel`` on ``acting`` (ħ = 1)."""

    layout: SystemLayout
    acting: tuple[str, ...]
    kernel: np.ndarray
    coupling: float = 1.0

    def __post_init__(self):
        acting = tuple(self.acting)
        dim = self.layout.sub_dimension(acting)
        kernel = np.array(self.kernel, dtype=complex)
        if kernel.shape != (dim, dim):
            raise SchemaError(f"Hamiltonian shape {kernel.shape} does not match dimension {dim}")
        err = float(np.max(np.abs(kernel - kernel.conj().T)))
        if err > HERMITICITY_TOL:
            raise SchemaError(f"Hamiltonian kernel is not Hermitian (max deviation {err:.3e})")
        if not math.isfinite(self.coupling):
            raise SchemaError("coupling must be finite")
        ordered = self.layout.in_layout_order(acting)
        if ordered != acting:
            kernel = _reorder_kernel(kernel, self.layout, acting, ordered)
        kernel.setflags(write=False)
        object.__setattr__(self, "acting", ordered)
        object.__setattr__(self, "kernel", kernel)


def _normalize_acting(layout: SystemLayout, names: Sequence[str]) -> tuple[str, ...]:
    for n in names:
        layout.position(n)
    return layout.in_layout_order(names)


def local_unitary(
    layout: SystemLayout,
    acting: Sequence[str],
    matrix: np.ndarray,
    *,
    provenance: str = "dense",
    name: str = "",
    max_acting_dimension: int = MAX_ACTING_DIMENSION,
) -> UnitaryOp:
    """Wrap a dense unitary indexed row-major over ``acting`` in the given order."""
    acting = tuple(acting)
    ordered = _normalize_acting(layout, acting)
    matrix = np.asarray(matrix, dtype=complex)
    if ordered != acting:
        matrix = _reorder_kernel(matrix, layout, acting, ordered)
    return UnitaryOp(layout, ordered, matrix, provenance, name, max_acting_dimension)


def identity_op(layout: SystemLayout, acting: Sequence[str]) -> UnitaryOp:
    acting = _normalize_acting(layout, acting)
    return UnitaryOp(layout, acting, np.eye(layout.sub_dimension(acting)), "identity")


def controlled_permutation(
    layout: SystemLayout,
    controls: Sequence[str],
    target: str,
    rules: Mapping[tuple[str, ...], Iterable[tuple[str, str]]],
    *,
    name: str = "",
) -> UnitaryOp:
    """Swap pairs of ``target`` labels, chosen by the joint label of ``controls``.

    ``rules`` maps a tuple of control labels (in the order of ``controls``) to
    disjoint label transpositions on ``target``.  Control tuples without a rule
    leave the target untouched, so the result is always a permutation.
    """
    controls = tuple(controls)
    if not controls:
        raise SchemaError("controlled permutation needs at least one control")
    if target in controls:
        raise SchemaError("control and target must be different subsystems")
    if len(set(controls)) != len(controls):
        raise SchemaError(f"repeated control subsystem in {controls}")
    given = controls + (target,)
    dims = [layout.dim(n) for n in given]
    lstr = _local_strides(dims)
    size = math.prod(dims)
    perm = np.arange(size)
    for ctrl_labels, swaps in rules.items():
        ctrl_labels = tuple(ctrl_labels)
        if len(ctrl_labels) != len(controls):
            raise SchemaError(f"rule key {ctrl_labels} does not match controls {controls}")
        base = sum(layout.ordinal(c, lab) * ls for c, lab, ls in zip(controls, ctrl_labels, lstr))
        touched: set[int] = set()
        for a, b in swaps:
            oa, ob = layout.ordinal(target, a), layout.ordinal(target, b)
            if oa == ob:
                raise SchemaError(f"swap ({a!r}, {b!r}) must use two different labels")
            if oa in touched or ob in touched:
                raise SchemaError(f"overlapping swaps on target {target!r} for {ctrl_labels}")
            touched.update((oa, ob))
            perm[base + oa], perm[base + ob] = base + ob, base + oa
    kernel = np.zeros((size, size))
    kernel[perm, np.arange(size)] = 1.0
    return local_unitary(layout, given, kernel, provenance="permutation", name=name)


def controlled_flip(
    layout: SystemLayout,
    control: str,
    control_labels: Iterable[str],
    target: str,
    from_label: str,
    to_label: str,
    *,
    name: str = "",
) -> UnitaryOp:
    """Swap ``from_label`` and ``to_label`` of ``target`` when ``control`` is in ``control_labels``.

    Self-inverse; identity for every other control label.
    """
    if control == target:
        raise SchemaError("control and target must be different subsystems")
    if from_label == to_label:
        raise SchemaError("from_label and to_label must differ")
    layout.ordinal(target, from_label)
    layout.ordinal(target, to_label)
    rules = {}
    for lab in control_labels:
        layout.ordinal(control, lab)
        rules[(lab,)] = [(from_label, to_label)]
    op = controlled_permutation(layout, [control], target, rules, name=name)
    return UnitaryOp(layout, op.acting, op.kernel, "flip", name)


def hamiltonian_evolution(term: HamiltonianTerm, t: float, *, name: str = "") -> UnitaryOp:
    """``exp(-i g t H)`` via a Hermitian eigendecomposition of the kernel."""
    if not math.isfinite(t):
        raise SchemaError("evolution time must be finite")
    dim = term.kernel.shape[0]
    if dim > MAX_ACTING_DIMENSION:
        raise CapacityError(f"acting dimension {dim} exceeds cap {MAX_ACTING_DIMENSION}")
    herm = 0.5 * (term.kernel + term.kernel.conj().T)
    evals, evecs = np.linalg.eigh(herm)
    phases = np.exp(-1j * term.coupling * t * evals)
    kernel = (evecs * phases) @ evecs.conj().T
    return UnitaryOp(term.layout, term.acting, kernel, "exp", name)


def compose(first: UnitaryOp, second: UnitaryOp, *, name: str = "") -> UnitaryOp:
    """Operator for ``second ∘ first`` on the union of their acting subsystems."""
    check_same_layout(first.layout, second.layout)
    layout = first.layout
    union = layout.in_layout_order(set(first.acting) | set(second.acting))
    dim = layout.sub_dimension(union)
    if dim > MAX_ACTING_DIMENSION:
        raise CapacityError(f"composed acting dimension {dim} exceeds cap {MAX_ACTING_DIMENSION}")
    kernel = second.promoted(union) @ first.promoted(union)
    return UnitaryOp(layout, union, kernel, "composition", name)


def inverse(op: UnitaryOp) -> UnitaryOp:
    return UnitaryOp(
        op.layout, op.acting, op.kernel.conj().T, op.provenance, f"inverse({op.name})" if op.name else ""
    )


def _apply_one(op: UnitaryOp, state: StateVector) -> StateVector:
    check_same_layout(op.layout, state.layout)
    offsets = op._offsets
    layout = op.layout
    dims = [layout.dim(n) for n in op.acting]
    strides = [layout.stride(n) for n in op.acting]
    lstr = _local_strides(dims)

    if op._perm is not None:
        perm = op._perm
        out = {}
        for idx, amp in state.items():
            local = 0
            for s, d, ls in zip(strides, dims, lstr):
                local += ((idx // s) % d) * ls
            out[idx - offsets[local] + offsets[perm[local]]] = amp
        return StateVector(
            layout, out, prune_threshold=state.prune_threshold, pruned_mass=state.pruned_mass
        )

    groups: dict[int, int] = {}
    rests: list[int] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for idx, amp in state.items():
        local = 0
        for s, d, ls in zip(strides, dims, lstr):
            local += ((idx // s) % d) * ls
        rest = idx - offsets[local]
        g = groups.get(rest)
        if g is None:
            g = groups[rest] = len(rests)
            rests.append(rest)
        rows.append(local)
        cols.append(g)
        vals.append(amp)
    if not vals:
        return StateVector(layout, {}, prune_threshold=state.prune_threshold, pruned_mass=state.pruned_mass)
    # only kernel columns that are actually populated take part in the product
    used = sorted(set(rows))
    col_of = {c: k for k, c in enumerate(used)}
    block = np.zeros((len(used), len(rests)), dtype=complex)
    block[[col_of[r] for r in rows], cols] = vals
    result = op.kernel[:, used] @ block
    nz_local, nz_group = np.nonzero(result)
    out = {
        rests[g] + offsets[loc]: complex(result[loc, g])
        for loc, g in zip(nz_local.tolist(), nz_group.tolist())
    }
    return StateVector(
        layout, out, prune_threshold=state.prune_threshold, pruned_mass=state.pruned_mass
    )


def apply(op: Pipeline, state: StateVector) -> StateVector:
    """Apply an operator, or a sequence of operators in order, to ``state``."""
    if isinstance(op, UnitaryOp):
        return _apply_one(op, state)
    for step in op:
        if not isinstance(step, UnitaryOp):
            raise LayoutMismatchError(f"pipeline entries must be UnitaryOp, got {type(step).__name__}")
        state = _apply_one(step, state)
    return state
