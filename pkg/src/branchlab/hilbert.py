"""Labeled tensor-product spaces and sparse state vectors.

A :class:`SystemLayout` is an ordered list of named subsystems, each with a
finite list of basis labels.  Composite basis states are addressed by a single
packed integer (row-major: the first subsystem is the most significant digit),
so a :class:`StateVector` is just a sorted mapping ``index -> amplitude``.

Indices are plain Python integers and may exceed 64 bits; measurement models
with many detector grains live in huge product spaces but only ever populate a
handful of basis states.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import CapacityError, LayoutMismatchError, SchemaError

__all__ = [
    "DEFAULT_MAX_DIMENSION",
    "DEFAULT_PRUNE_THRESHOLD",
    "MAX_DENSE_DIMENSION",
    "SystemLayout",
    "StateVector",
    "DensityMatrix",
    "make_layout",
    "basis_state",
    "superpose",
    "inner_product",
    "partial_trace",
    "ReducedSpectrum",
    "reduced_spectrum",
    "check_same_layout",
]

DEFAULT_MAX_DIMENSION = 2**24
DEFAULT_PRUNE_THRESHOLD = 1e-14
# largest dense matrix side this package will ever materialize
MAX_DENSE_DIMENSION = 2**12


@dataclass(frozen=True)
class SystemLayout:
    """Ordered named subsystems with labeled bases.

    Use :func:`make_layout` to build one; it validates names and labels.
    ``max_dimension=None`` disables the composite-dimension cap.
    """

    subsystems: tuple[tuple[str, tuple[str, ...]], ...]
    max_dimension: int | None = DEFAULT_MAX_DIMENSION

    names: tuple[str, ...] = field(init=False, repr=False, compare=False, hash=False)
    dims: tuple[int, ...] = field(init=False, repr=False, compare=False, hash=False)
    strides: tuple[int, ...] = field(init=False, repr=False, compare=False, hash=False)
    dimension: int = field(init=False, repr=False, compare=False, hash=False)
    _position: dict = field(init=False, repr=False, compare=False, hash=False)
    _ordinals: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        names = tuple(name for name, _ in self.subsystems)
        dims = tuple(len(labels) for _, labels in self.subsystems)
        strides = []
        acc = 1
        for d in reversed(dims):
            strides.append(acc)
            acc *= d
        set_ = object.__setattr__
        set_(self, "names", names)
        set_(self, "dims", dims)
        set_(self, "strides", tuple(reversed(strides)))
        set_(self, "dimension", acc)
        set_(self, "_position", {n: i for i, n in enumerate(names)})
        set_(
            self,
            "_ordinals",
            tuple({lab: k for k, lab in enumerate(labels)} for _, labels in self.subsystems),
        )

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._position

    def position(self, name: str) -> int:
        try:
            return self._position[name]
        except KeyError:
            raise SchemaError(f"unknown subsystem {name!r}") from None

    def labels(self, name: str) -> tuple[str, ...]:
        return self.subsystems[self.position(name)][1]

    def dim(self, name: str) -> int:
        return self.dims[self.position(name)]

    def stride(self, name: str) -> int:
        return self.strides[self.position(name)]

    def ordinal(self, name: str, label: str) -> int:
        pos = self.position(name)
        try:
            return self._ordinals[pos][label]
        except KeyError:
            raise SchemaError(f"unknown label {label!r} for subsystem {name!r}") from None

    def digit(self, index: int, name: str) -> int:
        """Ordinal of subsystem ``name`` inside composite ``index``."""
        pos = self.position(name)
        return (index // self.strides[pos]) % self.dims[pos]

    def label_at(self, index: int, name: str) -> str:
        pos = self.position(name)
        return self.subsystems[pos][1][(index // self.strides[pos]) % self.dims[pos]]

    def index(self, labels: Mapping[str, str]) -> int:
        """Composite index of a full label assignment."""
        missing = [n for n in self.names if n not in labels]
        extra = [n for n in labels if n not in self._position]
        if missing or extra:
            raise SchemaError(f"label assignment mismatch: missing={missing}, unknown={extra}")
        return sum(self.ordinal(n, labels[n]) * s for n, s in zip(self.names, self.strides))

    def index_of_ordinals(self, ordinals: Sequence[int]) -> int:
        return sum(o * s for o, s in zip(ordinals, self.strides))

    def ordinals_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dimension:
            raise SchemaError(f"index {index} outside [0, {self.dimension})")
        return tuple((index // s) % d for s, d in zip(self.strides, self.dims))

    def labels_of(self, index: int) -> dict[str, str]:
        ords = self.ordinals_of(index)
        return {n: labs[o] for (n, labs), o in zip(self.subsystems, ords)}

    def sub_dimension(self, names: Iterable[str]) -> int:
        out = 1
        for n in names:
            out *= self.dim(n)
        return out

    def in_layout_order(self, names: Iterable[str]) -> tuple[str, ...]:
        names = list(names)
        if len(set(names)) != len(names):
            raise SchemaError(f"repeated subsystem in {names}")
        return tuple(sorted(names, key=self.position))


def make_layout(
    subsystems: Sequence[tuple[str, Sequence[str] | int]],
    max_dimension: int | None = DEFAULT_MAX_DIMENSION,
) -> SystemLayout:
    """Validate and build a layout.

    Each entry is ``(name, labels)``; an integer ``k`` in place of the label
    list is shorthand for labels ``"0" .. "k-1"``.

    >>> make_layout([("spin", ["-", "+"]), ("det", 2)]).dimension
    4
    """
    if not subsystems:
        raise SchemaError("layout needs at least one subsystem")
    seen: set[str] = set()
    norm: list[tuple[str, tuple[str, ...]]] = []
    for entry in subsystems:
        try:
            name, labels = entry
        except (TypeError, ValueError):
            raise SchemaError(f"subsystem entry must be (name, labels), got {entry!r}") from None
        if not isinstance(name, str) or not name:
            raise SchemaError(f"subsystem name must be a nonempty string, got {name!r}")
        if name in seen:
            raise SchemaError(f"duplicate subsystem name {name!r}")
        seen.add(name)
        if isinstance(labels, (int, np.integer)) and not isinstance(labels, bool):
            labels = [str(k) for k in range(int(labels))]
        labels = tuple(labels)
        if not labels:
            raise SchemaError(f"subsystem {name!r} has no basis labels")
        if any(not isinstance(lab, str) or not lab for lab in labels):
            raise SchemaError(f"subsystem {name!r}: labels must be nonempty strings")
        if len(set(labels)) != len(labels):
            raise SchemaError(f"subsystem {name!r} has duplicate labels")
        norm.append((name, labels))
    layout = SystemLayout(tuple(norm), max_dimension)
    if max_dimension is not None and layout.dimension > max_dimension:
        raise CapacityError(
            f"composite dimension {layout.dimension} exceeds cap {max_dimension}"
        )
    return layout


def check_same_layout(a: SystemLayout, b: SystemLayout) -> None:
    if a is not b and a != b:
        raise LayoutMismatchError("operands live on different layouts")


class StateVector:
    """Sparse state: sorted mapping from composite index to complex amplitude.

    Amplitudes with modulus below ``prune_threshold`` are dropped on
    construction; their squared modulus is added to ``pruned_mass`` so numerical
    leakage stays visible.  Instances are treated as immutable.
    """

    __slots__ = ("layout", "_amps", "prune_threshold", "pruned_mass")

    def __init__(
        self,
        layout: SystemLayout,
        amplitudes: Mapping[int, complex] | Iterable[tuple[int, complex]] = (),
        *,
        prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
        pruned_mass: float = 0.0,
    ):
        items = amplitudes.items() if isinstance(amplitudes, Mapping) else amplitudes
        kept: dict[int, complex] = {}
        lost = 0.0
        dim = layout.dimension
        for idx, amp in sorted(items, key=lambda kv: kv[0]):
            idx = int(idx)
            if not 0 <= idx < dim:
                raise SchemaError(f"index {idx} outside [0, {dim})")
            amp = complex(amp)
            if abs(amp) < prune_threshold:
                lost += abs(amp) ** 2
            else:
                kept[idx] = amp
        self.layout = layout
        self._amps = kept
        self.prune_threshold = prune_threshold
        self.pruned_mass = pruned_mass + lost

    @classmethod
    def from_dense(cls, layout: SystemLayout, vector: np.ndarray, **kw) -> StateVector:
        vector = np.asarray(vector, dtype=complex).ravel()
        if vector.shape[0] != layout.dimension:
            raise SchemaError("dense vector length does not match layout dimension")
        nz = np.flatnonzero(vector)
        return cls(layout, zip(nz.tolist(), vector[nz].tolist()), **kw)

    @property
    def amplitudes(self) -> Mapping[int, complex]:
        return MappingProxyType(self._amps)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self._amps)

    def items(self):
        return self._amps.items()

    def __len__(self) -> int:
        return len(self._amps)

    def __getitem__(self, index: int) -> complex:
        return self._amps.get(index, 0j)

    def __repr__(self) -> str:
        return f"StateVector(support={len(self._amps)}, norm2={self.norm2():.12g})"

    def norm2(self) -> float:
        return float(sum(a.real * a.real + a.imag * a.imag for a in self._amps.values()))

    def norm(self) -> float:
        return self.norm2() ** 0.5

    def to_dense(self) -> np.ndarray:
        if self.layout.dimension > 2**22:
            raise CapacityError("refusing to densify a state with dimension > 2^22")
        out = np.zeros(self.layout.dimension, dtype=complex)
        for idx, amp in self._amps.items():
            out[idx] = amp
        return out

    def scaled(self, factor: complex) -> StateVector:
        factor = complex(factor)
        return StateVector(
            self.layout,
            ((i, factor * a) for i, a in self._amps.items()),
            prune_threshold=self.prune_threshold,
            pruned_mass=abs(factor) ** 2 * self.pruned_mass,
        )

    def normalized(self) -> StateVector:
        n = self.norm()
        if n == 0.0:
            raise SchemaError("cannot normalize the zero state")
        return self.scaled(1.0 / n)

    def labels(self, index: int) -> dict[str, str]:
        return self.layout.labels_of(index)


def basis_state(layout: SystemLayout, labels: Mapping[str, str], **kw) -> StateVector:
    """Product basis state with amplitude 1 at the given label assignment."""
    return StateVector(layout, {layout.index(labels): 1.0 + 0j}, **kw)


def superpose(terms: Sequence[tuple[complex, StateVector]]) -> StateVector:
    """Complex linear combination of states on one layout (no normalization)."""
    terms = list(terms)
    if not terms:
        raise SchemaError("superpose needs at least one term")
    layout = terms[0][1].layout
    threshold = terms[0][1].prune_threshold
    acc: dict[int, complex] = {}
    carried = 0.0
    for coeff, state in terms:
        check_same_layout(layout, state.layout)
        coeff = complex(coeff)
        carried += abs(coeff) ** 2 * state.pruned_mass
        for idx, amp in state.items():
            acc[idx] = acc.get(idx, 0j) + coeff * amp
    return StateVector(layout, acc, prune_threshold=threshold, pruned_mass=carried)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``; summed in ascending index order."""
    check_same_layout(a.layout, b.layout)
    small, large = (a._amps, b._amps) if len(a) <= len(b) else (b._amps, a._amps)
    common = sorted(i for i in small if i in large)
    total = 0j
    for i in common:
        total += a._amps[i].conjugate() * b._amps[i]
    return total


@dataclass(frozen=True)
class DensityMatrix:
    """Dense reduced density matrix on the kept subsystems.

    Rows and columns run row-major over ``subsystems`` in the order they were
    requested, so ``labels[k]`` is the label tuple of basis row ``k``.
    """

    subsystems: tuple[str, ...]
    labels: tuple[tuple[str, ...], ...]
    entries: np.ndarray

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def rank(self, tol: float = 1e-10) -> int:
        return int(np.count_nonzero(self.eigenvalues() > tol))

    def populations(self) -> dict[tuple[str, ...], float]:
        diag = np.real(np.diag(self.entries))
        return {lab: float(p) for lab, p in zip(self.labels, diag)}

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))


def partial_trace(state: StateVector, keep: Sequence[str]) -> DensityMatrix:
    """Reduced density matrix ``Tr_rest |psi><psi|`` on ``keep``."""
    layout = state.layout
    keep = tuple(keep)
    if not keep:
        raise SchemaError("partial_trace needs at least one kept subsystem")
    if len(set(keep)) != len(keep):
        raise SchemaError(f"repeated subsystem in keep={keep}")
    positions = [layout.position(n) for n in keep]
    dims = [layout.dims[p] for p in positions]
    strides = [layout.strides[p] for p in positions]
    kdim = int(np.prod(dims))
    if kdim > MAX_DENSE_DIMENSION:
        raise CapacityError(f"kept dimension {kdim} exceeds dense cap {MAX_DENSE_DIMENSION}")
    local_strides = []
    acc = 1
    for d in reversed(dims):
        local_strides.append(acc)
        acc *= d
    local_strides.reverse()

    groups: dict[int, int] = {}
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for idx, amp in state.items():
        local = 0
        offset = 0
        for s, d, ls in zip(strides, dims, local_strides):
            o = (idx // s) % d
            local += o * ls
            offset += o * s
        g = groups.setdefault(idx - offset, len(groups))
        rows.append(local)
        cols.append(g)
        vals.append(amp)
    mat = np.zeros((kdim, max(len(groups), 1)), dtype=complex)
    if vals:
        mat[rows, cols] = vals
    rho = mat @ mat.conj().T

    all_labels = []
    for k in range(kdim):
        rem = k
        tup = []
        for name, d, ls in zip(keep, dims, local_strides):
            tup.append(layout.labels(name)[(rem // ls) % d])
        all_labels.append(tuple(tup))
    rho.setflags(write=False)
    return DensityMatrix(keep, tuple(all_labels), rho)


@dataclass(frozen=True)
class ReducedSpectrum:
    """Populations and eigenvalues of a reduced density matrix, restricted to
    the kept label tuples that actually occur in the state.

    Rows outside that set are identically zero, so nothing is lost; the
    missing eigenvalues are all exactly zero.
    """

    subsystems: tuple[str, ...]
    populations: dict[tuple[str, ...], float]
    eigenvalues: np.ndarray
    blocks: int

    def rank(self, tol: float = 1e-10) -> int:
        return int(np.count_nonzero(self.eigenvalues > tol))


def reduced_spectrum(state: StateVector, keep: Sequence[str]) -> ReducedSpectrum:
    """Spectrum of ``Tr_rest |psi><psi|`` without forming the full matrix.

    Kept label tuples that share some environment index are coupled; the
    reduced density matrix is block diagonal over the connected groups, so each
    block is diagonalized on its own.  Only the largest block is limited by
    the dense cap, which keeps well-separated records cheap however many
    subsystems are kept.
    """
    layout = state.layout
    keep = tuple(keep)
    if not keep:
        raise SchemaError("reduced_spectrum needs at least one kept subsystem")
    if len(set(keep)) != len(keep):
        raise SchemaError(f"repeated subsystem in keep={keep}")
    positions = [layout.position(n) for n in keep]

    entries: list[tuple[tuple[int, ...], int, complex]] = []
    parent: dict[tuple[int, ...], tuple[int, ...]] = {}
    owner: dict[int, tuple[int, ...]] = {}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for idx, amp in state.items():
        ords = tuple((idx // layout.strides[p]) % layout.dims[p] for p in positions)
        rest = idx - sum(o * layout.strides[p] for o, p in zip(ords, positions))
        parent.setdefault(ords, ords)
        entries.append((ords, rest, amp))
        if rest in owner:
            a, b = find(owner[rest]), find(ords)
            if a != b:
                parent[b] = a
        else:
            owner[rest] = ords

    blocks: dict[tuple[int, ...], tuple[dict, dict, list]] = {}
    for ords, rest, amp in entries:
        rows, cols, vals = blocks.setdefault(find(ords), ({}, {}, []))
        vals.append((rows.setdefault(ords, len(rows)), cols.setdefault(rest, len(cols)), amp))

    populations: dict[tuple[str, ...], float] = {}
    eigenvalues: list[float] = []
    for rows, cols, vals in blocks.values():
        mat = np.zeros((len(rows), len(cols)), dtype=complex)
        for r, c, a in vals:
            mat[r, c] = a
        for ords, r in rows.items():
            labels = tuple(layout.subsystems[p][1][o] for p, o in zip(positions, ords))
            populations[labels] = float(np.vdot(mat[r], mat[r]).real)
        small = min(mat.shape)
        if small > MAX_DENSE_DIMENSION:
            raise CapacityError(f"coupled block of size {small} exceeds dense cap {MAX_DENSE_DIMENSION}")
        gram = mat @ mat.conj().T if mat.shape[0] <= mat.shape[1] else mat.conj().T @ mat
        eigenvalues.extend(np.linalg.eigvalsh(gram).tolist())
        eigenvalues.extend([0.0] * (mat.shape[0] - small))
    return ReducedSpectrum(keep, populations, np.sort(np.array(eigenvalues)), len(blocks))
