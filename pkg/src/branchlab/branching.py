"""Branch decomposition against record subsystems, plus the diagnostics run on it.

A branch is the component of a state carrying one definite tuple of record
labels (detector readings, observer notes).  Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .dynamics import Pipeline, apply
from .errors import EmptyConditionalError, PreconditionError, SchemaError
from .hilbert import StateVector, check_same_layout, inner_product, reduced_spectrum

__all__ = [
    "RANK_TOL",
    "Branch",
    "IsolationReport",
    "SupportReport",
    "decompose",
    "project",
    "conditional_state",
    "verify_isolation",
    "record_support",
    "perception_matrix",
    "branch_overlap_matrix",
    "sample_unit_amplitudes",
]

RANK_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-12
EMPTY_WEIGHT = 1e-14


@dataclass(frozen=True)
class Branch:
    """One version of the composite system.

    ``weight * state`` is the projected component; ``state`` is normalized and
    ``weight`` carries both the norm and a global phase.
    """

    record: Mapping[str, str]
    weight: complex
    state: StateVector

    @property
    def norm2(self) -> float:
        return abs(self.weight) ** 2

    @property
    def phase(self) -> float:
        return math.atan2(self.weight.imag, self.weight.real)

    def record_key(self) -> str | tuple[str, ...]:
        labels = tuple(self.record.values())
        return labels[0] if len(labels) == 1 else labels


@dataclass(frozen=True)
class IsolationReport:
    linearity_residual: float
    branch_fidelity_deviation: float
    cross_talk: float
    samples: int
    versions: int

    def max_field(self) -> float:
        return max(self.linearity_residual, self.branch_fidelity_deviation, self.cross_talk)


@dataclass(frozen=True)
class SupportReport:
    reduced_rank: int
    leakage: float
    expected_records: tuple
    eigenvalues: tuple[float, ...]


def _phase_reference(amps: Sequence[complex]) -> complex:
    # first amplitude (ascending index) within rounding of the largest modulus
    mods = [abs(a) for a in amps]
    top = max(mods)
    for a, m in zip(amps, mods):
        if m >= top * (1 - 1e-9):
            return a / m
    raise AssertionError("unreachable")


def decompose(state: StateVector, record_subsystems: Sequence[str]) -> list[Branch]:
    """Split ``state`` into branches, one per realized record-label tuple.

    Branches come out sorted by the record's label ordinals.  The zero state
    yields an empty list.
    """
    record_subsystems = tuple(record_subsystems)
    if not record_subsystems:
        raise SchemaError("decompose needs at least one record subsystem")
    layout = state.layout
    positions = [layout.position(n) for n in record_subsystems]
    groups: dict[tuple[int, ...], list[tuple[int, complex]]] = {}
    for idx, amp in state.items():
        key = tuple((idx // layout.strides[p]) % layout.dims[p] for p in positions)
        groups.setdefault(key, []).append((idx, amp))
    branches = []
    for key in sorted(groups):
        items = groups[key]
        amps = [a for _, a in items]
        norm = math.sqrt(sum(abs(a) ** 2 for a in amps))
        if norm == 0.0:
            continue
        weight = norm * _phase_reference(amps)
        inv = 1.0 / weight
        branch_state = StateVector(
            layout, ((i, a * inv) for i, a in items), prune_threshold=state.prune_threshold
        )
        record = {n: layout.subsystems[p][1][o] for n, p, o in zip(record_subsystems, positions, key)}
        branches.append(Branch(record, weight, branch_state))
    return branches


def project(state: StateVector, constraints: Mapping[str, str]) -> StateVector:
    """Unnormalized projection onto fixed labels of some subsystems."""
    layout = state.layout
    checks = [
        (layout.strides[layout.position(n)], layout.dims[layout.position(n)], layout.ordinal(n, lab))
        for n, lab in constraints.items()
    ]
    kept = [
        (idx, amp)
        for idx, amp in state.items()
        if all((idx // s) % d == o for s, d, o in checks)
    ]
    return StateVector(layout, kept, prune_threshold=state.prune_threshold)


def conditional_state(state: StateVector, constraints: Mapping[str, str]) -> StateVector:
    """Project onto ``constraints`` and renormalize."""
    projected = project(state, constraints)
    w = projected.norm2()
    if w < EMPTY_WEIGHT:
        raise EmptyConditionalError(f"constraint {dict(constraints)} has weight {w:.3e}")
    return projected.scaled(1.0 / math.sqrt(w))


def _distance(a: StateVector, b: StateVector) -> float:
    total = 0.0
    for idx in sorted(set(a.amplitudes) | set(b.amplitudes)):
        total += abs(a[idx] - b[idx]) ** 2
    return math.sqrt(total)


def _restrict(state: StateVector, keep) -> StateVector:
    return StateVector(
        state.layout,
        ((i, a) for i, a in state.items() if keep(i)),
        prune_threshold=state.prune_threshold,
    )


def sample_unit_amplitudes(rng: np.random.Generator, k: int) -> np.ndarray:
    """Uniform draw from the unit sphere in C^k (normalized complex Gaussian)."""
    z = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return z / np.linalg.norm(z)


def verify_isolation(
    protocol: Pipeline,
    v1: StateVector,
    v2: StateVector,
    *more_versions: StateVector,
    amplitude_samples: int = 100,
    seed: int = 0,
    record_subsystems: Sequence[str] | None = None,
) -> IsolationReport:
    """Check that each version evolves as if the others were absent.

    For random amplitude vectors on the complex unit sphere, the protocol is
    applied to the superposition of the versions and compared against the
    versions evolved one at a time.  A branch is "conditioned out" of the
    evolved superposition by projecting onto the record labels (or, without
    ``record_subsystems``, the support) that its version produces alone.
    """
    versions = (v1, v2) + more_versions
    layout = v1.layout
    for v in versions:
        check_same_layout(layout, v.layout)
        if abs(v.norm2() - 1.0) > ORTHOGONALITY_TOL:
            raise PreconditionError(f"version is not normalized (norm2={v.norm2():.15g})")
    for i in range(len(versions)):
        for j in range(i + 1, len(versions)):
            if abs(inner_product(versions[i], versions[j])) > ORTHOGONALITY_TOL:
                raise PreconditionError(f"versions {i} and {j} are not orthogonal")

    evolved = [apply(protocol, v) for v in versions]
    alone = [e.normalized() for e in evolved]
    cross = 0.0
    for i in range(len(evolved)):
        for j in range(i + 1, len(evolved)):
            cross = max(cross, abs(inner_product(evolved[i], evolved[j])))

    if record_subsystems is not None:
        pos = [layout.position(n) for n in record_subsystems]

        def record_of(idx):
            return tuple((idx // layout.strides[p]) % layout.dims[p] for p in pos)

        selectors = []
        for e in evolved:
            realized = frozenset(record_of(i) for i in e.amplitudes)
            selectors.append(lambda idx, r=realized: record_of(idx) in r)
    else:
        selectors = [e.amplitudes.__contains__ for e in evolved]

    rng = np.random.default_rng(seed)
    residual = 0.0
    deviation = 0.0
    for _ in range(amplitude_samples):
        a = sample_unit_amplitudes(rng, len(versions))
        initial = _combine(a, versions)
        out = apply(protocol, initial)
        expected = _combine(a, evolved)
        residual = max(residual, _distance(out, expected))
        for k, keep in enumerate(selectors):
            cond = _restrict(out, keep)
            n2 = cond.norm2()
            if n2 == 0.0:
                deviation = max(deviation, 1.0)
                continue
            fid = abs(inner_product(alone[k], cond)) / math.sqrt(n2)
            deviation = max(deviation, max(0.0, 1.0 - fid))
    return IsolationReport(residual, deviation, cross, amplitude_samples, len(versions))


def _combine(coeffs, states):
    # a plain sum, kept free of pruning so the residual sees every bit of drift
    acc: dict[int, complex] = {}
    for c, s in zip(coeffs, states):
        c = complex(c)
        for idx, amp in s.items():
            acc[idx] = acc.get(idx, 0j) + c * amp
    return StateVector(states[0].layout, acc, prune_threshold=0.0)


def _as_tuple(record, width: int) -> tuple[str, ...]:
    if isinstance(record, str):
        record = (record,)
    record = tuple(record)
    if len(record) != width:
        raise SchemaError(f"record {record} does not match {width} record subsystem(s)")
    return record


def record_support(
    state: StateVector,
    observer: str | Sequence[str],
    expected_records: Sequence,
) -> SupportReport:
    """Where the observers' reduced density matrix puts its weight.

    ``leakage`` is the weight on observer label tuples outside
    ``expected_records``; ``reduced_rank`` counts eigenvalues above 1e-10.
    ``eigenvalues`` covers the label tuples present in the state (the reduced
    matrix vanishes elsewhere).
    """
    observers = (observer,) if isinstance(observer, str) else tuple(observer)
    layout = state.layout
    expected = []
    for rec in expected_records:
        rec = _as_tuple(rec, len(observers))
        for n, lab in zip(observers, rec):
            layout.ordinal(n, lab)
        expected.append(rec)
    spectrum = reduced_spectrum(state, observers)
    allowed = set(expected)
    leakage = sum(p for lab, p in spectrum.populations.items() if lab not in allowed)
    evals = spectrum.eigenvalues
    rank = int(np.count_nonzero(evals > RANK_TOL))
    shown = tuple(r[0] if len(observers) == 1 else r for r in expected)
    return SupportReport(rank, max(0.0, float(leakage)), shown, tuple(float(e) for e in evals))


def perception_matrix(
    branches: Sequence[Branch],
    outcome_subsystems: Sequence[str],
    record_map: Mapping,
) -> np.ndarray:
    """Within-branch weight of each expected outcome.

    Row ``i`` is branch ``i``; column ``j`` is the ``j``-th distinct outcome
    label tuple in branch order, where ``record_map`` sends a branch's record
    (a label, or a tuple of labels for several record subsystems) to the
    outcome labels it denotes.
    """
    outcome_subsystems = tuple(outcome_subsystems)
    if not branches:
        return np.zeros((0, 0))
    layout = branches[0].state.layout
    outcomes: list[tuple[str, ...]] = []
    for b in branches:
        key = b.record_key()
        if key not in record_map:
            raise SchemaError(f"record {key!r} has no entry in record_map")
        out = _as_tuple(record_map[key], len(outcome_subsystems))
        for n, lab in zip(outcome_subsystems, out):
            layout.ordinal(n, lab)
        if out not in outcomes:
            outcomes.append(out)
    col = {o: j for j, o in enumerate(outcomes)}
    pos = [layout.position(n) for n in outcome_subsystems]
    matrix = np.zeros((len(branches), len(outcomes)))
    for i, b in enumerate(branches):
        for idx, amp in b.state.items():
            lab = tuple(
                layout.subsystems[p][1][(idx // layout.strides[p]) % layout.dims[p]] for p in pos
            )
            j = col.get(lab)
            if j is not None:
                matrix[i, j] += abs(amp) ** 2
    return matrix


def branch_overlap_matrix(branches: Sequence[Branch]) -> np.ndarray:
    """Gram matrix ``<b_i|b_j>`` of the normalized branch states."""
    n = len(branches)
    gram = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            gram[i, j] = inner_product(branches[i].state, branches[j].state)
    return gram
