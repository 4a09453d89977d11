"""Layouts, initial states and unitary pipelines for each measurement scenario.

Each ``build_*`` function returns a :class:`Setup`; :mod:`.runner` turns that
into a report.  Nothing here evolves states except where a builder needs a
derived input (the isolation versions for the Bell pipeline).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..dynamics import (
    HamiltonianTerm,
    UnitaryOp,
    apply,
    controlled_flip,
    controlled_permutation,
    hamiltonian_evolution,
    inverse,
    local_unitary,
)
from ..errors import SchemaError
from ..hilbert import StateVector, SystemLayout, basis_state, make_layout, superpose
from .config import ExperimentConfig

__all__ = [
    "Setup",
    "build",
    "slit_geometry",
    "SIGMA_Y",
]

SIGMA_Y = np.array([[0, -1j], [1j, 0]])


@dataclass
class Setup:
    """Everything needed to run and diagnose one scenario.

    ``isolation_protocol`` applied to each of ``versions`` must give states
    with disjoint record labels; it is the part of the pipeline after which
    the versions are defined (for most scenarios, the whole pipeline).
    """

    layout: SystemLayout
    initial: StateVector
    pipeline: tuple[UnitaryOp, ...]
    records: tuple[str, ...]
    expected_records: list
    outcomes: tuple[str, ...]
    record_map: dict
    isolation_protocol: tuple[UnitaryOp, ...]
    versions: tuple[StateVector, ...]
    extras: dict = field(default_factory=dict)


def _width(n: int) -> int:
    return len(str(max(n - 1, 0)))


def _state(layout: SystemLayout, ready: dict[str, str], **override) -> StateVector:
    return basis_state(layout, {**ready, **override})


def _weighted(amps: Sequence[complex], states: Sequence[StateVector]) -> StateVector:
    return superpose(list(zip(amps, states)))


# --- spin measurement with detectors and observers ---------------------------

SG_RECORDS = ("blank", "yes,no", "no,yes", "other1")
AGREE = "agree"


def _sg_core(cfg: ExperimentConfig, extra_subsystems=()):
    layout = make_layout(
        [("spin", ["-", "+"]), ("Det-", ["no", "yes"]), ("Det+", ["no", "yes"]), ("Obs", list(SG_RECORDS))]
        + list(extra_subsystems)
    )
    ready = {n: layout.labels(n)[0] for n in layout.names}
    v_minus = _state(layout, ready, spin="-")
    v_plus = _state(layout, ready, spin="+")
    ops = (
        controlled_flip(layout, "spin", ["-"], "Det-", "no", "yes", name="detect-"),
        controlled_flip(layout, "spin", ["+"], "Det+", "no", "yes", name="detect+"),
        controlled_permutation(
            layout,
            ["Det-", "Det+"],
            "Obs",
            {
                ("yes", "no"): [("blank", "yes,no")],
                ("no", "yes"): [("blank", "no,yes")],
                ("yes", "yes"): [("blank", "other1")],
            },
            name="observer-read",
        ),
    )
    return layout, ready, v_minus, v_plus, ops


def build_stern_gerlach(cfg: ExperimentConfig) -> Setup:
    layout, _, v_minus, v_plus, ops = _sg_core(cfg)
    a1, a2 = cfg.amplitude_vector()
    return Setup(
        layout=layout,
        initial=_weighted((a1, a2), (v_minus, v_plus)),
        pipeline=ops,
        records=("Obs",),
        expected_records=["yes,no", "no,yes"],
        outcomes=("spin",),
        record_map={"yes,no": "-", "no,yes": "+"},
        isolation_protocol=ops,
        versions=(v_minus, v_plus),
    )


def obs2_labels() -> list[str]:
    out = ["blank"]
    for rec in ("yes,no", "no,yes"):
        out += [f"{rec}|{AGREE}", f"{rec}|disagree"]
    return out + ["other"]


def build_two_observer(cfg: ExperimentConfig) -> Setup:
    layout, _, v_minus, v_plus, ops = _sg_core(cfg, [("Obs2", obs2_labels())])
    rules = {}
    for det_minus, det_plus, rec in (("yes", "no", "yes,no"), ("no", "yes", "no,yes")):
        for obs1 in SG_RECORDS:
            verdict = AGREE if obs1 == rec else "disagree"
            rules[(det_minus, det_plus, obs1)] = [("blank", f"{rec}|{verdict}")]
    for obs1 in SG_RECORDS:
        rules[("yes", "yes", obs1)] = [("blank", "other")]
    second = controlled_permutation(layout, ["Det-", "Det+", "Obs"], "Obs2", rules, name="observer2-read")
    ops = ops + (second,)
    a1, a2 = cfg.amplitude_vector()
    return Setup(
        layout=layout,
        initial=_weighted((a1, a2), (v_minus, v_plus)),
        pipeline=ops,
        records=("Obs", "Obs2"),
        expected_records=[("yes,no", f"yes,no|{AGREE}"), ("no,yes", f"no,yes|{AGREE}")],
        outcomes=("spin",),
        record_map={("yes,no", f"yes,no|{AGREE}"): "-", ("no,yes", f"no,yes|{AGREE}"): "+"},
        isolation_protocol=ops,
        versions=(v_minus, v_plus),
    )


# --- one grain per direction: the scattering sphere ---------------------------

def build_mott_sphere(cfg: ExperimentConfig) -> Setup:
    n = cfg.n_grains
    w = _width(n)
    dirs = [f"d{k:0{w}d}" for k in range(n)]
    grains = [f"grain{k:0{w}d}" for k in range(n)]
    layout = make_layout(
        [("direction", dirs)]
        + [(g, ["unexposed", "exposed"]) for g in grains]
        + [("Obs", ["blank"] + grains + ["other"])]
    )
    ready = {n_: layout.labels(n_)[0] for n_ in layout.names}
    versions = tuple(_state(layout, ready, direction=d) for d in dirs)
    detect = tuple(
        controlled_flip(layout, "direction", [d], g, "unexposed", "exposed", name=f"expose-{g}")
        for d, g in zip(dirs, grains)
    )
    read = tuple(
        controlled_flip(layout, g, ["exposed"], "Obs", "blank", g, name=f"read-{g}") for g in grains
    )
    ops = detect + read
    record_map = {
        g: tuple("exposed" if h == g else "unexposed" for h in grains) for g in grains
    }
    return Setup(
        layout=layout,
        initial=_weighted(cfg.amplitude_vector(), versions),
        pipeline=ops,
        records=("Obs",),
        expected_records=list(grains),
        outcomes=tuple(grains),
        record_map=record_map,
        isolation_protocol=ops,
        versions=versions,
        extras={"grains": tuple(grains)},
    )


# --- double slit: far-field propagation then per-cell grains ------------------

@dataclass(frozen=True)
class SlitGeometry:
    cell_centers: np.ndarray
    cell_width: float
    fringe_period: float
    slit_positions: tuple[float, float]


def slit_geometry(cfg: ExperimentConfig) -> SlitGeometry:
    """Screen cells spanning ``fringes`` whole fringe periods, centered on the axis."""
    period = cfg.wavelength * cfg.screen_distance / cfg.slit_separation
    width = cfg.fringes * period
    cell = width / cfg.screen_cells
    centers = -width / 2 + (np.arange(cfg.screen_cells) + 0.5) * cell
    half = cfg.slit_separation / 2
    return SlitGeometry(centers, cell, period, (half, -half))


def _path_phase(cfg: ExperimentConfig, x: float, slit: float) -> float:
    # r(x) = L + (x - x_s)^2 / (2L), expanded as L + x^2/2L + (x_s^2 - 2 x x_s)/2L.
    # The first two terms are large but identical for both slits, so they are
    # reduced mod one wavelength separately and cancel exactly in any
    # slit-to-slit phase difference.
    lam, dist = cfg.wavelength, cfg.screen_distance
    common = math.fmod(dist / lam, 1.0) + math.fmod(x * x / (2 * dist * lam), 1.0)
    return 2 * math.pi * (common + (slit * slit - 2 * x * slit) / (2 * dist * lam))


def propagation_kernel(cfg: ExperimentConfig, geometry: SlitGeometry) -> np.ndarray:
    """Unitary on (slit-top, slit-bottom, cell...) sending each slit to its screen wave.

    The two slit images are orthogonal because the screen spans whole fringe
    periods; the remaining columns complete them to a unitary.
    """
    m = cfg.screen_cells
    images = np.zeros((m + 2, 2), dtype=complex)
    for s, xs in enumerate(geometry.slit_positions):
        phases = np.array([_path_phase(cfg, x, xs) for x in geometry.cell_centers])
        images[2:, s] = np.exp(1j * phases) / math.sqrt(m)
    overlap = abs(np.vdot(images[:, 0], images[:, 1]))
    if overlap > 1e-12:
        raise SchemaError(f"slit images overlap by {overlap:.3e}; screen must span whole fringes")
    q, r = np.linalg.qr(np.hstack([images, np.eye(m + 2)]))
    kernel = q.copy()
    kernel[:, 0] *= r[0, 0] / abs(r[0, 0])
    kernel[:, 1] *= r[1, 1] / abs(r[1, 1])
    return kernel


def build_double_slit(cfg: ExperimentConfig) -> Setup:
    m = cfg.screen_cells
    w = _width(m)
    cells = [f"cell{k:0{w}d}" for k in range(m)]
    grains = [f"grain{k:0{w}d}" for k in range(m)]
    # one two-level grain per cell: the product space is astronomically large
    # but only O(M) basis states are ever populated
    layout = make_layout(
        [("particle", ["slit-top", "slit-bottom"] + cells)]
        + [(g, ["unexposed", "exposed"]) for g in grains]
        + [("Obs", ["blank"] + cells + ["other"])],
        max_dimension=None,
    )
    geometry = slit_geometry(cfg)
    ready = {n: layout.labels(n)[0] for n in layout.names}
    top = _state(layout, ready, particle="slit-top")
    bottom = _state(layout, ready, particle="slit-bottom")
    propagate = local_unitary(
        layout, ["particle"], propagation_kernel(cfg, geometry), name="far-field-propagation"
    )
    detect = tuple(
        controlled_flip(layout, "particle", [c], g, "unexposed", "exposed", name=f"expose-{g}")
        for c, g in zip(cells, grains)
    )
    read = tuple(
        controlled_flip(layout, g, ["exposed"], "Obs", "blank", c, name=f"read-{g}")
        for c, g in zip(cells, grains)
    )
    record_map = {
        c: tuple("exposed" if h == g else "unexposed" for h in grains) for c, g in zip(cells, grains)
    }
    return Setup(
        layout=layout,
        initial=_weighted(cfg.amplitude_vector(), (top, bottom)),
        pipeline=(propagate,) + detect + read,
        records=("Obs",),
        expected_records=list(cells),
        outcomes=tuple(grains),
        record_map=record_map,
        isolation_protocol=detect + read,
        versions=tuple(_state(layout, ready, particle=c) for c in cells),
        extras={"geometry": geometry, "cells": tuple(cells), "grains": tuple(grains)},
    )


# --- entangled pair with local analyzers --------------------------------------

SIDES = ("A", "B")
SPIN = ("up", "down")


def singlet_source_kernel() -> np.ndarray:
    """Real orthogonal map on (A.spin, B.spin) with |up,up> -> (|up,down> - |down,up>)/sqrt2."""
    h = 1 / math.sqrt(2)
    # columns are the images of uu, ud, du, dd in the (uu, ud, du, dd) basis
    return np.array(
        [
            [0, 0, h, h],
            [h, h, 0, 0],
            [-h, h, 0, 0],
            [0, 0, -h, h],
        ]
    )


def analyzer_rotation(layout: SystemLayout, side: str, theta: float) -> UnitaryOp:
    """exp(-i theta sigma_y / 2) on one spin: a sigma_z readout afterwards measures
    the spin along the analyzer direction at angle ``theta``."""
    term = HamiltonianTerm(layout, (f"{side}.spin",), SIGMA_Y / 2)
    return hamiltonian_evolution(term, theta, name=f"analyzer-{side}")


def build_bell_aspect(cfg: ExperimentConfig) -> Setup:
    subsystems = []
    for side in SIDES:
        subsystems += [
            (f"{side}.spin", list(SPIN)),
            (f"{side}.det-up", ["no", "yes"]),
            (f"{side}.det-down", ["no", "yes"]),
            (f"{side}.obs", ["blank", "up", "down", "other"]),
        ]
    layout = make_layout(subsystems)
    ready = {n: layout.labels(n)[0] for n in layout.names}
    initial = basis_state(layout, ready)
    source = local_unitary(layout, ["A.spin", "B.spin"], singlet_source_kernel(), name="singlet-source")
    rotations = (
        analyzer_rotation(layout, "A", cfg.theta_a),
        analyzer_rotation(layout, "B", cfg.theta_b),
    )
    measure: tuple[UnitaryOp, ...] = ()
    for side in SIDES:
        measure += (
            controlled_flip(layout, f"{side}.spin", ["up"], f"{side}.det-up", "no", "yes", name=f"detect-{side}-up"),
            controlled_flip(layout, f"{side}.spin", ["down"], f"{side}.det-down", "no", "yes", name=f"detect-{side}-down"),
            controlled_permutation(
                layout,
                [f"{side}.det-up", f"{side}.det-down"],
                f"{side}.obs",
                {
                    ("yes", "no"): [("blank", "up")],
                    ("no", "yes"): [("blank", "down")],
                    ("yes", "yes"): [("blank", "other")],
                },
                name=f"observer-{side}-read",
            ),
        )
    undo = [inverse(r) for r in rotations]
    versions = tuple(
        apply(undo, _state(layout, ready, **{"A.spin": a, "B.spin": b}))
        for a, b in product(SPIN, SPIN)
    )
    records = ("A.obs", "B.obs")
    pairs = list(product(SPIN, SPIN))
    return Setup(
        layout=layout,
        initial=initial,
        pipeline=(source,) + rotations + measure,
        records=records,
        expected_records=pairs,
        outcomes=("A.spin", "B.spin"),
        record_map={p: p for p in pairs},
        isolation_protocol=rotations + measure,
        versions=versions,
        extras={"source": source},
    )


def side_of(name: str) -> str:
    return name.split(".", 1)[0]


# --- beam-splitter cascade ----------------------------------------------------

def splitter_matrix(t: complex) -> np.ndarray:
    """2x2 splitter: input port 0 -> t|0> + r|1>, with r = sqrt(1 - |t|^2) real."""
    t = complex(t)
    r = math.sqrt(max(0.0, 1.0 - abs(t) ** 2))
    return np.array([[t, -r], [r, t.conjugate()]])


def _bits(depth: int) -> list[str]:
    return [format(k, f"0{depth}b") for k in range(2**depth)]


def cascade_rounds(layout: SystemLayout, depth: int, transmissions: Sequence[complex]) -> list[tuple[UnitaryOp, ...]]:
    """Per round: splitter on that round's path qubit, which-port detector, observer read."""
    rounds = []
    for r in range(1, depth + 1):
        path, det, obs = f"P{r}", f"D{r}", f"Obs{r}"
        rounds.append(
            (
                local_unitary(layout, [path], splitter_matrix(transmissions[r - 1]), name=f"splitter-{r}"),
                controlled_flip(layout, path, ["0"], det, "ready", "port0", name=f"detect-{r}-0"),
                controlled_flip(layout, path, ["1"], det, "ready", "port1", name=f"detect-{r}-1"),
                controlled_permutation(
                    layout, [det], obs,
                    {("port0",): [("blank", "port0")], ("port1",): [("blank", "port1")]},
                    name=f"observer-{r}-read",
                ),
            )
        )
    return rounds


def build_beam_cascade(cfg: ExperimentConfig) -> Setup:
    depth = cfg.depth
    subsystems = []
    for r in range(1, depth + 1):
        subsystems.append((f"P{r}", ["0", "1"]))
        subsystems.append((f"D{r}", ["ready", "port0", "port1"]))
        subsystems.append((f"Obs{r}", ["blank", "port0", "port1", "other"]))
    # 24^depth overall, but the support never exceeds 2^depth amplitudes
    layout = make_layout(subsystems, max_dimension=None)
    ready = {n: layout.labels(n)[0] for n in layout.names}
    rounds = cascade_rounds(layout, depth, cfg.transmission_vector())
    pipeline = tuple(op for rnd in rounds for op in rnd)
    records = tuple(f"Obs{r}" for r in range(1, depth + 1))
    paths = [tuple(p) for p in _bits(depth)]
    expected = [tuple(f"port{b}" for b in p) for p in paths]
    # versions: the two outputs of the first splitter, carried through the rest
    first_out = [_state(layout, ready, P1=b) for b in "01"]
    return Setup(
        layout=layout,
        initial=_state(layout, ready),
        pipeline=pipeline,
        records=records,
        expected_records=expected,
        outcomes=tuple(f"P{r}" for r in range(1, depth + 1)),
        record_map={(rec[0] if depth == 1 else rec): p for rec, p in zip(expected, paths)},
        isolation_protocol=pipeline[1:],
        versions=tuple(first_out),
        extras={"rounds": rounds},
    )


# --- layered track chamber ----------------------------------------------------

def build_track_chamber(cfg: ExperimentConfig) -> Setup:
    n_layers, m = cfg.layers, cfg.cells
    dirs = [f"dir{c}" for c in range(m)]
    cell_labels = [f"C{c}" for c in range(m)]

    def grain(l, c):
        return f"L{l}.C{c}"

    subsystems = [("direction", dirs)]
    for l in range(n_layers):
        subsystems += [(grain(l, c), ["unexposed", "exposed"]) for c in range(m)]
    subsystems += [(f"Obs.L{l}", ["blank"] + cell_labels + ["other"]) for l in range(n_layers)]
    layout = make_layout(subsystems)
    ready = {n: layout.labels(n)[0] for n in layout.names}
    ops: tuple[UnitaryOp, ...] = ()
    for l in range(n_layers):
        ops += tuple(
            controlled_flip(layout, "direction", [dirs[c]], grain(l, c), "unexposed", "exposed", name=f"expose-{grain(l, c)}")
            for c in range(m)
        )
        ops += tuple(
            controlled_flip(layout, grain(l, c), ["exposed"], f"Obs.L{l}", "blank", cell_labels[c], name=f"read-{grain(l, c)}")
            for c in range(m)
        )
    grains = tuple(grain(l, c) for l in range(n_layers) for c in range(m))
    records = tuple(f"Obs.L{l}" for l in range(n_layers))
    expected = [(lab,) * n_layers for lab in cell_labels]
    record_map = {}
    for c, rec in enumerate(expected):
        out = tuple("exposed" if g.endswith(f".C{c}") else "unexposed" for g in grains)
        record_map[rec[0] if n_layers == 1 else rec] = out
    versions = tuple(_state(layout, ready, direction=d) for d in dirs)
    return Setup(
        layout=layout,
        initial=_weighted(cfg.amplitude_vector(), versions),
        pipeline=ops,
        records=records,
        expected_records=expected,
        outcomes=grains,
        record_map=record_map,
        isolation_protocol=ops,
        versions=versions,
        extras={"grain_grid": [[grain(l, c) for c in range(m)] for l in range(n_layers)]},
    )


BUILDERS: dict[str, Callable[[ExperimentConfig], Setup]] = {
    "stern-gerlach": build_stern_gerlach,
    "two-observer": build_two_observer,
    "mott-sphere": build_mott_sphere,
    "double-slit": build_double_slit,
    "bell-aspect": build_bell_aspect,
    "beam-cascade": build_beam_cascade,
    "track-chamber": build_track_chamber,
}


def build(cfg: ExperimentConfig) -> Setup:
    return BUILDERS[cfg.experiment](cfg)
