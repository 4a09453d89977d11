"""Claim-by-claim verification battery.

Each claim runs a group of numerical checks across every shipped experiment
and a set of random amplitude draws.  A check passes when its measured value is
at or below its tolerance; ``branchlab verify`` exits 0 only if all pass.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from .branching import branch_overlap_matrix, sample_unit_amplitudes
from .dynamics import apply, local_unitary
from .experiments import EXPERIMENTS, cascade_conditioning, chsh, parse_config, run
from .experiments.config import ExperimentConfig, complex_to_json
from .experiments.runner import pre_detection_profile
from .hilbert import StateVector, make_layout, partial_trace
from .oracles import dense_apply, dense_operator, dense_partial_trace, singlet_correlation, two_path_intensity
from .reporting import canonical_json, dumps_json

__all__ = ["CheckResult", "CLAIMS", "run_battery", "random_config", "format_table"]

RANDOM_DRAWS = 20
ISOLATION_SAMPLES = 100
TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    claim: str
    check: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def random_config(name: str, rng: np.random.Generator, isolation_samples: int = 0) -> ExperimentConfig:
    """A config with random complex amplitudes (or angles/transmissions)."""
    data: dict = {"isolation_samples": isolation_samples, "seed": int(rng.integers(2**32))}
    if name in ("stern-gerlach", "two-observer", "double-slit"):
        data["amplitudes"] = [complex_to_json(a) for a in sample_unit_amplitudes(rng, 2)]
    elif name == "mott-sphere":
        data["amplitudes"] = [complex_to_json(a) for a in sample_unit_amplitudes(rng, 12)]
    elif name == "track-chamber":
        data["amplitudes"] = [complex_to_json(a) for a in sample_unit_amplitudes(rng, 3)]
    elif name == "bell-aspect":
        data["theta_a"], data["theta_b"] = (float(v) for v in rng.uniform(0, 2 * math.pi, 2))
    elif name == "beam-cascade":
        mod = np.sqrt(rng.uniform(0.1, 0.9, 3))
        phase = rng.uniform(0, 2 * math.pi, 3)
        data["transmissions"] = [complex_to_json(m * np.exp(1j * p)) for m, p in zip(mod, phase)]
    return parse_config(name, data)


class _Context:
    """Caches default runs so one battery invocation evolves each only once."""

    def __init__(self, seed: int):
        self.seed = seed
        self._runs: dict = {}
        self._draws: dict = {}

    def default(self, name: str):
        if name not in self._runs:
            cfg = parse_config(name, {"seed": self.seed, "isolation_samples": ISOLATION_SAMPLES})
            self._runs[name] = run(cfg)
        return self._runs[name]

    def draws(self, name: str):
        if name not in self._draws:
            rng = np.random.default_rng([self.seed, EXPERIMENTS.index(name)])
            self._draws[name] = [run(random_config(name, rng)) for _ in range(RANDOM_DRAWS)]
        return self._draws[name]


def _identity_dev(m: np.ndarray) -> float:
    if m.shape[0] != m.shape[1]:
        return math.inf
    return float(np.max(np.abs(m - np.eye(m.shape[0])), initial=0.0))


def check_records(ctx: _Context) -> Iterable[CheckResult]:
    claim = "records"
    rep = ctx.default("stern-gerlach")
    recs = [b.record["Obs"] for b in rep.branches]
    yield CheckResult(claim, "stern-gerlach: records are exactly yes,no / no,yes",
                      0.0 if recs == ["yes,no", "no,yes"] else 1.0, 0.0)
    weights = [b.norm2 for b in rep.branches]
    dev = max(abs(weights[0] - 0.36), abs(weights[1] - 0.64)) if len(weights) == 2 else math.inf
    yield CheckResult(claim, "stern-gerlach: branch weights 0.36 / 0.64", dev, TOL)
    yield CheckResult(claim, "stern-gerlach: branch Gram matrix is identity",
                      _identity_dev(branch_overlap_matrix(rep.branches)), TOL)


def check_isolation(ctx: _Context) -> Iterable[CheckResult]:
    for name in EXPERIMENTS:
        iso = ctx.default(name).isolation
        yield CheckResult("isolation", f"{name}: linearity residual ({iso.samples} draws)", iso.linearity_residual, TOL)
        yield CheckResult("isolation", f"{name}: branch fidelity deviation", iso.branch_fidelity_deviation, TOL)
        yield CheckResult("isolation", f"{name}: cross-talk", iso.cross_talk, TOL)


def check_basis_independence(ctx: _Context) -> Iterable[CheckResult]:
    for name in EXPERIMENTS:
        reports = [ctx.default(name)] + ctx.draws(name)
        leak = max(r.support.leakage for r in reports)
        rank_mismatch = sum(r.support.reduced_rank != len(r.branches) for r in reports)
        yield CheckResult("basis-independence", f"{name}: leakage outside classical records", leak, TOL)
        yield CheckResult("basis-independence", f"{name}: observer rank != branch count (runs)", float(rank_mismatch), 0.0)


def check_perception(ctx: _Context) -> Iterable[CheckResult]:
    for name in EXPERIMENTS:
        reports = [ctx.default(name)] + ctx.draws(name)
        dev = max(_identity_dev(r.perception) for r in reports)
        yield CheckResult("perception", f"{name}: perception matrix vs identity ({len(reports)} runs)", dev, TOL)


def check_agreement(ctx: _Context) -> Iterable[CheckResult]:
    reports = [ctx.default("two-observer")] + ctx.draws("two-observer")
    failures = sum(r.diagnostics["agreement_failures"][0] for r in reports)
    yield CheckResult("agreement", f"two-observer: branches without agreement ({len(reports)} runs)", failures, 0.0)


def check_localization(ctx: _Context) -> Iterable[CheckResult]:
    claim = "localization"
    mott = ctx.default("mott-sphere")
    yield CheckResult(claim, "mott-sphere N=12: |branches - 12|", float(abs(len(mott.branches) - 12)), 0.0)
    yield CheckResult(claim, "mott-sphere: weight on >=2 exposed grains", mott.diagnostics["multi_exposure_weight"][0], 1e-24)
    yield CheckResult(claim, "mott-sphere: branches not one-hot", mott.diagnostics["branches_not_one_hot"][0], 0.0)
    yield CheckResult(claim, "mott-sphere: branch Gram matrix is identity",
                      _identity_dev(branch_overlap_matrix(mott.branches)), TOL)
    track = ctx.default("track-chamber")
    yield CheckResult(claim, "track-chamber: |branches - cells|", float(abs(len(track.branches) - track.config.cells)), 0.0)
    yield CheckResult(claim, "track-chamber: weight on two cells in one layer", track.diagnostics["multi_cell_layer_weight"][0], 1e-24)
    yield CheckResult(claim, "track-chamber: weight without one cell per layer", track.diagnostics["not_one_cell_per_layer_weight"][0], 1e-24)
    yield CheckResult(claim, "track-chamber: non-straight tracks", track.diagnostics["bent_tracks"][0], 0.0)


def check_interference(ctx: _Context) -> Iterable[CheckResult]:
    claim = "interference"
    rep = ctx.default("double-slit")
    cfg = rep.config
    geometry = rep.setup.extras["geometry"]
    a_top, a_bottom = cfg.amplitude_vector()
    analytic = two_path_intensity(
        geometry.cell_centers, a_top, a_bottom, cfg.slit_separation, cfg.wavelength, cfg.screen_distance
    )
    engine = np.array(rep.payload["intensity"])
    yield CheckResult(claim, "double-slit: intensity vs two-path formula (max rel.)",
                      float(np.max(np.abs(engine - analytic) / analytic)), 1e-9)
    period = geometry.fringe_period
    worst = 0.0
    for x in rep.payload["intensity_minima_m"]:
        k = round(x / period - 0.5)
        worst = max(worst, abs(x - (k + 0.5) * period))
    yield CheckResult(claim, "double-slit: minima offset from (k+1/2) lambda L / d [cell widths]",
                      worst / geometry.cell_width, 1.0)
    yield CheckResult(claim, "double-slit: branches not exposing exactly one cell",
                      rep.diagnostics["branches_not_one_hot"][0], 0.0)
    one_slit = run(cfg.with_(amplitudes=[1.0, 0.0], isolation_samples=0))
    flat = pre_detection_profile(one_slit.setup)
    yield CheckResult(claim, "double-slit one slit open: deviation from flat profile (rel.)",
                      float(np.max(np.abs(flat * cfg.screen_cells - 1.0))), 1e-9)


def check_entanglement(ctx: _Context) -> Iterable[CheckResult]:
    claim = "entanglement"
    worst_formula = 0.0
    worst_oracle = 0.0
    crossing = 0.0
    for k in range(12):
        ta, tb = 0.3 * k, math.pi * k / 6
        rep = run(parse_config("bell-aspect", {"theta_a": ta, "theta_b": tb, "isolation_samples": 0}))
        e = rep.payload["correlation_E"]
        worst_formula = max(worst_formula, abs(e + math.cos(ta - tb)))
        worst_oracle = max(worst_oracle, abs(e - singlet_correlation(ta, tb)))
        crossing += rep.diagnostics["cross_side_operators"][0]
    yield CheckResult(claim, "bell-aspect: |E + cos(ta - tb)| over 12 angle pairs", worst_formula, 1e-10)
    yield CheckResult(claim, "bell-aspect: E vs dense singlet oracle", worst_oracle, 1e-10)
    yield CheckResult(claim, "bell-aspect: CHSH |S - 2 sqrt 2|", abs(chsh() - 2 * math.sqrt(2)), 1e-9)
    yield CheckResult(claim, "bell-aspect: operators spanning both sides (besides source)", crossing, 0.0)


def check_conditioning(ctx: _Context) -> Iterable[CheckResult]:
    claim = "conditioning"
    rep = ctx.default("beam-cascade")
    for k in (1, 2):
        fids = cascade_conditioning(rep.setup, k)
        yield CheckResult(claim, f"beam-cascade D=3: 1 - fidelity, first {k} record(s) ({len(fids)} prefixes)",
                          max(0.0, 1 - min(fids.values())), TOL)
    worst = 0.0
    for r in ctx.draws("beam-cascade"):
        worst = max(worst, max(0.0, 1 - min(cascade_conditioning(r.setup, 1).values())))
    yield CheckResult(claim, f"beam-cascade: 1 - fidelity over {RANDOM_DRAWS} random splitter sets", worst, TOL)


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def oracle_deviation(seed: int, trials: int = 25) -> tuple[float, float, float]:
    """Max sparse-vs-dense deviations for apply (two routes) and partial trace."""
    rng = np.random.default_rng(seed)
    worst_apply = worst_matrix = worst_trace = 0.0
    for _ in range(trials):
        n_sub = int(rng.integers(1, 5))
        dims = [int(d) for d in rng.integers(1, 5, n_sub)]
        while math.prod(dims) > 2**10 or max(dims) < 2:
            dims = [int(d) for d in rng.integers(1, 5, n_sub)]
        layout = make_layout([(f"s{k}", d) for k, d in enumerate(dims)])
        names = list(layout.names)
        acting = list(rng.choice(names, size=int(rng.integers(1, len(names) + 1)), replace=False))
        op = local_unitary(layout, acting, _random_unitary(rng, layout.sub_dimension(acting)))
        vec = rng.standard_normal(layout.dimension) + 1j * rng.standard_normal(layout.dimension)
        vec[rng.random(layout.dimension) < 0.5] = 0
        vec /= np.linalg.norm(vec) or 1.0
        state = StateVector.from_dense(layout, vec, prune_threshold=0.0)
        sparse = apply(op, state).to_dense()
        worst_apply = max(worst_apply, float(np.max(np.abs(sparse - dense_apply(op, vec)))))
        worst_matrix = max(worst_matrix, float(np.max(np.abs(sparse - dense_operator(op) @ vec))))
        keep = list(rng.choice(names, size=int(rng.integers(1, len(names) + 1)), replace=False))
        rho = partial_trace(state, keep).entries
        worst_trace = max(worst_trace, float(np.max(np.abs(rho - dense_partial_trace(layout, vec, keep)))))
    return worst_apply, worst_matrix, worst_trace


def check_oracle(ctx: _Context) -> Iterable[CheckResult]:
    a, m, t = oracle_deviation(ctx.seed)
    yield CheckResult("oracle", "sparse apply vs dense tensor contraction (dim <= 2^10)", a, TOL)
    yield CheckResult("oracle", "sparse apply vs promoted dense matrix-vector product", m, TOL)
    yield CheckResult("oracle", "sparse partial trace vs dense einsum", t, 1e-10)


def check_determinism(ctx: _Context) -> Iterable[CheckResult]:
    for name in EXPERIMENTS:
        cfg = parse_config(name, {"seed": ctx.seed, "isolation_samples": 5})
        first, second = dumps_json(run(cfg)), dumps_json(run(cfg))
        roundtrip = canonical_json(json.loads(first))
        bad = float(first != second) + float(roundtrip != first)
        yield CheckResult("determinism", f"{name}: repeated run and JSON round trip byte-identical", bad, 0.0)


CLAIMS: dict[str, tuple[str, Callable[[_Context], Iterable[CheckResult]]]] = {
    "records": ("two definite records after a spin measurement", check_records),
    "isolation": ("each branch evolves as if the others were absent", check_isolation),
    "basis-independence": ("observer states stay inside the classical record span", check_basis_independence),
    "perception": ("observer version i perceives outcome i and nothing else", check_perception),
    "agreement": ("observers on one branch agree", check_agreement),
    "localization": ("one grain per run; one cell per layer along a straight track", check_localization),
    "interference": ("fringes before detection, one exposed cell after", check_interference),
    "entanglement": ("singlet statistics from strictly local operators", check_entanglement),
    "conditioning": ("known early records predict later branchings", check_conditioning),
    "oracle": ("sparse engine agrees with dense brute force", check_oracle),
    "determinism": ("reports are byte-reproducible", check_determinism),
}


def run_battery(seed: int = 0, claims: Iterable[str] | None = None) -> list[CheckResult]:
    selected = list(CLAIMS) if claims is None else list(claims)
    unknown = [c for c in selected if c not in CLAIMS]
    if unknown:
        raise KeyError(f"unknown claim(s): {', '.join(unknown)}")
    ctx = _Context(seed)
    results: list[CheckResult] = []
    for name in selected:
        results.extend(CLAIMS[name][1](ctx))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.check) for r in results) if results else 10
    lines = [f"{'claim':<20} {'check':<{width}} {'value':>11} {'tol':>9}  result"]
    for r in results:
        value = "inf" if math.isinf(r.value) else f"{r.value:.3e}"
        lines.append(
            f"{r.claim:<20} {r.check:<{width}} {value:>11} {r.tolerance:>9.1e}  {'PASS' if r.passed else 'FAIL'}"
        )
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
