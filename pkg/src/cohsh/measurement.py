"""Polarization analyzers, detector semantics, and coincidence counting.

Detection layout: the recombined beams leave on ports c and d, pass a
half-wave-plate / polarizing-splitter analyzer pair, and hit four detectors.
Outcome "+" at a port is the H output after rotating that port's polarization
by minus the analyzer angle, "-" is the V output.

Rate normalization.  Exact-mode tables are two-photon event rates expressed
relative to the vacuum-window rate, i.e. the mixture component |i_aH, j_bV>
enters with coefficient

    mu_a^i / i!  *  mu_b^j / j!

(the Poisson weight divided by the vacuum weight).  For coherent light this
equals the normally-ordered pair-detection rate, which is exactly bilinear in
(mu_a, mu_b); in these units the two-photon decomposition

    N_ij = mu_a mu_b P_ij(1,1) + mu_a^2/2 P_ij(2,0) + mu_b^2/2 P_ij(0,2)

is an identity, the three-configuration background subtraction cancels the
separable terms exactly, and the normalized correlation E is independent of
the overall scale anyway.

Detector model.  Visibility eta mixes the ideal outcome distribution with a
uniform relabeling of coincidences (E_measured = eta * E_ideal exactly);
efficiency scales exact coincidence rates by efficiency^2 (both photons must
be seen) and is applied as per-photon Bernoulli loss in the samplers; dark
counts are an additive Poisson rate per detector, modeled in the coherent
sampler only.

Monte Carlo determinism.  Trials are split into fixed-size blocks, each block
seeded from the caller's stream up front, and block results merge by
addition, so a run is a pure function of its seed no matter how many workers
execute the blocks or in which order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .elements import ModeTransform, apply, beam_splitter, compose, polarization_rotator
from .fock import AH, BV, CH, CV, DH, DV, MODE_INDEX, DensityMixture, Port, StateVector, basis_state
from .source import BlockedArm, SourceSpec, two_mode_input, _truncated_cdf

#: Fixed Monte Carlo block size; block boundaries define the seeding grid.
MC_BLOCK = 1_000_000

#: Outcome cells in CSV order: (+,+), (+,-), (-,+), (-,-).
CELLS = ("pp", "pm", "mp", "mm")

_DET_MODES = (MODE_INDEX[CH], MODE_INDEX[CV], MODE_INDEX[DH], MODE_INDEX[DV])
_INPUT_PORTS = {Port.A, Port.B}
_OUTPUT_PORTS = {Port.C, Port.D}
#: Detector-mode column pairs (c-side, d-side) for the four cells.
_CELL_COLUMNS = ((0, 2), (0, 3), (1, 2), (1, 3))

#: The recombining 50:50 splitter, a/b inputs onto c/d outputs.
RECOMBINER = beam_splitter(Port.A, Port.B)


class CoincidenceSemantics(str, Enum):
    #: Exactly one photon at each of the two fired detectors, zero elsewhere.
    EXACT_ONE_ONE = "exact_one_one"
    #: At least one click at each of the two named detectors.
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class AnalyzerSetting:
    """Analyzer rotation angles (radians) at ports c and d; physics is pi-periodic."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class DetectorModel:
    visibility_eta: float = 1.0
    efficiency: float = 1.0
    semantics: CoincidenceSemantics = CoincidenceSemantics.EXACT_ONE_ONE
    dark_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility_eta <= 1.0:
            raise ValueError("visibility_eta must lie in [0, 1]")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.dark_rate < 0.0:
            raise ValueError("dark_rate must be non-negative")


@dataclass(frozen=True)
class CountTable:
    """Coincidence counts or rates for the four (+/-, +/-) outcomes.

    ``trials == 0`` marks an exact-mode rate table; counts from Monte Carlo
    carry the number of trials.  The remaining fields are run metadata used
    to validate that tables entering a subtraction belong together.
    """

    n_pp: float
    n_pm: float
    n_mp: float
    n_mm: float
    trials: int = 0
    alpha: float | None = None
    beta: float | None = None
    mu_a: float | None = None
    mu_b: float | None = None
    blocked: BlockedArm | None = None

    CSV_HEADER = "setting_alpha,setting_beta,mu_a,mu_b,blocked,n_pp,n_pm,n_mp,n_mm,trials"

    @classmethod
    def from_values(cls, values: np.ndarray, **meta) -> "CountTable":
        pp, pm, mp, mm = (float(v) for v in values)
        return cls(pp, pm, mp, mm, **meta)

    def values(self) -> np.ndarray:
        return np.array([self.n_pp, self.n_pm, self.n_mp, self.n_mm], dtype=float)

    @property
    def total(self) -> float:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    def csv_row(self) -> str:
        if None in (self.alpha, self.beta, self.mu_a, self.mu_b, self.blocked):
            raise ValueError("table lacks the metadata required for a CSV row")
        cells = ",".join(_fmt_number(v) for v in self.values())
        return (
            f"{_fmt_number(self.alpha)},{_fmt_number(self.beta)},"
            f"{_fmt_number(self.mu_a)},{_fmt_number(self.mu_b)},"
            f"{self.blocked.value},{cells},{int(self.trials)}"
        )


def _fmt_number(x: float) -> str:
    f = float(x)
    return str(int(f)) if f.is_integer() else repr(f)


def analyzer_transform(setting: AnalyzerSetting) -> ModeTransform:
    """Rotation by -alpha within port c and -beta within port d.

    After this transform the H mode of each output port is the "+" detector
    along the analyzer axis and the V mode is "-".
    """
    return compose(
        polarization_rotator(Port.C, -setting.alpha),
        polarization_rotator(Port.D, -setting.beta),
    )


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent child stream for (seed, key).

    Cells of a larger computation (setting, configuration, repetition, block)
    each get their own key, so results are reproducible for a fixed seed
    regardless of execution order or how cells are spread across workers.
    """
    entropy = int(seed) & 0xFFFFFFFFFFFFFFFF
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def _classify_exact(occ: tuple[int, ...]) -> int | None:
    """Cell index for exactly-one-photon-per-output events, else None."""
    if occ[0] or occ[1] or occ[2] or occ[3]:
        return None
    nc_h, nc_v, nd_h, nd_v = occ[4], occ[5], occ[6], occ[7]
    if nc_h + nc_v != 1 or nd_h + nd_v != 1:
        return None
    return (0 if nc_h else 2) + (0 if nd_h else 1)


def _classify_threshold(occ: tuple[int, ...]) -> list[int]:
    """All cells with at least one click on each side (may be several)."""
    nc = (occ[4], occ[5])
    nd = (occ[6], occ[7])
    return [2 * i + j for i in (0, 1) for j in (0, 1) if nc[i] and nd[j]]


def _raw_cell_probs(
    state: StateVector, transform: ModeTransform, semantics: CoincidenceSemantics
) -> np.ndarray:
    """Coincidence probabilities of one pure state, before detector effects."""
    out = apply(transform, state)
    cells = np.zeros(4)
    for bstate, amp in out.items():
        p = amp.real * amp.real + amp.imag * amp.imag
        if semantics is CoincidenceSemantics.EXACT_ONE_ONE:
            cell = _classify_exact(bstate.occ)
            if cell is not None:
                cells[cell] += p
        else:
            for cell in _classify_threshold(bstate.occ):
                cells[cell] += p
    return cells


def _finalize_cells(cells: np.ndarray, detector: DetectorModel) -> np.ndarray:
    """Apply visibility mixing and the pair-detection efficiency factor."""
    eta = detector.visibility_eta
    mixed = eta * cells + (1.0 - eta) / 4.0 * cells.sum()
    return mixed * detector.efficiency**2


def _transform_for(support_ports: set[Port], setting: AnalyzerSetting) -> ModeTransform:
    if support_ports <= _INPUT_PORTS:
        return compose(RECOMBINER, analyzer_transform(setting))
    if support_ports <= _OUTPUT_PORTS:
        return analyzer_transform(setting)
    names = ",".join(sorted(p.value for p in support_ports))
    raise ValueError(f"input occupies unsupported port combination: {names}")


def coincidence_probabilities(
    input_state: DensityMixture, setting: AnalyzerSetting, detector: DetectorModel
) -> CountTable:
    """Coincidence probabilities of a mixture under the analyzer setting.

    States on the recombination inputs (ports a, b) are propagated through
    the 50:50 splitter and the analyzers; states already on the output ports
    c, d skip the splitter.  Events with both photons in one port register in
    no cell.
    """
    support = set()
    for _, component in input_state.components:
        support |= {mode.port for mode in component.support_modes()}
    transform = _transform_for(support, setting)
    cells = np.zeros(4)
    for weight, component in input_state.components:
        cells += weight * _raw_cell_probs(component, transform, detector.semantics)
    return CountTable.from_values(
        _finalize_cells(cells, detector),
        trials=0,
        alpha=setting.alpha,
        beta=setting.beta,
    )


def exact_rates(
    spec: SourceSpec, setting: AnalyzerSetting, detector: DetectorModel
) -> CountTable:
    """Two-photon event rates N_ij for the full truncated source mixture.

    Each component is weighted by its rate coefficient relative to the vacuum
    window (see the module docstring), which makes the rates exactly bilinear
    in the two mean photon numbers.
    """
    mixture, _ = two_mode_input(spec)
    transform = compose(RECOMBINER, analyzer_transform(setting))
    mu_a, mu_b = spec.effective_mu_a, spec.effective_mu_b
    cells = np.zeros(4)
    for weight, component in mixture.components:
        (bstate, _), = component.items()
        i, j = bstate.count(AH), bstate.count(BV)
        coeff = mu_a**i / math.factorial(i) * mu_b**j / math.factorial(j)
        if coeff == 0.0:
            continue
        cells += coeff * _raw_cell_probs(component, transform, detector.semantics)
    return CountTable.from_values(
        _finalize_cells(cells, detector),
        trials=0,
        alpha=setting.alpha,
        beta=setting.beta,
        mu_a=spec.mu_a,
        mu_b=spec.mu_b,
        blocked=spec.blocked,
    )


def _as_rng(rng: np.random.Generator | int) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))


def _block_sizes(trials: int) -> list[int]:
    full, rest = divmod(trials, MC_BLOCK)
    return [MC_BLOCK] * full + ([rest] if rest else [])


def _run_blocks(run_block, block_seeds: np.ndarray, n_workers: int) -> np.ndarray:
    indices = range(len(block_seeds))
    if n_workers <= 1:
        results = [run_block(b) for b in indices]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_block, indices))
    return np.sum(results, axis=0) if results else np.zeros(4, dtype=np.int64)


def _relabel_visibility(
    cells: np.ndarray, eta: float, rng: np.random.Generator
) -> np.ndarray:
    """Replace each registered outcome by a uniform one with probability 1-eta."""
    if eta >= 1.0 or cells.size == 0:
        return cells
    flip = rng.random(cells.size) < (1.0 - eta)
    if flip.any():
        cells = cells.copy()
        cells[flip] = rng.integers(0, 4, int(flip.sum()))
    return cells


def _count_table(counts: np.ndarray, trials: int, spec: SourceSpec, setting: AnalyzerSetting) -> CountTable:
    return CountTable(
        float(counts[0]),
        float(counts[1]),
        float(counts[2]),
        float(counts[3]),
        trials=trials,
        alpha=setting.alpha,
        beta=setting.beta,
        mu_a=spec.mu_a,
        mu_b=spec.mu_b,
        blocked=spec.blocked,
    )


def run_montecarlo_fock(
    spec: SourceSpec,
    setting: AnalyzerSetting,
    detector: DetectorModel,
    trials: int,
    rng: np.random.Generator | int,
    *,
    n_workers: int = 1,
) -> CountTable:
    """Event-by-event sampler over photon-number inputs.

    Per trial: draw |i_aH, j_bV> by inverse-CDF over the truncated Poisson
    laws (one uniform per arm), thin each photon with the detector efficiency,
    sample one output pattern from the propagated state's squared amplitudes,
    classify it, and apply the visibility relabeling.  Dark counts are not
    modeled here; use the coherent sampler for that.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if detector.dark_rate > 0.0:
        raise ValueError("dark counts are only modeled in the coherent sampler")
    rng = _as_rng(rng)

    transform = compose(RECOMBINER, analyzer_transform(setting))
    cdf_a = _truncated_cdf(spec.effective_mu_a, spec.n_max)
    cdf_b = _truncated_cdf(spec.effective_mu_b, spec.n_max)
    exact = detector.semantics is CoincidenceSemantics.EXACT_ONE_ONE
    sectors = _sector_distributions(transform, spec.n_max, exact)

    sizes = _block_sizes(trials)
    block_seeds = rng.integers(0, 2**63, size=len(sizes), dtype=np.uint64)
    eta = detector.visibility_eta
    eff = detector.efficiency

    def run_block(b: int) -> np.ndarray:
        brng = np.random.default_rng(int(block_seeds[b]))
        n = sizes[b]
        i = np.searchsorted(cdf_a, brng.random(n), side="right")
        j = np.searchsorted(cdf_b, brng.random(n), side="right")
        if eff < 1.0:
            i = brng.binomial(i, eff)
            j = brng.binomial(j, eff)
        u = brng.random(n)
        if exact:
            cls = np.full(n, 4, dtype=np.int8)
            for (si, sj), (cum, classes, _) in sectors.items():
                mask = (i == si) & (j == sj)
                if mask.any():
                    cls[mask] = classes[np.searchsorted(cum, u[mask], side="right")]
            hits = cls[cls < 4].astype(np.int64)
            hits = _relabel_visibility(hits, eta, brng)
            return np.bincount(hits, minlength=4).astype(np.int64)
        registered: list[np.ndarray] = []
        for (si, sj), (cum, _, increments) in sectors.items():
            mask = (i == si) & (j == sj)
            if not mask.any():
                continue
            picked = increments[np.searchsorted(cum, u[mask], side="right")]
            registered.append(np.nonzero(picked)[1])
        cols = np.concatenate(registered) if registered else np.zeros(0, dtype=np.int64)
        cols = _relabel_visibility(cols.astype(np.int64), eta, brng)
        return np.bincount(cols, minlength=4).astype(np.int64)

    counts = _run_blocks(run_block, block_seeds, n_workers)
    return _count_table(counts, trials, spec, setting)


def _sector_distributions(
    transform: ModeTransform, n_max: int, exact: bool
) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per input sector (i, j): output-pattern CDF, classes, cell increments."""
    sectors = {}
    for i in range(n_max + 1):
        for j in range(n_max + 1):
            state = StateVector.from_basis(basis_state(aH=i, bV=j))
            out = apply(transform, state)
            probs, classes, increments = [], [], []
            for bstate, amp in out.items():
                probs.append(amp.real * amp.real + amp.imag * amp.imag)
                cell = _classify_exact(bstate.occ)
                classes.append(4 if cell is None else cell)
                row = np.zeros(4, dtype=np.int8)
                for c in _classify_threshold(bstate.occ):
                    row[c] = 1
                increments.append(row)
            cum = np.cumsum(probs)
            cum /= cum[-1]
            sectors[(i, j)] = (
                cum,
                np.array(classes, dtype=np.int8),
                np.array(increments, dtype=np.int8),
            )
    return sectors


def run_montecarlo_coherent(
    spec: SourceSpec,
    setting: AnalyzerSetting,
    detector: DetectorModel,
    trials: int,
    rng: np.random.Generator | int,
    *,
    n_workers: int = 1,
) -> CountTable:
    """Semiclassical-exact sampler over coherent amplitudes.

    Per trial: draw the two beam phases, propagate the coherent amplitudes
    through the splitter and analyzer matrices (coherent states stay coherent
    under linear optics), and read out the four detectors with independent
    Poisson counts of mean efficiency * intensity (+ dark rate).  Statistically
    equivalent to the photon-number sampler for every observable.

    For exact-one-one semantics without dark counts the Poisson readout is
    marginalized: the per-trial coincidence-cell probabilities have the closed
    form eff^2 I_c I_d exp(-eff (mu_a + mu_b)), so one categorical draw
    replaces the four count draws without changing the distribution.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = _as_rng(rng)

    total = compose(RECOMBINER, analyzer_transform(setting)).matrix
    u = total[list(_DET_MODES), MODE_INDEX[AH]]
    v = total[list(_DET_MODES), MODE_INDEX[BV]]
    mu_a, mu_b = spec.effective_mu_a, spec.effective_mu_b
    base = mu_a * np.abs(u) ** 2 + mu_b * np.abs(v) ** 2
    cross = 2.0 * math.sqrt(mu_a * mu_b) * (u * v.conj())

    eta = detector.visibility_eta
    eff = detector.efficiency
    exact = detector.semantics is CoincidenceSemantics.EXACT_ONE_ONE
    fast = exact and detector.dark_rate == 0.0
    pair_scale = eff**2 * math.exp(-eff * (mu_a + mu_b))

    sizes = _block_sizes(trials)
    block_seeds = rng.integers(0, 2**63, size=len(sizes), dtype=np.uint64)

    c_cols = [c for c, _ in _CELL_COLUMNS]
    d_cols = [d for _, d in _CELL_COLUMNS]
    interferes = cross.any()

    def run_block(b: int) -> np.ndarray:
        brng = np.random.default_rng(int(block_seeds[b]))
        n = sizes[b]
        if fast and not interferes:
            # One arm is dark: intensities are phase independent, so the
            # block is a single multinomial draw over the outcome cells.
            p = pair_scale * base[c_cols] * base[d_cols]
            p = eta * p + (1.0 - eta) / 4.0 * p.sum()
            pvals = np.append(p, 1.0 - p.sum())
            return brng.multinomial(n, pvals)[:4].astype(np.int64)
        phases = 2.0 * math.pi * brng.random((n, 2))
        delta = phases[:, 0] - phases[:, 1]
        intensity = (
            base[None, :]
            + np.cos(delta)[:, None] * cross.real[None, :]
            - np.sin(delta)[:, None] * cross.imag[None, :]
        )
        # fully destructive interference can round to -1e-19
        np.maximum(intensity, 0.0, out=intensity)
        if fast:
            p = pair_scale * intensity[:, c_cols] * intensity[:, d_cols]
            totals = p.sum(axis=1)
            draw = brng.random(n)
            hit = np.flatnonzero(draw < totals)
            if hit.size == 0:
                return np.zeros(4, dtype=np.int64)
            p_hit = p[hit]
            if eta < 1.0:
                p_hit = eta * p_hit + (1.0 - eta) / 4.0 * totals[hit, None]
            cum = np.cumsum(p_hit, axis=1)
            cls = (draw[hit, None] >= cum[:, :3]).sum(axis=1)
            return np.bincount(cls, minlength=4).astype(np.int64)
        counts = brng.poisson(eff * intensity + detector.dark_rate)
        if exact:
            side_c = counts[:, 0] + counts[:, 1]
            side_d = counts[:, 2] + counts[:, 3]
            valid = (side_c == 1) & (side_d == 1)
            cls = 2 * (counts[valid, 1] > 0) + (counts[valid, 3] > 0)
            cls = _relabel_visibility(cls.astype(np.int64), eta, brng)
            return np.bincount(cls, minlength=4).astype(np.int64)
        clicks_c = counts[:, :2] > 0
        clicks_d = counts[:, 2:] > 0
        registered = []
        for cell, (ci, dj) in enumerate(_CELL_COLUMNS):
            fired = clicks_c[:, ci] & clicks_d[:, dj - 2]
            registered.append(np.full(int(fired.sum()), cell, dtype=np.int64))
        cols = np.concatenate(registered) if registered else np.zeros(0, dtype=np.int64)
        cols = _relabel_visibility(cols, eta, brng)
        return np.bincount(cols, minlength=4).astype(np.int64)

    counts = _run_blocks(run_block, block_seeds, n_workers)
    return _count_table(counts, trials, spec, setting)
