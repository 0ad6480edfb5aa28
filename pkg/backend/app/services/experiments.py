"""
Declarative Monte Carlo harness: replicate simulations with derived seeds,
aggregation, mergeable results, limit-theorem checks and the martingale
diagnostic.

Replicate seeds are derived from (master_seed, n, replicate index), so every
replicate is reproducible on its own and results do not depend on the
number of workers or on the order in which chunks finish.
"""
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy import integrate

from ..core import config
from ..core.errors import (
    BadParameter,
    BarUnsupported,
    CDIRequired,
    ConfigError,
    ZeroReplicates,
)
from ..schemas.schemas import ExperimentSpecDocument
from .ewens import configuration_from_partition, ewens_distribution, total_variation
from .measures import CoalescentMeasure, PsiEvaluator, block_drift, validate_measure
from .simulator import (
    SEED_MASK,
    Simulator,
    StopRule,
    UntilTau,
    UntilTauStar,
    UntilTime,
    parse_stop,
    stop_to_model,
)
from .speed import SpeedSolver, comes_down_check
from .statistics import alleles_partition, predicted_spectrum, spectrum_counts, trajectories

logger = logging.getLogger(__name__)

STATISTICS = (
    "tau",
    "tree_length",
    "mutations",
    "open_mutations",
    "closed_mutations",
    "open_fraction",
    "length_ratio",
    "open_length_ratio",
    "harmonic_length_ratio",
    "allele_partition_histogram",
)
SPECTRUM_PREFIXES = ("spectrum_sites:", "spectrum_alleles:")
THEOREMS = ("T1_closed_fraction", "P2_speed_envelope", "T3_family_counts", "T4_partial_time", "C7_spectrum")

# envelope exponent alpha = 1/3; tail exponent beta inside (0, min(alpha, 1 - 2 alpha))
ENVELOPE_ALPHA = 1.0 / 3.0
TAIL_BETA = 1.0 / 6.0
ENVELOPE_CONSTANT = 8.0
DIVERGENCE_FLOOR = 10.0

DEFAULT_TOLERANCES = {
    "T1_max_ratio_smallest_t": 0.15,
    "P2_max_exceedance": 0.1,
    "T3_band": 0.25,
    "T3_open_fraction_min": 0.9,
    "T4_band": 0.25,
    "C7_band_r1": 0.25,
    "C7_band_r2": 0.30,
    "C7_band": 0.30,
    "divergence_floor": DIVERGENCE_FLOOR,
}


def replicate_seed(master_seed: int, n: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, n, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentSpec:
    measure: CoalescentMeasure
    n_grid: Tuple[int, ...]
    gamma: float
    replicates: int
    master_seed: int
    statistic: str = "mutations"
    stop: StopRule = UntilTau()
    tolerances: Dict[str, float] = field(default_factory=dict)
    replicate_offset: int = 0
    t_grid: Tuple[float, ...] = (0.001, 0.01, 0.1)
    s_grid: Tuple[float, ...] = (1e-4, 1e-3)
    t_sequence: Optional[Tuple[float, ...]] = None
    r_max: int = 2
    beta: Optional[float] = None

    def tolerance(self, key: str) -> float:
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def validate(self):
        if self.replicates < 1:
            raise ZeroReplicates(f"replicates must be >= 1, got {self.replicates}")
        if not self.n_grid:
            raise BadParameter("n_grid is empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or self.n_grid[0] < 1:
            raise BadParameter(f"n_grid must be strictly increasing positive integers, got {list(self.n_grid)}")
        if self.gamma < 0:
            raise BadParameter(f"gamma must be nonnegative, got {self.gamma}")
        if not 0 <= self.master_seed <= SEED_MASK:
            raise BadParameter(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.replicate_offset < 0:
            raise BadParameter("replicate_offset must be nonnegative")
        _check_statistic(self.statistic)
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance key '{sorted(unknown)[0]}'")
        return self

    @classmethod
    def from_document(cls, doc) -> "ExperimentSpec":
        if not isinstance(doc, ExperimentSpecDocument):
            try:
                doc = ExperimentSpecDocument.model_validate(doc)
            except ValidationError as e:
                err = e.errors()[0]
                loc = ".".join(str(p) for p in err.get("loc", ()))
                if err.get("type") == "extra_forbidden":
                    raise ConfigError(f"unknown key '{loc}'") from e
                raise ConfigError(f"{loc}: {err.get('msg')}") from e
        spec = cls(
            measure=validate_measure(doc.measure),
            n_grid=tuple(doc.n_grid),
            gamma=doc.gamma,
            replicates=doc.replicates,
            master_seed=doc.master_seed,
            statistic=doc.statistic,
            stop=parse_stop(doc.stop),
            tolerances=dict(doc.tolerances),
            replicate_offset=doc.replicate_offset,
            t_grid=tuple(doc.t_grid) if doc.t_grid else cls.t_grid,
            s_grid=tuple(doc.s_grid) if doc.s_grid else cls.s_grid,
            t_sequence=tuple(doc.t_sequence) if doc.t_sequence else None,
            r_max=doc.r_max,
            beta=doc.beta,
        )
        return spec.validate()

    def to_document(self) -> ExperimentSpecDocument:
        return ExperimentSpecDocument(
            measure=self.measure.describe(),
            n_grid=list(self.n_grid),
            gamma=self.gamma,
            replicates=self.replicates,
            master_seed=self.master_seed,
            statistic=self.statistic,
            stop=stop_to_model(self.stop),
            tolerances=dict(self.tolerances),
            replicate_offset=self.replicate_offset,
            t_grid=list(self.t_grid),
            s_grid=list(self.s_grid),
            t_sequence=list(self.t_sequence) if self.t_sequence else None,
            r_max=self.r_max,
            beta=self.beta,
        )


def _check_statistic(name: str):
    if name in STATISTICS:
        return
    for prefix in SPECTRUM_PREFIXES:
        if name.startswith(prefix):
            r = name[len(prefix):]
            if r.isdigit() and int(r) >= 1:
                return
    raise BadParameter(f"unknown statistic '{name}'")


# ---------------------------------------------------------------------------
# replicate probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateProbe:
    """Everything the harness reads from one simulated genealogy."""

    tau: Optional[float]
    end_time: float
    mutations: int
    open_mutations: int
    tree_length: float
    final_blocks: int
    spectrum_sites: Dict[int, int]
    spectrum_alleles: Dict[int, int]
    configuration: Optional[Tuple[int, ...]] = None
    closed_probes: Dict[float, Tuple[int, int, float]] = field(default_factory=dict)  # t -> (M_c, M, L)
    open_deficits: Dict[float, float] = field(default_factory=dict)  # s -> sup |1 - N_o / N|


def probe_genealogy(g, t_points: Sequence[float] = (), s_points: Sequence[float] = (), with_configuration=False):
    traj = trajectories(g)
    end = g.end_time
    counts = spectrum_counts(g)
    configuration = None
    if with_configuration:
        configuration = configuration_from_partition(alleles_partition(g), g.n).a
    return ReplicateProbe(
        tau=g.tau,
        end_time=end,
        mutations=traj.at("M", end),
        open_mutations=traj.at("M_open", end),
        tree_length=traj.L(end),
        final_blocks=traj.at("N", end),
        spectrum_sites=counts["spectrum_sites"],
        spectrum_alleles=counts["spectrum_alleles"],
        configuration=configuration,
        closed_probes={t: (traj.at("M_closed", t), traj.at("M", t), traj.L(t)) for t in t_points},
        open_deficits={s: traj.sup_open_deficit(s) for s in s_points},
    )


def _run_chunk(measure, n, gamma, stop, master_seed, indices, t_points, s_points, with_configuration):
    """Worker entry point (module level so that it pickles)."""
    sim = Simulator(measure)
    out = []
    for idx in indices:
        g = sim.run(n, gamma, replicate_seed(master_seed, n, idx), stop)
        out.append((idx, probe_genealogy(g, t_points, s_points, with_configuration)))
    return out


def collect_probes(
    spec: ExperimentSpec,
    n: int,
    stop: StopRule,
    t_points: Sequence[float] = (),
    s_points: Sequence[float] = (),
    with_configuration: bool = False,
    workers: Optional[int] = None,
) -> Dict[int, ReplicateProbe]:
    indices = list(range(spec.replicate_offset, spec.replicate_offset + spec.replicates))
    workers = workers or config.WORKERS
    args = (spec.measure, n, spec.gamma, stop, spec.master_seed)
    extra = (tuple(t_points), tuple(s_points), with_configuration)
    if workers <= 1 or len(indices) < 2:
        results = _run_chunk(*args, indices, *extra)
    else:
        size = max(1, len(indices) // (workers * 4))
        chunks = [indices[i:i + size] for i in range(0, len(indices), size)]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_chunk, *args, chunk, *extra) for chunk in chunks]
            for future in futures:
                results.extend(future.result())
    return dict(sorted(results))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryStats:
    n: int
    statistic: str
    estimate: Optional[float]
    stderr: Optional[float]
    median: Optional[float]
    replicates: int


def summarize(values: Sequence[float]) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """(mean, standard error, median) over the finite values."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return None, None, None
    mean = float(np.mean(arr))
    stderr = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else None
    return mean, stderr, float(np.median(arr))


@dataclass
class ExperimentResult:
    statistic: str
    master_seed: int
    values: Dict[int, Dict[int, float]]  # n -> replicate index -> value
    labels: Dict[int, Dict[int, str]] = field(default_factory=dict)  # allele configurations

    def summary(self) -> List[SummaryStats]:
        rows = []
        for n in sorted(self.values):
            per_rep = self.values[n]
            mean, stderr, median = summarize([per_rep[i] for i in sorted(per_rep)])
            rows.append(SummaryStats(n, self.statistic, mean, stderr, median, len(per_rep)))
        return rows

    def replicate_rows(self) -> List[Dict]:
        rows = []
        for n in sorted(self.values):
            for idx in sorted(self.values[n]):
                row = {"n": n, "replicate": idx, "statistic": self.statistic, "value": self.values[n][idx]}
                if n in self.labels:
                    row["configuration"] = self.labels[n][idx]
                rows.append(row)
        return rows

    def histogram(self, n: int) -> Counter:
        return Counter(tuple(int(x) for x in label.split()) for label in self.labels.get(n, {}).values())


def _statistic_value(name: str, probe: ReplicateProbe, n: int, gamma: float, ell_n: Optional[float]) -> float:
    if name == "tau":
        return probe.tau if probe.tau is not None else math.nan
    if name == "tree_length":
        return probe.tree_length
    if name == "mutations":
        return float(probe.mutations)
    if name == "open_mutations":
        return float(probe.open_mutations)
    if name == "closed_mutations":
        return float(probe.mutations - probe.open_mutations)
    if name == "open_fraction":
        return probe.open_mutations / probe.mutations if probe.mutations else math.nan
    if name == "length_ratio":
        return probe.mutations / (gamma * ell_n)
    if name == "open_length_ratio":
        return probe.open_mutations / (gamma * ell_n)
    if name == "harmonic_length_ratio":
        # E int_0^tau N du = 2 H_{n-1} for Kingman
        harmonic = math.fsum(1.0 / j for j in range(1, n))
        return probe.mutations / (2.0 * gamma * harmonic) if harmonic else math.nan
    if name == "allele_partition_histogram":
        return float(sum(probe.configuration))
    prefix, _, r = name.partition(":")
    spectrum = probe.spectrum_sites if prefix == "spectrum_sites" else probe.spectrum_alleles
    return float(spectrum.get(int(r), 0))


def _needs_ell(statistic: str) -> bool:
    return statistic in ("length_ratio", "open_length_ratio")


def ell_value(m: CoalescentMeasure, n: int, t: Optional[float] = None) -> float:
    return SpeedSolver(PsiEvaluator(m), n).ell(t)


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> ExperimentResult:
    spec.validate()
    if spec.statistic in ("length_ratio", "open_length_ratio", "harmonic_length_ratio") and spec.gamma == 0:
        raise BadParameter(f"{spec.statistic} needs gamma > 0")
    histogram = spec.statistic == "allele_partition_histogram"
    logger.info(
        f"experiment {spec.statistic}: {spec.measure.family}, n_grid={list(spec.n_grid)}, "
        f"{spec.replicates} replicates from index {spec.replicate_offset}, seed {spec.master_seed}"
    )
    values: Dict[int, Dict[int, float]] = {}
    labels: Dict[int, Dict[int, str]] = {}
    for n in spec.n_grid:
        ell_n = ell_value(spec.measure, n) if _needs_ell(spec.statistic) else None
        probes = collect_probes(spec, n, spec.stop, with_configuration=histogram, workers=workers)
        values[n] = {i: _statistic_value(spec.statistic, p, n, spec.gamma, ell_n) for i, p in probes.items()}
        if histogram:
            labels[n] = {i: " ".join(str(x) for x in p.configuration) for i, p in probes.items()}
        logger.info(f"n={n}: {len(probes)} replicates done")
    return ExperimentResult(spec.statistic, spec.master_seed, values, labels)


def merge_results(a: ExperimentResult, b: ExperimentResult) -> ExperimentResult:
    """Union of two results over disjoint replicate ranges."""
    if a.statistic != b.statistic or a.master_seed != b.master_seed:
        raise BadParameter("can only merge results of the same statistic and master seed")
    values = {n: dict(v) for n, v in a.values.items()}
    labels = {n: dict(v) for n, v in a.labels.items()}
    for n, per_rep in b.values.items():
        target = values.setdefault(n, {})
        overlap = set(target) & set(per_rep)
        if overlap:
            raise BadParameter(f"replicate ranges overlap at n={n}: {sorted(overlap)[:5]}")
        target.update(per_rep)
    for n, per_rep in b.labels.items():
        labels.setdefault(n, {}).update(per_rep)
    ordered = {n: dict(sorted(values[n].items())) for n in sorted(values)}
    ordered_labels = {n: dict(sorted(labels[n].items())) for n in sorted(labels)}
    return ExperimentResult(a.statistic, a.master_seed, ordered, ordered_labels)


def ewens_tv(result: ExperimentResult, n: int, gamma: float) -> float:
    return total_variation(result.histogram(n), ewens_distribution(n, gamma))


# ---------------------------------------------------------------------------
# theorem checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckLine:
    name: str
    value: Optional[float]
    bound: Optional[str]
    passed: Optional[bool]


@dataclass
class TheoremVerdict:
    which: str
    applicable: bool = True
    checks: List[CheckLine] = field(default_factory=list)
    estimates: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> Optional[bool]:
        if not self.applicable:
            return None
        decided = [c.passed for c in self.checks if c.passed is not None]
        return all(decided) if decided else None

    def check(self, name: str, value, bound: str, passed: Optional[bool]):
        self.checks.append(CheckLine(name, value, bound, passed))


def _nonincreasing(seq: Sequence[float]) -> bool:
    return all(b <= a for a, b in zip(seq, seq[1:]))


def _quartiles(values: Sequence[float]) -> Dict[str, Optional[float]]:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return {"median": None, "q1": None, "q3": None, "mean": None}
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "mean": float(np.mean(arr))}


def _require_cdi(spec: ExperimentSpec, which: str):
    verdict = comes_down_check(spec.measure)
    if verdict.cdi != "yes":
        raise CDIRequired(f"{which} needs a measure that comes down from infinity ({spec.measure.family}: {verdict.cdi})")


def theorem_check(spec: ExperimentSpec, which: str, workers: Optional[int] = None) -> TheoremVerdict:
    spec.validate()
    if which not in THEOREMS:
        raise BadParameter(f"unknown check '{which}', expected one of {', '.join(THEOREMS)}")
    if which in ("T3_family_counts", "T4_partial_time", "C7_spectrum"):
        _require_cdi(spec, which)
    verdict = TheoremVerdict(which)
    if spec.gamma == 0 and which != "P2_speed_envelope":
        # ratios against gamma * length are 0/0
        verdict.applicable = False
        verdict.check("gamma", 0.0, "gamma > 0", None)
        return verdict
    logger.info(f"{which}: {spec.measure.family}, n_grid={list(spec.n_grid)}, {spec.replicates} replicates")
    handler = {
        "T1_closed_fraction": _check_closed_fraction,
        "P2_speed_envelope": _check_speed_envelope,
        "T3_family_counts": _check_family_counts,
        "T4_partial_time": _check_partial_time,
        "C7_spectrum": _check_spectrum,
    }[which]
    handler(spec, verdict, workers)
    logger.info(f"{which}: passed={verdict.passed}")
    return verdict


def _check_closed_fraction(spec, verdict, workers):
    t_grid = sorted(spec.t_grid)
    for n in spec.n_grid:
        probes = collect_probes(spec, n, UntilTime(t_grid[-1]), t_points=t_grid, workers=workers)
        ratios, tails = [], []
        for t in t_grid:
            r = [p.closed_probes[t][0] / (spec.gamma * p.closed_probes[t][2]) for p in probes.values()]
            tail = [
                float(m > 0 and mc / m >= t ** TAIL_BETA)
                for mc, m, _ in (p.closed_probes[t] for p in probes.values())
            ]
            mean_ratio = summarize(r)[0]
            ratios.append(mean_ratio)
            tails.append(float(np.mean(tail)))
            verdict.estimates.append({"n": n, "t": t, "closed_ratio_mean": mean_ratio, "tail_frequency": tails[-1]})
        # t increases along the grid, so "nonincreasing as t decreases" is nondecreasing here
        verdict.check(f"n={n} E[M_c/(gamma L)] nonincreasing as t decreases", None, "monotone",
                      _nonincreasing(ratios[::-1]))
        verdict.check(f"n={n} P(M_c/M >= t^{TAIL_BETA:.3g}) nonincreasing as t decreases", None, "monotone",
                      _nonincreasing(tails[::-1]))
        bound = spec.tolerance("T1_max_ratio_smallest_t")
        verdict.check(f"n={n} E[M_c/(gamma L)] at t={t_grid[0]}", ratios[0], f"<= {bound}", ratios[0] <= bound)


def _check_speed_envelope(spec, verdict, workers):
    s_grid = sorted(spec.s_grid)
    bound = spec.tolerance("P2_max_exceedance")
    for n in spec.n_grid:
        probes = collect_probes(spec, n, UntilTime(s_grid[-1]), s_points=s_grid, workers=workers)
        freqs = []
        for s in s_grid:
            threshold = ENVELOPE_CONSTANT * s ** ENVELOPE_ALPHA
            freq = float(np.mean([p.open_deficits[s] > threshold for p in probes.values()]))
            freqs.append(freq)
            verdict.estimates.append({"n": n, "s": s, "threshold": threshold, "exceedance": freq})
            verdict.check(f"n={n} P(sup deficit > {ENVELOPE_CONSTANT:g} s^1/3) at s={s}", freq, f"<= {bound}",
                          freq <= bound)
        verdict.check(f"n={n} exceedance decreases as s decreases", None, "monotone", _nonincreasing(freqs[::-1]))


def _ratio_checks(spec, verdict, rows, band_key, label):
    band = spec.tolerance(band_key)
    for key in ("M/(gamma ell)", "M_o/(gamma ell)"):
        medians = [row[key]["median"] for row in rows]
        last = medians[-1]
        verdict.check(f"median {key} at n={rows[-1]['n']}{label}", last, f"in [{1 - band:g}, {1 + band:g}]",
                      last is not None and abs(last - 1.0) <= band)
        gaps = [abs(m - 1.0) for m in medians if m is not None]
        verdict.check(f"|median {key} - 1| nonincreasing in n", None, "monotone",
                      len(gaps) == len(medians) and _nonincreasing(gaps))


def _check_family_counts(spec, verdict, workers):
    rows = []
    for n in spec.n_grid:
        ell_n = ell_value(spec.measure, n)
        probes = collect_probes(spec, n, UntilTau(), workers=workers)
        row = {
            "n": n,
            "ell": ell_n,
            "M/(gamma ell)": _quartiles([p.mutations / (spec.gamma * ell_n) for p in probes.values()]),
            "M_o/(gamma ell)": _quartiles([p.open_mutations / (spec.gamma * ell_n) for p in probes.values()]),
            "M_o/M": _quartiles([p.open_mutations / p.mutations if p.mutations else math.nan
                                 for p in probes.values()]),
        }
        rows.append(row)
        verdict.estimates.append(row)
    _ratio_checks(spec, verdict, rows, "T3_band", "")
    floor = spec.tolerance("T3_open_fraction_min")
    last = rows[-1]["M_o/M"]["median"]
    verdict.check(f"median M_o/M at n={rows[-1]['n']}", last, f">= {floor}", last is not None and last >= floor)


def _check_partial_time(spec, verdict, workers):
    if not spec.t_sequence:
        raise BadParameter("T4_partial_time needs a t_sequence")
    seq = list(spec.t_sequence)
    if len(seq) == 1:
        seq = seq * len(spec.n_grid)
    if len(seq) != len(spec.n_grid):
        raise BadParameter("t_sequence must have one entry per n in n_grid (or a single entry)")
    floor = spec.tolerance("divergence_floor")
    rows = []
    for n, t in zip(spec.n_grid, seq):
        ell_t = ell_value(spec.measure, n, t)
        if ell_t <= floor:
            raise BadParameter(f"ell_t(n) = {ell_t:.4g} at n={n}, t={t} does not exceed the divergence floor {floor}")
        probes = collect_probes(spec, n, UntilTime(t), workers=workers)
        row = {
            "n": n,
            "t": t,
            "ell_t": ell_t,
            "M/(gamma ell)": _quartiles([p.mutations / (spec.gamma * ell_t) for p in probes.values()]),
            "M_o/(gamma ell)": _quartiles([p.open_mutations / (spec.gamma * ell_t) for p in probes.values()]),
        }
        rows.append(row)
        verdict.estimates.append(row)
    _ratio_checks(spec, verdict, rows, "T4_band", " (partial time)")


def _check_spectrum(spec, verdict, workers):
    for n in spec.n_grid:
        ell_n = ell_value(spec.measure, n)
        beta = spec.beta if spec.beta is not None else math.log(ell_n) / math.log(n)
        probes = collect_probes(spec, n, UntilTauStar(), workers=workers)
        for r in range(1, spec.r_max + 1):
            observed = summarize([p.spectrum_sites.get(r, 0) / (spec.gamma * ell_n) for p in probes.values()])[0]
            predicted = predicted_spectrum(beta, r, 1.0)
            key = f"C7_band_r{r}"
            band = spec.tolerance(key if key in DEFAULT_TOLERANCES else "C7_band")
            rel = abs(observed / predicted - 1.0)
            verdict.estimates.append({"n": n, "r": r, "beta": beta, "observed": observed, "predicted": predicted})
            if n == spec.n_grid[-1]:
                verdict.check(f"M_{r}/(gamma ell) at n={n} vs beta Gamma(r-beta)/r!", observed,
                              f"within {band:.0%} of {predicted:.4f}", rel <= band)


# ---------------------------------------------------------------------------
# martingale diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MartingaleResult:
    mean: float
    stderr: Optional[float]
    replicates: int
    form: str


def _chain_tail(m: CoalescentMeasure, n: int) -> np.ndarray:
    """tail[b] = sum_{j=b+1}^{n} 1 / psi-bar(j)"""
    inv = np.zeros(n + 2)
    for j in range(2, n + 1):
        inv[j] = 1.0 / block_drift(m, j)
    tail = np.zeros(n + 1)
    for b in range(n - 1, 0, -1):
        tail[b] = tail[b + 1] + inv[b + 1]
    return tail


def martingale_diagnostic(
    m: CoalescentMeasure, n: int, t: float, replicates: int, seed: int, form: str = "chain", workers=None
) -> MartingaleResult:
    """Monte Carlo mean of M-bar at t ^ tau.

    chain:    sum_{j=N+1}^{n} 1 / psi-bar(j) - t ^ tau
    integral: int_N^n dq / psi-bar(q) - t ^ tau
    """
    if not m.is_lambda_type:
        raise BarUnsupported(f"psi-bar is defined for Lambda-type measures only, not {m.family}")
    if form not in ("chain", "integral"):
        raise BadParameter(f"unknown martingale form '{form}'")
    if replicates < 1:
        raise ZeroReplicates(f"replicates must be >= 1, got {replicates}")
    if t < 0:
        raise BadParameter(f"t must be nonnegative, got {t}")
    if t == 0:
        return MartingaleResult(0.0, 0.0, replicates, form)

    spec = ExperimentSpec(m, (n,), 0.0, replicates, seed, statistic="tau", stop=UntilTime(t)).validate()
    probes = collect_probes(spec, n, UntilTime(t), workers=workers)
    if form == "chain":
        tail = _chain_tail(m, n)

        def compensator(b):
            return tail[b]
    else:
        ev = PsiEvaluator(m)

        def compensator(b):
            if b >= n:
                return 0.0
            value, _ = integrate.quad(lambda q: 1.0 / ev(q, "bar"), b, n, epsrel=1e-10, limit=200)
            return value

    values = []
    for p in probes.values():
        stopped = min(t, p.tau) if p.tau is not None else t
        values.append(compensator(p.final_blocks) - stopped)
    mean, stderr, _ = summarize(values)
    logger.info(f"martingale ({form}) n={n} t={t}: mean {mean:.4g} +- {stderr}")
    return MartingaleResult(mean, stderr, replicates, form)


def with_offset(spec: ExperimentSpec, offset: int, replicates: int) -> ExperimentSpec:
    return replace(spec, replicate_offset=offset, replicates=replicates)
