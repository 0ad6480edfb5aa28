"""
Trajectory processes, family decompositions and frequency spectra derived
from a MarkedGenealogy.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy import special

from ..core.errors import BadBeta, BadParameter
from .genealogy import LineageTracker, MarkedGenealogy

logger = logging.getLogger(__name__)

ANCESTRAL_TYPE = 0
COLUMNS = ("N", "N_open", "N_closed", "M", "M_open", "M_closed")


@dataclass(frozen=True)
class TrajectoryStats:
    """Right-continuous step functions with breakpoints at the event times;
    L(t) = int_0^t N(u) du is piecewise linear."""

    times: np.ndarray = field(repr=False)
    N: np.ndarray = field(repr=False)
    N_open: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    M_open: np.ndarray = field(repr=False)
    L_at_breaks: np.ndarray = field(repr=False)
    end_time: float = 0.0

    @property
    def N_closed(self) -> np.ndarray:
        return self.N - self.N_open

    @property
    def M_closed(self) -> np.ndarray:
        return self.M - self.M_open

    def _series(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise BadParameter(f"unknown trajectory {name}")
        return getattr(self, name)

    def at(self, name: str, t: float) -> int:
        i = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return int(self._series(name)[i])

    def left(self, name: str, t: float) -> int:
        """Left limit at t (value just before any event at time t)."""
        i = max(int(np.searchsorted(self.times, t, side="left")) - 1, 0)
        return int(self._series(name)[i])

    def L(self, t: float) -> float:
        if t <= 0:
            return 0.0
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.L_at_breaks[i] + self.N[i] * (t - self.times[i]))

    def sup_open_deficit(self, s: float) -> float:
        """sup_{u <= s} |1 - N_open(u) / N(u)|"""
        upto = int(np.searchsorted(self.times, s, side="right"))
        ratio = self.N_open[:upto] / self.N[:upto]
        return float(np.max(np.abs(1.0 - ratio))) if upto else 0.0

    def rows(self) -> List[Dict]:
        out = []
        for i, t in enumerate(self.times):
            row = {"t": float(t)}
            for name in COLUMNS:
                row[name] = int(self._series(name)[i])
            row["L"] = float(self.L_at_breaks[i])
            out.append(row)
        return out


def trajectories(g: MarkedGenealogy) -> TrajectoryStats:
    tracker = LineageTracker(g.n)
    times = [0.0]
    N, N_open, M, M_open = [g.n], [g.n], [0], [0]
    m_total = m_open = 0
    for e in g.events:
        if e.kind == "merger":
            tracker.merge(e.participants, e.new_id)
        else:
            m_total += 1
            if tracker.mutate(e.lineage):
                m_open += 1
        row = (tracker.active_count, tracker.n_open, m_total, m_open)
        if e.time == times[-1]:
            # simultaneous events collapse into one breakpoint
            N[-1], N_open[-1], M[-1], M_open[-1] = row
        else:
            times.append(e.time)
            for series, value in zip((N, N_open, M, M_open), row):
                series.append(value)

    t_arr = np.asarray(times, dtype=float)
    n_arr = np.asarray(N, dtype=np.int64)
    lengths = np.concatenate([[0.0], np.cumsum(n_arr[:-1] * np.diff(t_arr))])
    return TrajectoryStats(
        times=t_arr,
        N=n_arr,
        N_open=np.asarray(N_open, dtype=np.int64),
        M=np.asarray(M, dtype=np.int64),
        M_open=np.asarray(M_open, dtype=np.int64),
        L_at_breaks=lengths,
        end_time=max(g.end_time, float(t_arr[-1])),
    )


@dataclass(frozen=True)
class SitesFamily:
    mutation_id: int
    leaves: Tuple[int, ...]
    open: bool

    @property
    def size(self) -> int:
        return len(self.leaves)


@dataclass(frozen=True)
class FamilyDecomposition:
    sites_families: List[SitesFamily]
    alleles_partition: List[Tuple[int, ...]]
    spectrum_sites: Dict[int, int]
    spectrum_alleles: Dict[int, int]


def sites_families(g: MarkedGenealogy) -> List[SitesFamily]:
    """One family per mutation: the leaves below its lineage at arrival."""
    tracker = LineageTracker(g.n)
    families = []
    for e in g.events:
        if e.kind == "merger":
            tracker.merge(e.participants, e.new_id)
        else:
            leaves = tracker.leaves(e.lineage)
            families.append(SitesFamily(e.mutation_id, leaves, tracker.mutate(e.lineage)))
    return families


def _family_sizes(g: MarkedGenealogy) -> List[Tuple[int, bool]]:
    tracker = LineageTracker(g.n)
    sizes = []
    for e in g.events:
        if e.kind == "merger":
            tracker.merge(e.participants, e.new_id)
        else:
            size = tracker.size(e.lineage)
            sizes.append((size, tracker.mutate(e.lineage)))
    return sizes


def allele_types(g: MarkedGenealogy) -> Dict[int, int]:
    """leaf -> id of the first mutation on its path to the root (0 if none).

    Walks the log backwards once, pushing each lineage's type down to its
    children; a mutation overrides what it inherited from above.
    """
    type_of: Dict[int, int] = {}
    for e in reversed(g.events):
        if e.kind == "mutation":
            type_of[e.lineage] = e.mutation_id
        else:
            inherited = type_of.pop(e.new_id, ANCESTRAL_TYPE)
            for p in e.participants:
                type_of[p] = inherited
    return {leaf: type_of.get(leaf, ANCESTRAL_TYPE) for leaf in range(1, g.n + 1)}


def _blocks(types: Dict[int, int]) -> Dict[int, List[int]]:
    blocks: Dict[int, List[int]] = {}
    for leaf, allele in types.items():
        blocks.setdefault(allele, []).append(leaf)
    return blocks


def alleles_partition(g: MarkedGenealogy) -> List[Tuple[int, ...]]:
    if not g.is_complete:
        logger.debug("partial genealogy: mutation-free leaves share the ancestral type")
    return sorted(tuple(sorted(leaves)) for leaves in _blocks(allele_types(g)).values())


def spectrum_counts(g: MarkedGenealogy) -> Dict[str, Dict[int, int]]:
    """Sparse spectra: sites r -> M_r, alleles r -> M_r^o (open mutations
    counted by the size of their allelic block)."""
    sites = Counter(size for size, _ in _family_sizes(g))
    blocks = _blocks(allele_types(g))
    alleles = Counter(len(leaves) for allele, leaves in blocks.items() if allele != ANCESTRAL_TYPE)
    return {
        "spectrum_sites": dict(sorted(sites.items())),
        "spectrum_alleles": dict(sorted(alleles.items())),
    }


def decompose(g: MarkedGenealogy) -> FamilyDecomposition:
    counts = spectrum_counts(g)
    return FamilyDecomposition(
        sites_families=sites_families(g),
        alleles_partition=alleles_partition(g),
        spectrum_sites=counts["spectrum_sites"],
        spectrum_alleles=counts["spectrum_alleles"],
    )


def predicted_spectrum(beta: float, r: int, ell_value: float) -> float:
    """beta Gamma(r - beta) ell / r!"""
    if not (0.0 < beta < 1.0):
        raise BadBeta(f"beta must lie in (0, 1), got {beta}")
    if r < 1:
        raise BadParameter(f"r must be a positive integer, got {r}")
    if ell_value <= 0:
        raise BadParameter(f"ell must be positive, got {ell_value}")
    return ell_value * math.exp(math.log(beta) + special.gammaln(r - beta) - special.gammaln(r + 1))
