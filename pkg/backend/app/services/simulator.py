"""
Event-driven simulation of the marked n-genealogy.

Lambda-type measures (the Kingman atom included) run a Gillespie scheme on
the block count: total rate lambda_b, merger size k by CDF inversion, then a
uniform k-subset of the active lineages. Discrete Xi measures run the
Poisson paint-box construction directly, with the Kingman atom as a separate
pairwise clock. Mutations arrive at rate gamma per lineage.

Per-event draw order: waiting time, event type, merger size (or colouring),
subset, mutation target.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from ..core import config
from ..core.errors import (
    BadParameter,
    GammaZeroWithTauStar,
    NonTermination,
    UnsupportedMeasure,
)
from ..schemas.schemas import StopRuleModel
from .genealogy import MarkedGenealogy, MergerEvent, MutationEvent
from .measures import CoalescentMeasure, LambdaRateModel, XiAtoms

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1
REJECTION_SUBSET_MAX = 32


@dataclass(frozen=True)
class UntilTau:
    kind = "tau"


@dataclass(frozen=True)
class UntilTauStar:
    kind = "tau_star"


@dataclass(frozen=True)
class UntilTime:
    time: float
    kind = "time"


@dataclass(frozen=True)
class UntilBlocks:
    blocks: int
    kind = "blocks"


StopRule = Union[UntilTau, UntilTauStar, UntilTime, UntilBlocks]


def parse_stop(text: Union[str, StopRuleModel, None]) -> StopRule:
    """'tau', 'tau-star', 'time=T', 'blocks=B' (or the document form)."""
    if text is None:
        return UntilTau()
    if isinstance(text, StopRuleModel):
        kind, value = text.kind, text.value
    else:
        kind, _, value = text.strip().lower().partition("=")
        kind = kind.strip().replace("-", "_")
        value = value.strip() or None
    if kind == "tau":
        return UntilTau()
    if kind == "tau_star":
        return UntilTauStar()
    if kind in ("time", "blocks"):
        if value is None:
            raise BadParameter(f"stop rule '{kind}' needs a value, e.g. {kind}=1")
        try:
            number = float(value)
        except ValueError as e:
            raise BadParameter(f"bad stop value '{value}'") from e
        if kind == "time":
            if number < 0:
                raise BadParameter(f"stop time must be nonnegative, got {number}")
            return UntilTime(number)
        if number < 1 or number != int(number):
            raise BadParameter(f"stop blocks must be a positive integer, got {value}")
        return UntilBlocks(int(number))
    raise BadParameter(f"unknown stop rule '{text}'")


def stop_to_model(stop: StopRule) -> StopRuleModel:
    value = getattr(stop, "time", None)
    if isinstance(stop, UntilBlocks):
        value = float(stop.blocks)
    return StopRuleModel(kind=stop.kind, value=value)


def _sample_subset(rng: np.random.Generator, b: int, k: int) -> List[int]:
    """k distinct indices out of range(b)."""
    if k >= b:
        return list(range(b))
    if k <= REJECTION_SUBSET_MAX and 4 * k <= b:
        chosen = set()
        while len(chosen) < k:
            chosen.add(int(rng.integers(b)))
        return sorted(chosen)
    return sorted(int(i) for i in rng.choice(b, size=k, replace=False))


class _LambdaMechanism:
    def __init__(self, m: CoalescentMeasure):
        self.model = LambdaRateModel(m)

    def rate(self, b: int) -> float:
        return self.model.total(b)

    def draw(self, b: int, rng: np.random.Generator) -> List[List[int]]:
        k = self.model.sample_k(b, rng.random())
        return [_sample_subset(rng, b, k)]


class _XiMechanism:
    """Paint-box events at rate w_j / sum_i x_i^2 per atom plus a Kingman pair clock."""

    def __init__(self, m: CoalescentMeasure):
        part = m.nontrivial_part
        self.c = m.kingman_mass
        self.points = [np.cumsum(p.coordinates) for p, _ in part.atoms]
        rates = np.array([w / p.sum_squares for p, w in part.atoms])
        self.cum_rates = np.cumsum(rates)
        self.atom_rate = float(self.cum_rates[-1])

    def rate(self, b: int) -> float:
        return self.atom_rate + self.c * b * (b - 1) / 2.0

    def draw(self, b: int, rng: np.random.Generator) -> List[List[int]]:
        u = rng.random() * self.rate(b)
        if u >= self.atom_rate:
            return [_sample_subset(rng, b, 2)]
        j = min(int(np.searchsorted(self.cum_rates, u, side="right")), len(self.points) - 1)
        cum = self.points[j]
        # colour i with probability x_i, dust (index len(x)) otherwise
        colours = np.searchsorted(cum, rng.random(b), side="right")
        groups = []
        for colour in range(len(cum)):
            members = np.flatnonzero(colours == colour)
            if members.size >= 2:
                groups.append(members.tolist())
        return groups


class Simulator:
    """Reusable simulator for one measure (rate tables are cached across runs)."""

    def __init__(self, m: CoalescentMeasure, max_events: Optional[int] = None):
        self.measure = m
        self.max_events = max_events or config.MAX_EVENTS
        if m.is_lambda_type:
            self.mechanism = _LambdaMechanism(m)
        elif isinstance(m.nontrivial_part, XiAtoms):
            self.mechanism = _XiMechanism(m)
        else:
            raise UnsupportedMeasure(f"cannot simulate measure family {m.family}")

    def run(self, n: int, gamma: float, seed: int, stop: Optional[StopRule] = None) -> MarkedGenealogy:
        stop = stop or UntilTau()
        if n < 1:
            raise BadParameter(f"n must be >= 1, got {n}")
        if gamma < 0:
            raise BadParameter(f"gamma must be nonnegative, got {gamma}")
        if isinstance(stop, UntilTauStar) and gamma == 0:
            raise GammaZeroWithTauStar("tau_* never arrives when gamma = 0")
        seed = int(seed)
        if seed < 0 or seed > SEED_MASK:
            raise BadParameter(f"seed must be a 64-bit unsigned integer, got {seed}")

        rng = np.random.default_rng(seed)
        mechanism = self.mechanism
        active = list(range(1, n + 1))
        next_id = n + 1
        events = []
        mutations = 0
        t = 0.0
        tau = 0.0 if n == 1 else None
        tau_star = None
        count = 0

        while True:
            b = len(active)
            if isinstance(stop, UntilTau) and tau is not None:
                break
            if isinstance(stop, UntilTauStar) and tau_star is not None:
                break
            if isinstance(stop, UntilBlocks) and b <= stop.blocks:
                break

            merge_rate = mechanism.rate(b) if b >= 2 else 0.0
            total = merge_rate + gamma * b
            if total <= 0.0:
                # single lineage, no mutations: nothing else can happen
                if isinstance(stop, UntilTime):
                    t = stop.time
                break
            dt = rng.standard_exponential() / total
            if isinstance(stop, UntilTime) and t + dt > stop.time:
                t = stop.time
                break
            t += dt
            count += 1
            if count > self.max_events:
                raise NonTermination(
                    f"more than {self.max_events} events (t={t:.6g}, {b} lineages); "
                    "the stop rule may be unreachable for this measure"
                )

            if rng.random() * total < merge_rate:
                groups = mechanism.draw(b, rng)
                if not groups:
                    continue
                doomed = []
                for group in groups:
                    participants = tuple(sorted(active[i] for i in group))
                    events.append(MergerEvent(t, participants, next_id))
                    doomed.extend(group)
                    next_id += 1
                born = range(next_id - len(groups), next_id)
                for i in sorted(doomed, reverse=True):
                    active[i] = active[-1]
                    active.pop()
                active.extend(born)
                if len(active) == 1 and tau is None:
                    tau = t
            else:
                target = active[int(rng.integers(b))]
                mutations += 1
                events.append(MutationEvent(t, target, mutations))
                if tau is not None and tau_star is None:
                    tau_star = t

        logger.debug(f"n={n} seed={seed}: {len(events)} events, {mutations} mutations, end t={t:.6g}")
        return MarkedGenealogy(
            n=n, events=tuple(events), tau=tau, tau_star=tau_star,
            end_time=t, gamma=gamma, seed=seed,
        )


def simulate(m: CoalescentMeasure, n: int, gamma: float, seed: int, stop: Optional[StopRule] = None) -> MarkedGenealogy:
    return Simulator(m).run(n, gamma, seed, stop)
