"""
Marked genealogy: the append-only event log of one n-sample run, the lineage
bookkeeping (open / closed states, leaf sets) and the structured-text
export / import format.

Lineage ids: leaves are 1..n, every merger introduces a fresh id. Mutation
ids are consecutive from 1 in arrival order.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from ..core.errors import (
    BadParameter,
    ConfigError,
    InactiveLineage,
    NonmonotoneTime,
    UnknownLineage,
)
from ..schemas.schemas import EventDocument, GenealogyDocument

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergerEvent:
    time: float
    participants: Tuple[int, ...]
    new_id: int
    kind = "merger"


@dataclass(frozen=True)
class MutationEvent:
    time: float
    lineage: int
    mutation_id: int
    kind = "mutation"


Event = Union[MergerEvent, MutationEvent]


@dataclass(frozen=True)
class MarkedGenealogy:
    n: int
    events: Tuple[Event, ...] = field(repr=False)
    tau: Optional[float] = None
    tau_star: Optional[float] = None
    end_time: float = 0.0
    gamma: Optional[float] = None
    seed: Optional[int] = None

    @property
    def mutation_count(self) -> int:
        return sum(1 for e in self.events if e.kind == "mutation")

    @property
    def is_complete(self) -> bool:
        """Run through tau_*: the root carries a mutation."""
        return self.tau_star is not None


class UnionFind:
    """Disjoint sets over leaves 1..n with union by size, path halving and
    per-root member lists (merged small into large)."""

    def __init__(self, n: int):
        self.parent = list(range(n + 1))
        self.members: Dict[int, List[int]] = {i: [i] for i in range(1, n + 1)}

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, roots: Sequence[int]) -> int:
        big = max(roots, key=lambda r: len(self.members[r]))
        pool = self.members[big]
        for r in roots:
            if r == big:
                continue
            self.parent[r] = big
            pool.extend(self.members.pop(r))
        return big

    def size(self, root: int) -> int:
        return len(self.members[root])


class LineageTracker:
    """Active lineages of a genealogy, walked forward in time."""

    def __init__(self, n: int):
        self.n = n
        self.uf = UnionFind(n)
        self.rep: Dict[int, int] = {i: i for i in range(1, n + 1)}  # lineage id -> leaf root
        self.open: Dict[int, bool] = {i: True for i in range(1, n + 1)}
        self.next_id = n + 1
        self.introduced = set(range(1, n + 1))
        self.n_open = n

    @property
    def active_count(self) -> int:
        return len(self.rep)

    @property
    def closed_count(self) -> int:
        return len(self.rep) - self.n_open

    def check_active(self, lineage: int):
        if lineage not in self.introduced:
            raise UnknownLineage(f"lineage {lineage} was never introduced")
        if lineage not in self.rep:
            raise InactiveLineage(f"lineage {lineage} is no longer active")

    def merge(self, participants: Iterable[int], new_id: Optional[int] = None) -> int:
        participants = list(participants)
        if len(participants) < 2 or len(set(participants)) != len(participants):
            raise BadParameter(f"a merger needs >= 2 distinct lineages, got {participants}")
        for p in participants:
            self.check_active(p)
        if new_id is None:
            new_id = self.next_id
        elif new_id in self.introduced:
            raise BadParameter(f"merger reuses lineage id {new_id}")
        self.introduced.add(new_id)
        self.next_id = max(self.next_id, new_id + 1)

        # merged lineage is open iff one of its contributors is open
        any_open = False
        for p in participants:
            if self.open.pop(p):
                any_open = True
                self.n_open -= 1
        root = self.uf.union([self.rep.pop(p) for p in participants])
        self.rep[new_id] = root
        self.open[new_id] = any_open
        if any_open:
            self.n_open += 1
        return new_id

    def mutate(self, lineage: int) -> bool:
        """Mark a lineage; returns True when the mutation is open (first on its branch)."""
        self.check_active(lineage)
        was_open = self.open[lineage]
        if was_open:
            self.open[lineage] = False
            self.n_open -= 1
        return was_open

    def size(self, lineage: int) -> int:
        return self.uf.size(self.rep[lineage])

    def leaves(self, lineage: int) -> Tuple[int, ...]:
        return tuple(sorted(self.uf.members[self.rep[lineage]]))

    def active_lineages(self) -> List[int]:
        return sorted(self.rep)

    def partition(self) -> List[Tuple[int, ...]]:
        return sorted(self.leaves(lid) for lid in self.rep)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def _coerce_event(raw) -> EventDocument:
    if isinstance(raw, EventDocument):
        return raw
    if isinstance(raw, MergerEvent):
        return EventDocument(t=raw.time, kind="merger", participants=list(raw.participants), new_id=raw.new_id)
    if isinstance(raw, MutationEvent):
        return EventDocument(t=raw.time, kind="mutation", lineage=raw.lineage, mutation_id=raw.mutation_id)
    try:
        return EventDocument.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"bad event {raw}: {e.errors()[0].get('msg')}") from e


def replay(script: Iterable, n: int, end_time: Optional[float] = None, gamma=None, seed=None) -> MarkedGenealogy:
    """Build a genealogy from an explicit event list, validating every event.

    Merger ids default to the next fresh id, mutation ids to the next
    consecutive id. tau is the time the active count reaches 1 and tau_*
    the first mutation at or after it.
    """
    if n < 1:
        raise BadParameter(f"n must be >= 1, got {n}")
    tracker = LineageTracker(n)
    events: List[Event] = []
    last_t = 0.0
    next_mutation = 1
    tau = 0.0 if n == 1 else None
    tau_star = None

    for raw in script:
        doc = _coerce_event(raw)
        t = float(doc.t)
        if t < last_t:
            raise NonmonotoneTime(f"event at t={t} after t={last_t}")
        last_t = t
        if doc.kind == "merger":
            if not doc.participants:
                raise BadParameter(f"merger at t={t} names no participants")
            new_id = tracker.merge(doc.participants, doc.new_id)
            events.append(MergerEvent(t, tuple(sorted(doc.participants)), new_id))
            if tracker.active_count == 1:
                tau = t
        else:
            if doc.lineage is None:
                raise BadParameter(f"mutation at t={t} names no lineage")
            if doc.mutation_id is not None and doc.mutation_id != next_mutation:
                raise BadParameter(f"mutation id {doc.mutation_id} out of order, expected {next_mutation}")
            tracker.mutate(doc.lineage)
            events.append(MutationEvent(t, doc.lineage, next_mutation))
            next_mutation += 1
            if tau is not None and tau_star is None:
                tau_star = t

    if end_time is None:
        end_time = tau_star if tau_star is not None else last_t
    return MarkedGenealogy(
        n=n, events=tuple(events), tau=tau, tau_star=tau_star,
        end_time=float(end_time), gamma=gamma, seed=seed,
    )


# ---------------------------------------------------------------------------
# structured-text export / import
# ---------------------------------------------------------------------------

def to_document(g: MarkedGenealogy) -> GenealogyDocument:
    events = []
    for e in g.events:
        if e.kind == "merger":
            events.append(EventDocument(t=e.time, kind="merger", participants=list(e.participants), new_id=e.new_id))
        else:
            events.append(EventDocument(t=e.time, kind="mutation", lineage=e.lineage, mutation_id=e.mutation_id))
    return GenealogyDocument(
        n=g.n, gamma=g.gamma, seed=g.seed, events=events,
        tau=g.tau, tau_star=g.tau_star, end_time=g.end_time,
    )


def export_genealogy(g: MarkedGenealogy) -> str:
    return to_document(g).model_dump_json(exclude_none=True, indent=1)


def import_genealogy(text: str) -> MarkedGenealogy:
    """Parse an exported document and replay it; stored tau / tau_* must
    agree with the replayed ones."""
    try:
        doc = GenealogyDocument.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"bad genealogy document: {e.errors()[0].get('msg')}") from e
    g = replay(doc.events, doc.n, end_time=doc.end_time, gamma=doc.gamma, seed=doc.seed)
    for name, stored, replayed in (("tau", doc.tau, g.tau), ("tau_star", doc.tau_star, g.tau_star)):
        if stored is not None and stored != replayed:
            logger.warning(f"stored {name} {stored} differs from replayed {replayed}")
            raise ConfigError(f"'{name}': stored {stored} but the events give {replayed}")
    return g
