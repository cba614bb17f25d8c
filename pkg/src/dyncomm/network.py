"""Sliding windows and PMI-weighted step networks.

Each window of the event log becomes one undirected graph over accounts and
external entities with three edge classes:

* ``MentionReshare`` between accounts (mentions and reshares pooled),
* ``AccountExternal`` from an account to an entity it linked to,
* ``InferredExternal`` between two entities linked by a common account.

Raw frequencies are turned into weights with ``log(1 + p(a,b) / (p(a) p(b)))``.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
import statistics
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import networkx as nx

from .events import EntityKind, EntityRef, EventRecord, Resolver, iter_entities

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = timedelta(days=14)
DEFAULT_STRIDE = timedelta(days=7)


class EdgeTag(str, enum.Enum):
    MENTION_RESHARE = "MentionReshare"
    ACCOUNT_EXTERNAL = "AccountExternal"
    INFERRED_EXTERNAL = "InferredExternal"


def as_utc(value: date | datetime) -> datetime:
    if isinstance(value, datetime):
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)
    return datetime(value.year, value.month, value.day, tzinfo=timezone.utc)


@dataclass(frozen=True)
class WindowSpec:
    start: date | datetime
    end: date | datetime
    length: timedelta = DEFAULT_LENGTH
    stride: timedelta = DEFAULT_STRIDE

    def validate(self) -> None:
        if self.length <= timedelta(0):
            raise ValueError("window length must be positive")
        if not timedelta(0) < self.stride <= self.length:
            raise ValueError("window stride must satisfy 0 < stride <= length")
        if not as_utc(self.start) < as_utc(self.end):
            raise ValueError("window start must precede end")


@dataclass(frozen=True)
class Window:
    index: int
    start: datetime
    end: datetime

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts < self.end


def make_windows(spec: WindowSpec) -> list[Window]:
    """Full windows starting at ``start + i * stride`` that fit before ``end``."""
    spec.validate()
    start, end = as_utc(spec.start), as_utc(spec.end)
    windows = []
    i = 0
    while start + i * spec.stride + spec.length <= end:
        lo = start + i * spec.stride
        windows.append(Window(i, lo, lo + spec.length))
        i += 1
    return windows


def events_in(log: Iterable[EventRecord], window: Window) -> list[EventRecord]:
    return [r for r in log if window.contains(r.timestamp)]


def pmi_weight(p_ab: float, p_a: float, p_b: float) -> float:
    """Natural-log PMI variant ``log(1 + p_ab / (p_a * p_b))``."""
    if p_a <= 0 or p_b <= 0:
        raise ValueError("marginal probabilities must be positive")
    if p_ab < 0:
        raise ValueError("joint probability must be nonnegative")
    return math.log1p(p_ab / (p_a * p_b))


@dataclass(frozen=True)
class EdgeFilterParams:
    k: float = 2.0

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError("k must be >= 0")


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass
class InteractionCounts:
    """Raw frequencies behind every p(.) term of one window.

    ``pair_mr`` and ``account_mr`` count pooled mention/reshare interactions
    (one per author/target pair per event). ``account_url`` counts URL-bearing
    events per (account, entity) and ``entity_accounts`` records which
    accounts linked each entity.
    """

    pair_mr: Counter = field(default_factory=Counter)
    account_mr: Counter = field(default_factory=Counter)
    total_mr: int = 0
    account_url: Counter = field(default_factory=Counter)
    author_url_events: Counter = field(default_factory=Counter)
    entity_url_events: Counter = field(default_factory=Counter)
    entity_accounts: dict = field(default_factory=lambda: defaultdict(set))
    total_url_events: int = 0

    @property
    def accounts_with_urls(self) -> set:
        return set(self.author_url_events)


def count_interactions(events: Iterable[EventRecord], resolver: Resolver | None = None) -> InteractionCounts:
    counts = InteractionCounts()
    for r in events:
        entities = list(iter_entities(r, resolver))
        targets = r.interaction_targets()
        # accounts embedded in platform-hosted media URLs are pooled with mentions
        for ref in entities:
            if ref.kind is EntityKind.ACCOUNT and ref.id != r.author and ref.id not in targets:
                targets.append(ref.id)
        for t in targets:
            counts.pair_mr[_pair(r.author, t)] += 1
            counts.account_mr[r.author] += 1
            counts.account_mr[t] += 1
            counts.total_mr += 1
        externals = [ref for ref in entities if ref.is_external]
        if not externals:
            continue
        counts.total_url_events += 1
        counts.author_url_events[r.author] += 1
        for ref in externals:
            counts.account_url[(r.author, ref)] += 1
            counts.entity_url_events[ref] += 1
            counts.entity_accounts[ref].add(r.author)
    return counts


@dataclass(frozen=True)
class Edge:
    u: EntityRef
    v: EntityRef
    tag: EdgeTag
    weight: float


@dataclass(frozen=True)
class StepNetwork:
    index: int
    window: Window | None
    nodes: frozenset
    edges: tuple[Edge, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def edge_map(self) -> dict[tuple[EntityRef, EntityRef], Edge]:
        return {_pair(e.u, e.v): e for e in self.edges}

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(self.nodes))
        for e in self.edges:
            g.add_edge(e.u, e.v, weight=e.weight, tag=e.tag.value)
        return g

    @classmethod
    def from_edges(cls, index: int, window: Window | None, edges: Iterable[Edge]) -> "StepNetwork":
        edges = tuple(sorted(edges, key=lambda e: (e.u, e.v)))
        nodes = frozenset(n for e in edges for n in (e.u, e.v))
        return cls(index, window, nodes, edges)


def _keeps_single_account(ref: EntityRef) -> bool:
    return ref.kind is EntityKind.SOCIAL_PROFILE


def build_step_network(
    log: Iterable[EventRecord],
    window: Window,
    resolver: Resolver | None = None,
    filter: EdgeFilterParams = EdgeFilterParams(),
) -> StepNetwork:
    """Build the PMI-weighted network for the events inside ``window``.

    Video channels and websites linked by a single account are dropped
    (social profiles are kept), inferred external-external edges below
    ``mean + k * std`` of that class are removed, and nodes left without
    edges are discarded.
    """
    counts = count_interactions(events_in(log, window), resolver)
    edges: list[Edge] = []

    for (a, b), n in counts.pair_mr.items():
        w = pmi_weight(
            n / counts.total_mr,
            counts.account_mr[a] / counts.total_mr,
            counts.account_mr[b] / counts.total_mr,
        )
        edges.append(Edge(*_pair(EntityRef.account(a), EntityRef.account(b)),
                          EdgeTag.MENTION_RESHARE, w))

    retained = {
        ref for ref, accounts in counts.entity_accounts.items()
        if len(accounts) >= 2 or _keeps_single_account(ref)
    }
    n_url = counts.total_url_events
    for (a, ref), n in counts.account_url.items():
        if ref not in retained:
            continue
        w = pmi_weight(n / n_url, counts.author_url_events[a] / n_url,
                       counts.entity_url_events[ref] / n_url)
        edges.append(Edge(*_pair(EntityRef.account(a), ref), EdgeTag.ACCOUNT_EXTERNAL, w))

    by_account: dict[str, list[EntityRef]] = defaultdict(list)
    for ref in sorted(retained):
        for a in counts.entity_accounts[ref]:
            by_account[a].append(ref)
    co = Counter()
    for refs in by_account.values():
        for x, y in itertools.combinations(refs, 2):
            co[(x, y)] += 1
    n_acc = len(counts.accounts_with_urls)
    inferred = []
    for (x, y), n in co.items():
        w = pmi_weight(n / n_acc, len(counts.entity_accounts[x]) / n_acc,
                       len(counts.entity_accounts[y]) / n_acc)
        inferred.append(Edge(x, y, EdgeTag.INFERRED_EXTERNAL, w))
    edges.extend(filter_inferred(inferred, filter.k))

    net = StepNetwork.from_edges(window.index, window, edges)
    logger.debug("step %d: %d nodes, %d edges", window.index, len(net.nodes), len(net.edges))
    return net


CUT_TOLERANCE = 1e-12


def filter_inferred(edges: Sequence[Edge], k: float) -> list[Edge]:
    """Keep edges whose weight is at least ``mean + k * pstdev`` of ``edges``."""
    if not edges:
        return []
    weights = [e.weight for e in edges]
    if max(weights) == min(weights):
        return list(edges)
    cut = statistics.fmean(weights) + k * statistics.pstdev(weights)
    # weights sitting exactly on the cut can land an ulp either side of it
    cut -= CUT_TOLERANCE * max(1.0, abs(cut))
    return [e for e in edges if e.weight >= cut]


def build_step_networks(log: Sequence[EventRecord], windows: Iterable[Window],
                        resolver: Resolver | None = None,
                        filter: EdgeFilterParams = EdgeFilterParams()) -> list[StepNetwork]:
    return [build_step_network(log, w, resolver, filter) for w in windows]


DEFAULT_SCALES = tuple(timedelta(days=d) for d in range(1, 7)) + tuple(
    timedelta(weeks=w) for w in range(1, 9)
)


def activity_curve(
    log: Sequence[EventRecord],
    period: tuple[date | datetime, date | datetime],
    scales: Iterable[timedelta] = DEFAULT_SCALES,
) -> dict[timedelta, float]:
    """Mean fraction of accounts active per interval, for each interval length.

    The account universe is every author in ``log``. Each scale splits
    ``period`` into consecutive full intervals; an account is active in an
    interval if it authored at least one event there.
    """
    universe = {r.author for r in log}
    if not universe:
        raise ValueError("activity curve needs at least one account")
    start, end = as_utc(period[0]), as_utc(period[1])
    span = end - start
    active_by_event = [(r.timestamp, r.author) for r in log if start <= r.timestamp < end]
    curve = {}
    for scale in scales:
        if scale <= timedelta(0) or scale > span:
            raise ValueError(f"scale {scale} does not fit in the period")
        n = span // scale
        buckets: list[set] = [set() for _ in range(n)]
        for ts, author in active_by_event:
            i = (ts - start) // scale
            if i < n:
                buckets[i].add(author)
        curve[scale] = statistics.fmean(len(b) / len(universe) for b in buckets)
    return curve
