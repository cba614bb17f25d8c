"""Consensus community detection over a pluggable stochastic detector.

The base detector is run ``runs`` times with consecutive seeds. Node pairs
are weighted by the fraction of runs that put them together, pairs below
``tau`` are dropped, and the detector is re-applied to the resulting
co-clustering graph until every run returns the same partition.
"""

from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import networkx as nx

from .network import StepNetwork

logger = logging.getLogger(__name__)

Partition = tuple[frozenset, ...]
Detector = Callable[[nx.Graph, int], Sequence[Iterable]]

_TIE_RTOL = 1e-12


def label_propagation(graph: nx.Graph, seed: int, max_sweeps: int = 200) -> list[frozenset]:
    """Seeded asynchronous label propagation on a weighted graph.

    Nodes are visited in a random order each sweep and adopt the label with
    the largest total edge weight among their neighbours; ties are broken at
    random, but a node keeps its label whenever it is already maximal.
    Singleton groups are discarded.
    """
    rng = random.Random(seed)
    nodes = sorted(graph.nodes)
    labels = {n: i for i, n in enumerate(nodes)}
    adj = {
        n: [(m, float(graph[n][m].get("weight", 1.0))) for m in sorted(graph[n]) if m != n]
        for n in nodes
    }
    for _ in range(max_sweeps):
        order = nodes[:]
        rng.shuffle(order)
        changed = False
        for n in order:
            if not adj[n]:
                continue
            tally: dict[int, float] = defaultdict(float)
            for m, w in adj[n]:
                tally[labels[m]] += w
            best = max(tally.values())
            cut = best - _TIE_RTOL * abs(best)
            candidates = sorted(lab for lab, v in tally.items() if v >= cut)
            if labels[n] in candidates:
                continue
            labels[n] = rng.choice(candidates)
            changed = True
        if not changed:
            break
    groups: dict[int, set] = defaultdict(set)
    for n, lab in labels.items():
        groups[lab].add(n)
    return [frozenset(g) for g in groups.values() if len(g) >= 2]


def _as_graph(net: StepNetwork | nx.Graph) -> nx.Graph:
    return net.to_networkx() if isinstance(net, StepNetwork) else net


def canonical(groups: Iterable[Iterable]) -> Partition:
    """Order groups by decreasing size, then by sorted membership."""
    sets = [frozenset(g) for g in groups if len(frozenset(g)) >= 2]
    return tuple(sorted(sets, key=lambda s: (-len(s), sorted(s))))


def base_detect(net: StepNetwork | nx.Graph, seed: int,
                detector: Detector = label_propagation) -> Partition:
    g = _as_graph(net)
    if g.number_of_nodes() == 0:
        return ()
    return canonical(detector(g, seed))


@dataclass(frozen=True)
class ConsensusParams:
    runs: int = 100
    tau: float = 0.5
    max_iterations: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.runs, int) and self.runs >= 1):
            raise ValueError("runs must be an integer >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not (isinstance(self.max_iterations, int) and self.max_iterations >= 1):
            raise ValueError("max_iterations must be an integer >= 1")


@dataclass(frozen=True)
class StepCommunity:
    step: int
    id: str
    members: frozenset

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class ConsensusResult:
    communities: list[StepCommunity]
    converged: bool
    iterations: int
    partitions: list[Partition] = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter(self.communities)

    def __len__(self) -> int:
        return len(self.communities)


def coclustering_weights(partitions: Sequence[Partition]) -> dict[tuple, float]:
    """Fraction of partitions in which each node pair shares a group.

    Only pairs co-clustered at least once are returned; absent pairs have
    weight 0 and every node has weight 1 with itself.
    """
    counts: Counter = Counter()
    for part in partitions:
        for group in part:
            members = sorted(group)
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    counts[(a, b)] += 1
    n = len(partitions)
    return {pair: c / n for pair, c in counts.items()}


def consensus_graph(weights: dict[tuple, float], tau: float) -> nx.Graph:
    g = nx.Graph()
    for (a, b), w in sorted(weights.items()):
        if w >= tau and w > 0:
            g.add_edge(a, b, weight=w)
    return g


def make_step_communities(step: int, partition: Partition) -> list[StepCommunity]:
    return [StepCommunity(step, f"t{step}c{i}", members) for i, members in enumerate(partition)]


def consensus_communities(
    net: StepNetwork | nx.Graph,
    params: ConsensusParams = ConsensusParams(),
    detector: Detector = label_propagation,
    step: int | None = None,
) -> ConsensusResult:
    """Stable communities from repeated runs of ``detector``.

    If the runs still disagree after ``params.max_iterations`` rounds, the
    most frequent partition of the last round is returned with
    ``converged=False``.
    """
    g = _as_graph(net)
    if step is None:
        step = net.index if isinstance(net, StepNetwork) else 0
    if g.number_of_nodes() == 0:
        return ConsensusResult([], True, 0)
    current = g
    partitions: list[Partition] = []
    for iteration in range(1, params.max_iterations + 1):
        partitions = [base_detect(current, params.seed + r, detector) for r in range(params.runs)]
        if all(p == partitions[0] for p in partitions[1:]):
            return ConsensusResult(make_step_communities(step, partitions[0]), True, iteration, partitions)
        current = consensus_graph(coclustering_weights(partitions), params.tau)
        if current.number_of_nodes() == 0:
            return ConsensusResult([], True, iteration, partitions)
    majority = Counter(partitions).most_common(1)[0][0]
    logger.warning("consensus did not converge after %d iterations (step %s)",
                   params.max_iterations, step)
    return ConsensusResult(make_step_communities(step, majority), False, params.max_iterations, partitions)
