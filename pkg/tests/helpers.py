"""Independent oracles and fixture builders shared by the tests.

The PMI oracle re-derives every edge weight by scanning the raw event list
for each probability term; it shares no counting code with the library.
"""

from __future__ import annotations

import itertools
import math
import random
from datetime import datetime, timedelta, timezone

import numpy as np

from dyncomm.events import EntityKind, EntityRef, EventRecord

T0 = datetime(2012, 6, 1, tzinfo=timezone.utc)

# URL -> entity, fixed so the oracle never calls the classifier
URL_TABLE = {
    "http://www.site-a.org/p1": EntityRef.website("site-a.org"),
    "http://site-a.org/p2?x=1": EntityRef.website("site-a.org"),
    "https://news.site-b.co.uk/story": EntityRef.website("site-b.co.uk"),
    "http://site-c.com/": EntityRef.website("site-c.com"),
    "https://www.youtube.com/channel/UCchan1": EntityRef(EntityKind.VIDEO_CHANNEL, "UCchan1"),
    "https://youtu.be/vid00001": EntityRef(EntityKind.VIDEO_CHANNEL, "video:vid00001"),
    "https://www.facebook.com/pageone": EntityRef(EntityKind.SOCIAL_PROFILE, "pageone"),
    "https://www.facebook.com/groups/grp2": EntityRef(EntityKind.SOCIAL_PROFILE, "groups/grp2"),
    "https://twitter.com/a3/status/123/photo/1": EntityRef.account("a3"),
}


def ev(eid, author, minutes=0, mentioned=(), reshare=None, urls=()):
    return EventRecord(eid, author, T0 + timedelta(minutes=minutes), tuple(mentioned), reshare, tuple(urls))


def random_log(rng: random.Random, max_accounts=10, max_events=50) -> list[EventRecord]:
    n_acc = rng.randint(2, max_accounts)
    accounts = [f"a{i}" for i in range(n_acc)]
    urls = list(URL_TABLE)
    log = []
    for i in range(rng.randint(1, max_events)):
        author = rng.choice(accounts)
        mentioned = rng.sample(accounts, rng.randint(0, min(3, n_acc))) if rng.random() < 0.6 else []
        reshare = rng.choice(accounts) if rng.random() < 0.3 else None
        chosen = rng.sample(urls, rng.randint(1, 3)) if rng.random() < 0.6 else []
        if chosen and rng.random() < 0.2:
            chosen.append(chosen[0])  # repeated URL within one event
        log.append(ev(f"e{i}", author, rng.randint(0, 60 * 24 * 13), mentioned, reshare, chosen))
    log.sort(key=lambda r: r.timestamp)
    return log


def _pmi(p_ab, p_a, p_b):
    return math.log(1 + p_ab / (p_a * p_b))


def oracle_edges(events, k=2.0, url_table=URL_TABLE):
    """Brute-force edge weights: {(tag, frozenset({u, v})): weight}.

    Returns (retained edges, all edges before the inferred-edge cut).
    """
    def targets(e):
        out = set(e.mentioned)
        if e.reshare_of:
            out.add(e.reshare_of)
        out |= {url_table[u].id for u in e.urls if url_table[u].kind is EntityKind.ACCOUNT}
        out.discard(e.author)
        return out

    inter = [(e.author, t) for e in events for t in sorted(targets(e))]
    n = len(inter)
    edges = {}
    for a, b in {frozenset(p) for p in inter}:
        n_ab = sum(1 for x, y in inter if {x, y} == {a, b})
        n_a = sum(1 for x, y in inter if a in (x, y))
        n_b = sum(1 for x, y in inter if b in (x, y))
        key = ("MentionReshare", frozenset({EntityRef.account(a), EntityRef.account(b)}))
        edges[key] = _pmi(n_ab / n, n_a / n, n_b / n)

    url_events = []
    for e in events:
        ents = {url_table[u] for u in e.urls if url_table[u].kind is not EntityKind.ACCOUNT}
        if ents:
            url_events.append((e.author, ents))
    m = len(url_events)
    entities = sorted({b for _, ents in url_events for b in ents})

    def tweeters(b):
        return {a for a, ents in url_events if b in ents}

    kept = [b for b in entities if b.kind is EntityKind.SOCIAL_PROFILE or len(tweeters(b)) >= 2]
    for b in kept:
        for a in sorted(tweeters(b)):
            n_ab = sum(1 for x, ents in url_events if x == a and b in ents)
            n_a = sum(1 for x, _ in url_events if x == a)
            n_b = sum(1 for _, ents in url_events if b in ents)
            edges[("AccountExternal", frozenset({EntityRef.account(a), b}))] = _pmi(n_ab / m, n_a / m, n_b / m)

    accts = {a for a, _ in url_events}
    inferred = {}
    for x, y in itertools.combinations(kept, 2):
        both = tweeters(x) & tweeters(y)
        if both:
            inferred[("InferredExternal", frozenset({x, y}))] = _pmi(
                len(both) / len(accts), len(tweeters(x)) / len(accts), len(tweeters(y)) / len(accts))
    all_edges = {**edges, **inferred}
    if inferred:
        w = np.array(list(inferred.values()))
        if w.max() == w.min():
            keep_inf = inferred
        else:
            cut = w.mean() + k * w.std()
            cut -= 1e-12 * max(1.0, abs(cut))  # boundary ties count as kept
            keep_inf = {key: v for key, v in inferred.items() if v >= cut}
        edges.update(keep_inf)
    return edges, all_edges


def network_edges(net):
    return {(e.tag.value, frozenset({e.u, e.v})): e.weight for e in net.edges}


def planted_blocks(seed, size=8, p_in=0.9, p_out=0.05):
    import networkx as nx

    g = nx.planted_partition_graph(2, size, p_in, p_out, seed=seed)
    nx.set_edge_attributes(g, 1.0, "weight")
    truth = {frozenset(range(size)), frozenset(range(size, 2 * size))}
    return g, truth
