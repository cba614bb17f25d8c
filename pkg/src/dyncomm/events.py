"""Event-log parsing, URL classification and data set statistics.

Event logs are line-delimited JSON, one interaction record per line::

    {"event_id": "e1", "author": "a1", "timestamp": "2012-06-01T10:00:00Z",
     "mentioned": ["a2"], "reshare_of": null, "urls": ["http://example.org/x"]}

URLs are mapped onto typed entity references (accounts, video channels,
social profiles and websites). Shortened URLs are not expanded here.
"""

from __future__ import annotations

import enum
import io
import json
import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Callable, Optional
from urllib.parse import parse_qs, urlsplit

import tldextract

__all__ = [
    "EntityKind",
    "EntityRef",
    "EventRecord",
    "EventParseError",
    "Resolver",
    "UrlRule",
    "StatsReport",
    "parse_events",
    "read_events",
    "write_events",
    "classify_url",
    "load_resolver",
    "dataset_stats",
    "format_timestamp",
]


class EntityKind(str, enum.Enum):
    ACCOUNT = "Account"
    VIDEO_CHANNEL = "VideoChannel"
    SOCIAL_PROFILE = "SocialProfile"
    WEBSITE = "Website"

    @property
    def is_external(self) -> bool:
        return self is not EntityKind.ACCOUNT


@dataclass(frozen=True, order=True)
class EntityRef:
    """Typed node identity.

    ``resolved`` only carries information for video channels; it is excluded
    from equality so that the same channel reached through a video id and a
    channel URL is one node.
    """

    kind: EntityKind
    id: str
    resolved: bool = field(default=True, compare=False)

    @classmethod
    def account(cls, account_id: str) -> "EntityRef":
        return cls(EntityKind.ACCOUNT, account_id)

    @classmethod
    def website(cls, domain: str) -> "EntityRef":
        return cls(EntityKind.WEBSITE, domain)

    @property
    def is_external(self) -> bool:
        return self.kind.is_external

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.id}"


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    author: str
    timestamp: datetime
    mentioned: tuple[str, ...] = ()
    reshare_of: Optional[str] = None
    urls: tuple[str, ...] = ()

    def interaction_targets(self) -> list[str]:
        """Distinct accounts this event mentions or reshares, author excluded.

        Mentions and reshares are pooled, so an account that is both
        mentioned and reshared in one event counts once.
        """
        targets = list(dict.fromkeys(self.mentioned))
        if self.reshare_of is not None and self.reshare_of not in targets:
            targets.append(self.reshare_of)
        return [t for t in targets if t != self.author]

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "author": self.author,
            "timestamp": format_timestamp(self.timestamp),
            "mentioned": list(self.mentioned),
            "reshare_of": self.reshare_of,
            "urls": list(self.urls),
        }


class EventParseError(ValueError):
    def __init__(self, line: int, field_name: str, message: str):
        self.line = line
        self.field = field_name
        super().__init__(f"line {line}: field '{field_name}': {message}")


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_timestamp(value) -> datetime:
    if not isinstance(value, str):
        raise ValueError("expected an ISO-8601 string")
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def _string_list(value, line: int, name: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
        raise EventParseError(line, name, "expected a list of nonempty strings")
    return tuple(value)


def _parse_line(obj, line: int) -> EventRecord:
    if not isinstance(obj, dict):
        raise EventParseError(line, "<record>", "expected a JSON object")
    for name in ("event_id", "author"):
        value = obj.get(name)
        if not isinstance(value, str) or not value:
            raise EventParseError(line, name, "missing or empty")
    try:
        ts = _parse_timestamp(obj.get("timestamp"))
    except (ValueError, TypeError, OverflowError) as exc:
        raise EventParseError(line, "timestamp", f"unparseable ({exc})") from None
    mentioned = _string_list(obj.get("mentioned"), line, "mentioned")
    if len(set(mentioned)) != len(mentioned):
        raise EventParseError(line, "mentioned", "duplicate account ids")
    reshare = obj.get("reshare_of")
    if reshare is not None and (not isinstance(reshare, str) or not reshare):
        raise EventParseError(line, "reshare_of", "expected a nonempty string or null")
    urls = _string_list(obj.get("urls"), line, "urls")
    return EventRecord(obj["event_id"], obj["author"], ts, mentioned, reshare, urls)


def parse_events(stream: IO[bytes] | IO[str] | bytes | str) -> list[EventRecord]:
    """Parse a line-delimited event log.

    Returns records sorted by timestamp; records with equal timestamps keep
    their input order. Blank lines are skipped.

    Raises
    ------
    EventParseError
        On a malformed line or a repeated ``event_id``.
    """
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise EventParseError(lineno, "<json>", str(exc)) from None
        record = _parse_line(obj, lineno)
        if record.event_id in seen:
            raise EventParseError(
                lineno, "event_id",
                f"duplicate id {record.event_id!r} (first seen on line {seen[record.event_id]})",
            )
        seen[record.event_id] = lineno
        records.append(record)
    records.sort(key=lambda r: r.timestamp)
    return records


def read_events(path: str | Path) -> list[EventRecord]:
    with open(path, "rb") as fh:
        return parse_events(fh)


def write_events(records: Iterable[EventRecord], fh: IO[str]) -> None:
    for r in records:
        fh.write(json.dumps(r.to_json(), separators=(",", ":")) + "\n")


# --- URL classification -----------------------------------------------------

_EXTRACT = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)

_VIDEO_ID = re.compile(r"^[A-Za-z0-9_-]{6,}$")
_HANDLE = re.compile(r"^[A-Za-z0-9_]{1,30}$")
_TWITTER_RESERVED = {
    "i", "intent", "search", "share", "hashtag", "home", "explore",
    "settings", "login", "signup", "messages", "notifications", "tos", "privacy",
}
_FACEBOOK_RESERVED = {
    "sharer.php", "sharer", "share.php", "dialog", "login.php", "login", "home.php",
    "photo.php", "video.php", "l.php", "events", "watch", "plugins", "help",
    "policies", "privacy", "settings", "hashtag", "search", "story.php", "permalink.php",
}


@dataclass(frozen=True)
class UrlRule:
    """Maps URLs on a set of hosts to an entity via ``build``.

    ``build`` receives (path segments, query, resolver) and returns an
    EntityRef, or None to let later rules try.
    """

    name: str
    hosts: frozenset[str]
    build: Callable[[list[str], dict[str, list[str]], "Resolver"], Optional[EntityRef]]


def _video_channel(video_id: str, resolver: "Resolver") -> EntityRef:
    channel = resolver.video_to_channel.get(video_id)
    if channel is not None:
        return EntityRef(EntityKind.VIDEO_CHANNEL, channel, resolved=True)
    return EntityRef(EntityKind.VIDEO_CHANNEL, f"video:{video_id}", resolved=False)


def _youtube(parts, query, resolver):
    if not parts:
        return None
    head = parts[0]
    if head == "watch":
        vid = query.get("v", [""])[0]
        return _video_channel(vid, resolver) if _VIDEO_ID.match(vid) else None
    if head in ("embed", "v", "shorts", "live") and len(parts) > 1 and _VIDEO_ID.match(parts[1]):
        return _video_channel(parts[1], resolver)
    if head == "channel" and len(parts) > 1:
        return EntityRef(EntityKind.VIDEO_CHANNEL, parts[1])
    if head in ("user", "c") and len(parts) > 1:
        return EntityRef(EntityKind.VIDEO_CHANNEL, f"user:{parts[1].lower()}")
    if head.startswith("@") and len(head) > 1:
        return EntityRef(EntityKind.VIDEO_CHANNEL, f"user:{head[1:].lower()}")
    return None


def _youtu_be(parts, query, resolver):
    if parts and _VIDEO_ID.match(parts[0]):
        return _video_channel(parts[0], resolver)
    return None


def _facebook(parts, query, resolver):
    if not parts:
        return None
    head = parts[0].lower()
    if head == "profile.php":
        pid = query.get("id", [""])[0]
        return EntityRef(EntityKind.SOCIAL_PROFILE, pid) if pid.isdigit() else None
    if head in ("groups", "group") and len(parts) > 1:
        return EntityRef(EntityKind.SOCIAL_PROFILE, f"groups/{parts[1].lower()}")
    if head in ("pages", "people") and len(parts) > 1:
        # /pages/<name>/<numeric id>
        if len(parts) > 2 and parts[2].isdigit():
            return EntityRef(EntityKind.SOCIAL_PROFILE, parts[2])
        return EntityRef(EntityKind.SOCIAL_PROFILE, parts[1].lower())
    if head in _FACEBOOK_RESERVED or head.endswith(".php"):
        return None
    return EntityRef(EntityKind.SOCIAL_PROFILE, head)


def _twitter(parts, query, resolver):
    if parts and _HANDLE.match(parts[0]) and parts[0].lower() not in _TWITTER_RESERVED:
        return EntityRef.account(parts[0])
    return None


DEFAULT_RULES: tuple[UrlRule, ...] = (
    UrlRule("youtube", frozenset({"youtube.com", "m.youtube.com", "youtube-nocookie.com"}), _youtube),
    UrlRule("youtu.be", frozenset({"youtu.be"}), _youtu_be),
    UrlRule("facebook", frozenset({"facebook.com", "m.facebook.com", "fb.com", "de-de.facebook.com"}), _facebook),
    UrlRule("twitter", frozenset({"twitter.com", "mobile.twitter.com", "x.com"}), _twitter),
)


@dataclass(frozen=True)
class Resolver:
    """Video-id to channel mapping plus ordered URL rules (first match wins)."""

    video_to_channel: dict[str, str] = field(default_factory=dict)
    url_rules: tuple[UrlRule, ...] = DEFAULT_RULES


def load_resolver(path: str | Path | None) -> Resolver:
    """Read a two-column ``video_id<TAB>channel_id`` file."""
    if path is None:
        return Resolver()
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0] or not cols[1]:
                raise ValueError(f"{path}: line {lineno}: expected video_id<TAB>channel_id")
            mapping[cols[0]] = cols[1]
    return Resolver(mapping)


def _registrable_domain(host: str) -> str:
    ext = _EXTRACT(host)
    domain = ext.top_domain_under_public_suffix
    if not domain:
        domain = host[4:] if host.startswith("www.") else host
    return domain


def classify_url(url: str, resolver: Resolver | None = None) -> Optional[EntityRef]:
    """Map a URL to the entity it refers to.

    Video-host URLs give a VideoChannel (resolved through ``resolver`` when
    only a video id is present), social-platform profile/page/group URLs give
    a SocialProfile, platform URLs under an account path give that Account,
    and everything else is a Website keyed by registrable domain. Returns
    None when the URL has no usable host.
    """
    resolver = resolver or _DEFAULT_RESOLVER
    text = url.strip()
    if "://" not in text and not text.startswith("//"):
        text = "http://" + text
    try:
        parts = urlsplit(text)
        host = (parts.hostname or "").rstrip(".").lower()
    except ValueError:
        return None
    if not host or any(c.isspace() for c in host):
        return None
    bare = host[4:] if host.startswith("www.") else host
    segments = [s for s in parts.path.split("/") if s]
    query = parse_qs(parts.query)
    for rule in resolver.url_rules:
        if bare in rule.hosts:
            ref = rule.build(segments, query, resolver)
            if ref is not None:
                return ref
            break
    domain = _registrable_domain(host)
    if not domain or "/" in domain or ":" in domain:
        return None
    return EntityRef.website(domain)


_DEFAULT_RESOLVER = Resolver()


# --- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class StatsReport:
    tweets: int = 0
    mentions: int = 0
    retweets: int = 0
    all_urls: int = 0
    video_urls: int = 0
    social_urls: int = 0

    HEADER = ("tweets", "mentions", "retweets", "all_urls", "video_urls", "social_urls")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.tweets, self.mentions, self.retweets,
                self.all_urls, self.video_urls, self.social_urls)

    def __add__(self, other: "StatsReport") -> "StatsReport":
        return StatsReport(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def render(self, label: str = "") -> str:
        """One table row with thousands separators, e.g. ``1,517,339``."""
        cells = [label] if label else []
        cells += [f"{v:,}" for v in self.as_tuple()]
        return " | ".join(cells)


def dataset_stats(log: Iterable[EventRecord], resolver: Resolver | None = None) -> StatsReport:
    tweets = mentions = retweets = all_urls = video = social = 0
    for r in log:
        tweets += 1
        mentions += len(r.mentioned)
        retweets += r.reshare_of is not None
        for url in r.urls:
            all_urls += 1
            ref = classify_url(url, resolver)
            if ref is None:
                continue
            if ref.kind is EntityKind.VIDEO_CHANNEL:
                video += 1
            elif ref.kind is EntityKind.SOCIAL_PROFILE:
                social += 1
    return StatsReport(tweets, mentions, retweets, all_urls, video, social)


def iter_entities(record: EventRecord, resolver: Resolver | None = None) -> Iterator[EntityRef]:
    """Distinct entities referenced by a record's URLs, in first-seen order."""
    seen = set()
    for url in record.urls:
        ref = classify_url(url, resolver)
        if ref is not None and ref not in seen:
            seen.add(ref)
            yield ref
