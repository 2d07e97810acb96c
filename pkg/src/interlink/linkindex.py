"""Inlink/outlink providers and result-cap query splitting.

A provider answers "which links point to (or leave) this site key", capped
at ``max_results`` per query, and accepts a list of counterpart site keys
to exclude.  :func:`harvest_links` uses the exclusions to page past the
cap: every round excludes the counterparts already seen, until the
provider stops reporting truncation.

Two providers ship here: :class:`LocalLinkIndex`, an inverted index over
crawled pages, and :class:`ExternalIndexAdapter`, a thin JSON-over-HTTP
client for any backlink index that speaks the small wire format
documented on the class.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

from .errors import CapabilityError, ConfigError, InterlinkError, PartialResultWarning, ProviderUnavailable, ReductionError
from .records import Direction, LinkRecord, ProviderTag
from .urls import (
    Granularity,
    PublicSuffixList,
    SiteKey,
    Url,
    default_suffixes,
    host_matches,
    is_subdomain,
    parse_url,
    reduce_host,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_RESULTS = 1000
MAX_ROUNDS = 50


def _key_value(key: SiteKey | str) -> str:
    return key.value if isinstance(key, SiteKey) else key


@dataclass(frozen=True)
class LinkQuery:
    key: SiteKey | str
    direction: Direction
    exclusions: tuple[str, ...] = ()
    max_results: int = DEFAULT_MAX_RESULTS

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "exclusions", tuple(self.exclusions))
        if self.max_results < 1:
            raise ValueError("max_results must be >= 1")
        if len(set(self.exclusions)) != len(self.exclusions):
            raise ValueError("exclusions must be pairwise distinct")


@dataclass
class QueryResult:
    records: list[LinkRecord]
    truncated: bool


@dataclass(frozen=True)
class ProviderCapabilities:
    """Which directions a provider answers, and for which kinds of key.

    ``Granularity.SUBDOMAIN`` in a direction's set means keys below a
    registrable domain can be queried; ``DOMAIN`` covers registrable
    domains.  ``max_exclusions`` bounds query refinement (None = no bound).
    """

    inlinks: frozenset = frozenset({Granularity.DOMAIN, Granularity.SUBDOMAIN})
    outlinks: frozenset = frozenset({Granularity.DOMAIN, Granularity.SUBDOMAIN})
    max_exclusions: int | None = None

    def granularities(self, direction: Direction) -> frozenset:
        return self.inlinks if Direction(direction) is Direction.INLINKS else self.outlinks

    def supports(self, direction: Direction, key: SiteKey | str | None = None, suffixes=None) -> bool:
        grans = self.granularities(direction)
        if not grans:
            return False
        if key is None:
            return True
        try:
            sub = is_subdomain(_key_value(key), suffixes)
        except ReductionError:
            return False
        return Granularity.SUBDOMAIN in grans if sub else True

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "ProviderCapabilities":
        data = dict(data or {})

        def grans(name):
            if name not in data:
                return frozenset(Granularity)
            return frozenset(Granularity.parse(g) for g in data[name] or ())

        return cls(grans("inlinks"), grans("outlinks"), data.get("max_exclusions"))

    def to_dict(self) -> dict:
        return {
            "inlinks": sorted(g.value for g in self.inlinks),
            "outlinks": sorted(g.value for g in self.outlinks),
            "max_exclusions": self.max_exclusions,
        }


class LinkProvider(Protocol):
    name: str

    def capabilities(self) -> ProviderCapabilities: ...

    def query(self, q: LinkQuery) -> QueryResult: ...


def provider_capabilities(provider: LinkProvider) -> ProviderCapabilities:
    return provider.capabilities()


def query_links(provider: LinkProvider, q: LinkQuery, suffixes: PublicSuffixList | None = None) -> QueryResult:
    """Run one capped query, refusing directions the provider cannot answer."""
    if not provider.capabilities().supports(q.direction, q.key, suffixes):
        raise CapabilityError(f"{provider.name} cannot answer {q.direction.value} for {_key_value(q.key)}")
    return provider.query(q)


@dataclass
class Harvest:
    records: list[LinkRecord]
    rounds: int
    retrieved: int  # records returned over all rounds, before dedup
    complete: bool


def _identity(record: LinkRecord) -> tuple:
    if record.source_url is not None and record.target_url is not None:
        return str(record.source_url), str(record.target_url)
    return record.pair


def harvest_links(
    provider: LinkProvider,
    key: SiteKey | str,
    direction: Direction,
    cap: int = DEFAULT_MAX_RESULTS,
    *,
    max_rounds: int = MAX_ROUNDS,
    suffixes: PublicSuffixList | None = None,
) -> Harvest:
    """All links for *key*, splitting queries that hit the result cap.

    Each round re-issues the query with every counterpart site seen so far
    excluded.  Stops when a round is not truncated, when a truncated round
    brings no new counterpart, when the provider's exclusion capacity is
    used up, or after ``max_rounds``.  Records are deduplicated by their
    URL pair (site-key pair when URLs are absent), keeping the first seen.
    """
    direction = Direction(direction)
    max_excl = provider.capabilities().max_exclusions
    exclusions: list[str] = []
    excluded: set[str] = set()
    by_pair: dict[tuple, LinkRecord] = {}
    rounds = retrieved = 0
    complete = False
    while rounds < max_rounds:
        result = query_links(provider, LinkQuery(key, direction, tuple(exclusions), cap), suffixes)
        rounds += 1
        retrieved += len(result.records)
        fresh: list[str] = []
        for record in result.records:
            by_pair.setdefault(_identity(record), record)
            other = record.counterpart(direction).value
            if other not in excluded and other not in fresh:
                fresh.append(other)
        if not result.truncated:
            complete = True
            break
        if max_excl is not None:
            fresh = fresh[: max(0, max_excl - len(exclusions))]
        if not fresh:
            break
        exclusions.extend(fresh)
        excluded.update(fresh)

    records = list(by_pair.values())
    if not complete:
        warnings.warn(
            PartialResultWarning(
                f"{provider.name}: {direction.value} for {_key_value(key)} still truncated after "
                f"{rounds} rounds and {len(exclusions)} exclusions; {len(records)} links kept",
                records,
            ),
            stacklevel=2,
        )
    return Harvest(records, rounds, retrieved, complete)


def query_all_links(
    provider: LinkProvider,
    key: SiteKey | str,
    direction: Direction,
    cap: int = DEFAULT_MAX_RESULTS,
    **kwargs,
) -> list[LinkRecord]:
    return harvest_links(provider, key, direction, cap, **kwargs).records


# -- local inverted index -----------------------------------------------------------


class LocalLinkIndex:
    """Immutable inverted index of cross-site URL links.

    Only links whose endpoints reduce to different site keys (at the
    index granularity) are kept.  A query key matches a host equal to it
    or below it, so a registrable domain also collects its subdomains.
    """

    def __init__(
        self,
        edges: Iterable[tuple[Url | str, Url | str]] = (),
        *,
        name: str = "local",
        granularity: Granularity | str = Granularity.SUBDOMAIN,
        suffixes: PublicSuffixList | None = None,
        retrieved_at: float | None = None,
        capabilities: ProviderCapabilities | None = None,
    ):
        self.name = name
        self.granularity = Granularity.parse(granularity)
        self.suffixes = suffixes or default_suffixes()
        self.retrieved_at = retrieved_at
        self._caps = capabilities or ProviderCapabilities()
        self._key_cache: dict[str, str | None] = {}
        unique: dict[tuple[str, str], tuple[Url, Url]] = {}
        for s, t in edges:
            su = s if isinstance(s, Url) else parse_url(s)
            tu = t if isinstance(t, Url) else parse_url(t)
            sk, tk = self._key(su.host), self._key(tu.host)
            if sk is None or tk is None or sk == tk:
                continue
            unique.setdefault((str(su), str(tu)), (su, tu))
        self._edges = [unique[k] for k in sorted(unique)]
        self._by_source: dict[str, list[int]] = {}
        self._by_target: dict[str, list[int]] = {}
        for i, (su, tu) in enumerate(self._edges):
            self._by_source.setdefault(su.host, []).append(i)
            self._by_target.setdefault(tu.host, []).append(i)

    def _key(self, host: str) -> str | None:
        if host not in self._key_cache:
            try:
                self._key_cache[host] = reduce_host(host, self.granularity, self.suffixes)
            except ReductionError:
                self._key_cache[host] = None
        return self._key_cache[host]

    @classmethod
    def from_crawls(cls, results: Iterable, **kwargs) -> "LocalLinkIndex":
        edges = []
        for result in results:
            for r in result.site_outlinks:
                if r.source_url is not None and r.target_url is not None:
                    edges.append((r.source_url, r.target_url))
        return cls(edges, **kwargs)

    def __len__(self) -> int:
        return len(self._edges)

    @property
    def edges(self) -> list[tuple[Url, Url]]:
        return list(self._edges)

    def capabilities(self) -> ProviderCapabilities:
        return self._caps

    def _record(self, su: Url, tu: Url) -> LinkRecord:
        return LinkRecord(
            SiteKey(self._key(su.host), self.granularity),
            SiteKey(self._key(tu.host), self.granularity),
            ProviderTag(self.name, self.retrieved_at),
            su,
            tu,
        )

    def all_records(self) -> list[LinkRecord]:
        return [self._record(su, tu) for su, tu in self._edges]

    def query(self, q: LinkQuery) -> QueryResult:
        key = _key_value(q.key)
        inbound = q.direction is Direction.INLINKS
        index = self._by_target if inbound else self._by_source
        excluded = set(q.exclusions)
        ids = sorted(i for host, idx in index.items() if host_matches(host, key) for i in idx)
        hits: list[LinkRecord] = []
        total = 0
        for i in ids:
            su, tu = self._edges[i]
            other = su if inbound else tu
            if host_matches(other.host, key):
                continue
            if self._key(other.host) in excluded:
                continue
            total += 1
            if len(hits) < q.max_results:
                hits.append(self._record(su, tu))
        return QueryResult(hits, total > len(hits))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        forward = sorted((str(s), str(t)) for s, t in self._edges)
        reverse = sorted(forward, key=lambda e: (e[1], e[0]))
        for fname, rows in (("forward.tsv", forward), ("reverse.tsv", reverse)):
            with open(directory / fname, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("source_url\ttarget_url\n")
                for s, t in rows:
                    fh.write(f"{s}\t{t}\n")

    @classmethod
    def load(cls, directory: str | Path, **kwargs) -> "LocalLinkIndex":
        path = Path(directory) / "forward.tsv"
        edges = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != "source_url\ttarget_url":
                raise ConfigError(f"{path}: unexpected header {header!r}")
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    s, t = line.split("\t")
                    edges.append((s, t))
        return cls(edges, **kwargs)


# -- external backlink indexes ------------------------------------------------------------


Transport = Callable[[str, Mapping[str, str], Mapping[str, str], float], Mapping]


def _http_transport(endpoint: str, params: Mapping[str, str], headers: Mapping[str, str], timeout: float) -> Mapping:
    url = endpoint + ("&" if "?" in endpoint else "?") + urllib.parse.urlencode(params)
    request = urllib.request.Request(url, headers=dict(headers))
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code == 429 or exc.code >= 500:
            raise ProviderUnavailable(f"{endpoint}: HTTP {exc.code}") from None
        raise InterlinkError(f"{endpoint}: HTTP {exc.code}") from None
    except (urllib.error.URLError, OSError) as exc:
        raise ProviderUnavailable(f"{endpoint}: {exc}") from None


@dataclass
class ExternalIndexAdapter:
    """Client for an external backlink index.

    Request: GET ``endpoint`` with parameters ``key``, ``direction``
    (``inlinks``/``outlinks``), ``exclude`` (comma-separated site keys) and
    ``limit``; the API key, if configured, goes in an ``Authorization:
    Bearer`` header.  Response: JSON ``{"links": [{"source_url": ...,
    "target_url": ...}, ...], "truncated": bool}``.

    Requests are serialized and spaced to honor ``rate_per_minute``.
    """

    name: str
    endpoint: str
    api_key_env: str | None = None
    max_results: int = DEFAULT_MAX_RESULTS
    rate_per_minute: float | None = None
    caps: ProviderCapabilities = field(default_factory=ProviderCapabilities)
    timeout: float = 30.0
    transport: Transport = _http_transport
    granularity: Granularity = Granularity.SUBDOMAIN
    clock: object = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("external provider needs a name")
        self._lock = threading.Lock()
        self._last: float | None = None
        self._clock = self.clock or _MonotonicClock()

    @classmethod
    def from_config(cls, config: Mapping, **kwargs) -> "ExternalIndexAdapter":
        try:
            return cls(
                name=config["name"],
                endpoint=config["endpoint"],
                api_key_env=config.get("api_key_env"),
                max_results=int(config.get("max_results", DEFAULT_MAX_RESULTS)),
                rate_per_minute=config.get("rate_per_minute"),
                caps=ProviderCapabilities.from_dict(config.get("capabilities")),
                **kwargs,
            )
        except KeyError as exc:
            raise ConfigError(f"external provider config is missing {exc}") from None

    def capabilities(self) -> ProviderCapabilities:
        # static configuration; answering never touches the network
        return self.caps

    def _throttle(self):
        if not self.rate_per_minute:
            return
        interval = 60.0 / self.rate_per_minute
        if self._last is not None:
            wait = self._last + interval - self._clock.now()
            if wait > 0:
                self._clock.sleep(wait)
        self._last = self._clock.now()

    def query(self, q: LinkQuery) -> QueryResult:
        limit = min(q.max_results, self.max_results)
        params = {
            "key": _key_value(q.key),
            "direction": q.direction.value,
            "exclude": ",".join(q.exclusions),
            "limit": str(limit),
        }
        headers = {}
        if self.api_key_env:
            token = os.environ.get(self.api_key_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        with self._lock:
            self._throttle()
            payload = self.transport(self.endpoint, params, headers, self.timeout)
        now = time.time()
        records = []
        for link in payload.get("links", [])[:limit]:
            try:
                su, tu = parse_url(link["source_url"]), parse_url(link["target_url"])
                sk = SiteKey(reduce_host(su.host, self.granularity), self.granularity)
                tk = SiteKey(reduce_host(tu.host, self.granularity), self.granularity)
            except (KeyError, InterlinkError) as exc:
                log.warning("%s: skipping malformed link %r (%s)", self.name, link, exc)
                continue
            records.append(LinkRecord(sk, tk, ProviderTag(self.name, now), su, tu))
        truncated = bool(payload.get("truncated")) or len(payload.get("links", [])) > limit
        return QueryResult(records, truncated)


class _MonotonicClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)
