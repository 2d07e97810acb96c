"""Depth-limited, polite, breadth-first site crawler.

Fetching goes through a small fetcher interface so the same crawl logic
runs against live HTTP (:class:`HttpFetcher`) or a directory of saved
pages (:class:`CorpusFetcher`).  Time goes through a clock so politeness
delays can be checked without sleeping.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
import urllib.robotparser
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Protocol
from urllib.parse import quote, urljoin

from .errors import CrawlError, ReductionError, UrlParseError
from .records import LinkRecord, ProviderTag
from .urls import (
    AliasTable,
    Granularity,
    PublicSuffixList,
    SiteKey,
    Url,
    canonicalize,
    parse_url,
    reduce_to_site_key,
)

log = logging.getLogger(__name__)

# negative statuses mark failures that never produced an HTTP response
STATUS_NETWORK_ERROR = 0
STATUS_ROBOTS_BLOCKED = -1
STATUS_TOO_MANY_REDIRECTS = -2

DEFAULT_USER_AGENT = "interlink-crawler/0.1"


@dataclass
class CrawlConfig:
    seeds: list[Url] = field(default_factory=list)
    max_depth: int = 2
    per_host_delay: float = 1.0  # seconds
    max_pages_per_site: int = 10000
    fetch_timeout: float = 10.0
    user_agent: str = DEFAULT_USER_AGENT
    granularity: Granularity = Granularity.SUBDOMAIN
    respect_robots: bool = True
    max_redirects: int = 5
    count_binary_pages: bool = False

    def __post_init__(self):
        self.seeds = [s if isinstance(s, Url) else parse_url(s) for s in self.seeds]
        self.granularity = Granularity.parse(self.granularity)
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.per_host_delay < 0:
            raise ValueError("per_host_delay must be >= 0")
        if self.max_pages_per_site < 1:
            raise ValueError("max_pages_per_site must be >= 1")


@dataclass(frozen=True)
class Page:
    url: Url
    site: SiteKey
    depth: int
    status: int
    out_anchors: tuple[Url, ...] = ()
    fetched_at: float = 0.0
    content_type: str = ""

    def to_dict(self) -> dict:
        return {
            "url": str(self.url),
            "site": self.site.value,
            "granularity": self.site.granularity.value,
            "depth": self.depth,
            "status": self.status,
            "content_type": self.content_type,
            "fetched_at": self.fetched_at,
            "out_anchors": [str(u) for u in self.out_anchors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Page":
        return cls(
            url=parse_url(d["url"]),
            site=SiteKey(d["site"], Granularity.parse(d["granularity"])),
            depth=d["depth"],
            status=d["status"],
            out_anchors=tuple(parse_url(u) for u in d["out_anchors"]),
            fetched_at=d["fetched_at"],
            content_type=d.get("content_type", ""),
        )


@dataclass
class CrawlResult:
    pages: list[Page] = field(default_factory=list)
    site_outlinks: list[LinkRecord] = field(default_factory=list)
    page_count_per_site: dict[str, int] = field(default_factory=dict)

    @classmethod
    def merge(cls, results: Iterable["CrawlResult"]) -> "CrawlResult":
        merged = cls()
        for r in results:
            merged.pages.extend(r.pages)
            merged.site_outlinks.extend(r.site_outlinks)
            for site, n in r.page_count_per_site.items():
                merged.page_count_per_site[site] = merged.page_count_per_site.get(site, 0) + n
        return merged

    def write_jsonl(self, path: str | Path) -> None:
        lines = [json.dumps(p.to_dict(), sort_keys=True) for p in self.pages]
        summary = {
            "summary": True,
            "page_count_per_site": dict(sorted(self.page_count_per_site.items())),
            "site_outlinks": [
                {
                    "source": r.source.value,
                    "target": r.target.value,
                    "granularity": r.source.granularity.value,
                    "source_url": str(r.source_url) if r.source_url else None,
                    "target_url": str(r.target_url) if r.target_url else None,
                    "retrieved_at": r.provider.retrieved_at,
                }
                for r in self.site_outlinks
            ],
        }
        lines.append(json.dumps(summary, sort_keys=True))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "CrawlResult":
        result = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if not obj.get("summary"):
                result.pages.append(Page.from_dict(obj))
                continue
            result.page_count_per_site = dict(obj["page_count_per_site"])
            for r in obj["site_outlinks"]:
                g = Granularity.parse(r["granularity"])
                result.site_outlinks.append(
                    LinkRecord(
                        SiteKey(r["source"], g),
                        SiteKey(r["target"], g),
                        ProviderTag("crawl", r.get("retrieved_at")),
                        parse_url(r["source_url"]) if r.get("source_url") else None,
                        parse_url(r["target_url"]) if r.get("target_url") else None,
                    )
                )
        return result


# -- anchor extraction --------------------------------------------------------


class _AnchorParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.hrefs: list[str] = []
        self.base: str | None = None

    def handle_starttag(self, tag, attrs):
        if tag == "a" or tag == "area":
            for name, value in attrs:
                if name == "href" and value:
                    self.hrefs.append(value.strip())
        elif tag == "base" and self.base is None:
            for name, value in attrs:
                if name == "href" and value:
                    self.base = value.strip()


def extract_anchors(html: bytes | str, base: Url) -> list[Url]:
    """Absolute http(s) targets of the anchors in *html*, first occurrence first."""
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _AnchorParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception:  # html.parser is lenient, but never let one page kill a crawl
        log.debug("anchor parsing stopped early for %s", base)
    base_text = str(base)
    if parser.base:
        base_text = urljoin(base_text, parser.base)
    seen: set[str] = set()
    out: list[Url] = []
    for href in parser.hrefs:
        try:
            absolute = urljoin(base_text, href)
        except ValueError:
            continue
        if not absolute.lower().startswith(("http://", "https://")):
            continue
        try:
            url = parse_url(absolute)
        except UrlParseError:
            continue
        text = str(url)
        if text not in seen:
            seen.add(text)
            out.append(url)
    return out


# -- fetching -------------------------------------------------------------------


@dataclass(frozen=True)
class FetchResponse:
    url: Url
    status: int
    content_type: str = ""
    body: bytes = b""
    location: str | None = None
    error: str | None = None

    @property
    def is_html(self) -> bool:
        return self.content_type.split(";")[0].strip().lower() in ("text/html", "application/xhtml+xml")

    @property
    def is_redirect(self) -> bool:
        return 300 <= self.status < 400 and bool(self.location)


class Fetcher(Protocol):
    def fetch(self, url: Url) -> FetchResponse: ...


def corpus_path(root: str | Path, url: Url) -> Path:
    """File serving *url* inside a corpus directory.

    ``http://<host>/<path>`` maps to ``<root>/<host>/<quoted path>.html``
    where the path (plus ``?query``) is stripped of its leading slash and
    percent-encoded with no safe characters; the root path is ``index``.
    """
    rel = url.path.lstrip("/")
    if url.query:
        rel += "?" + url.query
    name = quote(rel, safe="") if rel else "index"
    return Path(root) / url.host / f"{name}.html"


class CorpusFetcher:
    """Serves a directory of saved pages; anything missing is a 404."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.requests: list[str] = []
        self._lock = threading.Lock()

    def hosts(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def fetch(self, url: Url) -> FetchResponse:
        with self._lock:
            self.requests.append(str(url))
        if url.path == "/robots.txt" and not url.query:
            robots = self.root / url.host / "robots.txt"
            if robots.is_file():
                return FetchResponse(url, 200, "text/plain", robots.read_bytes())
            return FetchResponse(url, 404)
        path = corpus_path(self.root, url)
        if not path.is_file():
            return FetchResponse(url, 404)
        return FetchResponse(url, 200, "text/html; charset=utf-8", path.read_bytes())


class _NoRedirect(urllib.request.HTTPRedirectHandler):
    def redirect_request(self, *args, **kwargs):
        return None


class HttpFetcher:
    """Live HTTP fetcher; redirects are returned, not followed."""

    def __init__(self, timeout: float = 10.0, user_agent: str = DEFAULT_USER_AGENT, max_bytes: int = 5_000_000):
        self.timeout = timeout
        self.user_agent = user_agent
        self.max_bytes = max_bytes
        self._opener = urllib.request.build_opener(_NoRedirect)

    def fetch(self, url: Url) -> FetchResponse:
        request = urllib.request.Request(str(url), headers={"User-Agent": self.user_agent})
        try:
            with self._opener.open(request, timeout=self.timeout) as resp:
                return FetchResponse(
                    url, resp.status, resp.headers.get("Content-Type", ""), resp.read(self.max_bytes)
                )
        except urllib.error.HTTPError as exc:
            return FetchResponse(
                url, exc.code, exc.headers.get("Content-Type", "") if exc.headers else "",
                location=exc.headers.get("Location") if exc.headers else None,
            )
        except (urllib.error.URLError, OSError, ValueError) as exc:
            return FetchResponse(url, STATUS_NETWORK_ERROR, error=str(exc))


# -- time and politeness ----------------------------------------------------------


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def wall(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock; ``sleep`` just advances time."""

    def __init__(self, start: float = 0.0):
        self.t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        return self.t

    def wall(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.t += max(0.0, seconds)


class Politeness:
    """Serializes requests per host and spaces them by ``delay`` seconds."""

    def __init__(self, delay: float, clock=None):
        self.delay = delay
        self.clock = clock or SystemClock()
        self._last: dict[str, float] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock_for(self, host: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(host, threading.Lock())

    def fetch(self, fetcher: Fetcher, url: Url) -> tuple[FetchResponse, float]:
        with self._lock_for(url.host):
            last = self._last.get(url.host)
            if last is not None:
                wait = last + self.delay - self.clock.now()
                if wait > 0:
                    self.clock.sleep(wait)
            started = self.clock.now()
            self._last[url.host] = started
            return fetcher.fetch(url), started


class _Robots:
    def __init__(self, fetcher: Fetcher, politeness: Politeness, user_agent: str):
        self.fetcher = fetcher
        self.politeness = politeness
        self.user_agent = user_agent
        self._cache: dict[tuple[str, str], urllib.robotparser.RobotFileParser | bool] = {}

    def allowed(self, url: Url) -> bool:
        key = (url.scheme, url.host)
        if key not in self._cache:
            robots_url = Url(url.scheme, url.host, "/robots.txt", port=url.port)
            resp, _ = self.politeness.fetch(self.fetcher, robots_url)
            if resp.status in (401, 403):
                self._cache[key] = False
            elif resp.status != 200:
                self._cache[key] = True
            else:
                parser = urllib.robotparser.RobotFileParser()
                parser.parse(resp.body.decode("utf-8", errors="replace").splitlines())
                self._cache[key] = parser
        rules = self._cache[key]
        if isinstance(rules, bool):
            return rules
        return rules.can_fetch(self.user_agent, str(url))


# -- crawling ----------------------------------------------------------------------


def _site_key(url: Url, cfg: CrawlConfig, suffixes, aliases) -> SiteKey | None:
    try:
        return canonicalize(reduce_to_site_key(url, cfg.granularity, suffixes), aliases)
    except ReductionError:
        return None


def crawl_site(
    seed: Url | str,
    cfg: CrawlConfig,
    fetcher: Fetcher,
    *,
    clock=None,
    politeness: Politeness | None = None,
    suffixes: PublicSuffixList | None = None,
    aliases: AliasTable | None = None,
) -> CrawlResult:
    """Breadth-first crawl of the site *seed* belongs to, up to ``cfg.max_depth`` hops.

    The seed page is depth 0.  Anchors into other sites become site
    outlinks and are never fetched.  Pages are returned sorted by
    ``(depth, url)``.
    """
    seed_url = seed if isinstance(seed, Url) else parse_url(seed)
    site = _site_key(seed_url, cfg, suffixes, aliases)
    if site is None:
        raise CrawlError(f"seed {seed_url} has no site key")
    if politeness is None:
        politeness = Politeness(cfg.per_host_delay, clock)
    clock = politeness.clock
    robots = _Robots(fetcher, politeness, cfg.user_agent) if cfg.respect_robots else None

    queue: deque[tuple[Url, int]] = deque([(seed_url, 0)])
    seen = {str(seed_url)}
    pages: list[Page] = []
    outlinks: dict[tuple[str, str], LinkRecord] = {}

    def add_outlink(source_url: Url, target_url: Url, target: SiteKey):
        key = (str(source_url), str(target_url))
        if key not in outlinks:
            tag = ProviderTag("crawl", clock.wall())
            outlinks[key] = LinkRecord(site, target, tag, source_url, target_url)

    while queue and len(pages) < cfg.max_pages_per_site:
        url, depth = queue.popleft()
        is_seed = depth == 0 and not pages
        if robots is not None and not robots.allowed(url):
            if is_seed:
                raise CrawlError(f"seed {url} is disallowed by robots.txt")
            pages.append(Page(url, site, depth, STATUS_ROBOTS_BLOCKED, fetched_at=clock.wall()))
            continue

        current = url
        resp, _ = politeness.fetch(fetcher, current)
        fetched_at = clock.wall()
        hops = 0
        off_site = None
        while resp.is_redirect and hops < cfg.max_redirects:
            try:
                nxt = parse_url(urljoin(str(current), resp.location))
            except UrlParseError:
                break
            hops += 1
            target = _site_key(nxt, cfg, suffixes, aliases)
            if target != site:
                off_site = (nxt, target)
                break
            current = nxt
            resp, _ = politeness.fetch(fetcher, current)
            fetched_at = clock.wall()

        if off_site is not None:
            if is_seed:
                raise CrawlError(f"seed {url} redirects off-site to {off_site[0]}")
            if off_site[1] is not None:
                add_outlink(url, off_site[0], off_site[1])
            continue
        status = resp.status
        if resp.is_redirect:
            status = STATUS_TOO_MANY_REDIRECTS
        if is_seed and not (200 <= status < 300):
            raise CrawlError(f"seed {url} unreachable (status {status}{': ' + resp.error if resp.error else ''})")
        if current is not url:
            if str(current) in seen and current != seed_url:
                continue
            seen.add(str(current))

        anchors: list[Url] = []
        if 200 <= status < 300 and resp.is_html:
            anchors = extract_anchors(resp.body, current)
        elif 200 <= status < 300 and not cfg.count_binary_pages:
            continue
        pages.append(Page(current, site, depth, status, tuple(anchors), fetched_at, resp.content_type))

        for anchor in anchors:
            target = _site_key(anchor, cfg, suffixes, aliases)
            if target is None:
                continue
            if target == site:
                text = str(anchor)
                if depth < cfg.max_depth and text not in seen:
                    seen.add(text)
                    queue.append((anchor, depth + 1))
            else:
                add_outlink(current, anchor, target)

    pages.sort(key=lambda p: (p.depth, str(p.url)))
    records = [outlinks[k] for k in sorted(outlinks)]
    ok = sum(1 for p in pages if 200 <= p.status < 300)
    return CrawlResult(pages, records, {site.value: ok})


def crawl_sites(
    seeds: Iterable[Url | str],
    cfg: CrawlConfig,
    fetcher: Fetcher,
    *,
    clock=None,
    workers: int = 1,
    suffixes: PublicSuffixList | None = None,
    aliases: AliasTable | None = None,
) -> list[CrawlResult]:
    """Crawl several sites, optionally in parallel; results follow seed order."""
    politeness = Politeness(cfg.per_host_delay, clock)
    seeds = list(seeds)

    def one(seed):
        return crawl_site(seed, cfg, fetcher, politeness=politeness, suffixes=suffixes, aliases=aliases)

    if workers <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, seeds))


def site_outlink_targets(
    result: CrawlResult,
    granularity: Granularity | str = Granularity.SUBDOMAIN,
    *,
    suffixes: PublicSuffixList | None = None,
    aliases: AliasTable | None = None,
) -> list[str]:
    """Distinct external site keys linked from the crawl, sorted."""
    sources = set(result.page_count_per_site)
    targets = set()
    for record in result.site_outlinks:
        url = record.target_url or record.target
        try:
            key = canonicalize(reduce_to_site_key(url, granularity, suffixes), aliases).value
        except ReductionError:
            continue
        src = canonicalize(reduce_to_site_key(record.source, granularity, suffixes), aliases).value
        if key != src and key not in sources:
            targets.add(key)
    return sorted(targets)
