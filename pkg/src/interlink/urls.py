"""URL parsing and reduction of URLs to (sub)domain site keys.

Site keys are plain lowercase hostnames.  A key has either *domain*
granularity (the registrable domain, one label below a public suffix) or
*subdomain* granularity (the full host with a leading ``www.`` removed).
Registrable-domain boundaries come from a bundled Public Suffix List
snapshot, see :func:`default_suffixes`.

Organizations reachable under several names are merged by alias rules
(:class:`AliasTable`).  :func:`rank_alias_candidates` only suggests a
canonical name; the persisted rule file is authoritative.
"""

from __future__ import annotations

import enum
import functools
import json
import re
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping
from urllib.parse import urlsplit

from .errors import ConfigError, ReductionError, UrlParseError

_SCHEME_RE = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.-]*://")
_LABEL_RE = re.compile(r"^[a-z0-9_](?:[a-z0-9_-]{0,61}[a-z0-9_])?$")
_IPV4_RE = re.compile(r"^\d{1,3}(?:\.\d{1,3}){3}$")
_DEFAULT_PORTS = {"http": 80, "https": 443}


class Granularity(str, enum.Enum):
    DOMAIN = "domain"
    SUBDOMAIN = "subdomain"

    @classmethod
    def parse(cls, value: "Granularity | str") -> "Granularity":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown granularity {value!r}") from None


@dataclass(frozen=True)
class Url:
    scheme: str
    host: str
    path: str = "/"
    raw: str = field(default="", compare=False, repr=False)
    port: int | None = None
    query: str = ""

    def __str__(self) -> str:
        netloc = self.host if self.port is None else f"{self.host}:{self.port}"
        text = f"{self.scheme}://{netloc}{self.path}"
        if self.query:
            text += "?" + self.query
        return text


@dataclass(frozen=True, order=True)
class SiteKey:
    value: str
    granularity: Granularity = Granularity.SUBDOMAIN

    def __str__(self) -> str:
        return self.value


def _ascii_host(host: str) -> str:
    host = host.strip().rstrip(".").lower()
    if host and not host.isascii():
        try:
            host = host.encode("idna").decode("ascii")
        except UnicodeError:
            return ""
    return host


def _valid_host(host: str) -> bool:
    if not host or len(host) > 253:
        return False
    return all(_LABEL_RE.match(label) for label in host.split("."))


def parse_url(raw: str) -> Url:
    """Parse *raw* into a normalized :class:`Url`.

    Bare hosts get the ``http`` scheme.  Host case, userinfo, default ports
    and fragments are normalized away; the path is kept verbatim.
    """
    if raw is None or not str(raw).strip():
        raise UrlParseError(str(raw), "empty input")
    text = str(raw).strip()
    if text.startswith("//"):
        text = "http:" + text
    elif not _SCHEME_RE.match(text):
        text = "http://" + text
    try:
        parts = urlsplit(text)
        port = parts.port
    except ValueError as exc:
        raise UrlParseError(raw, str(exc)) from None
    host = _ascii_host(parts.hostname or "")
    if not _valid_host(host):
        raise UrlParseError(raw)
    scheme = parts.scheme.lower()
    if port is not None and _DEFAULT_PORTS.get(scheme) == port:
        port = None
    return Url(
        scheme=scheme,
        host=host,
        path=parts.path or "/",
        raw=str(raw),
        port=port,
        query=parts.query,
    )


class PublicSuffixList:
    """Public suffix rules with wildcard (``*.``) and exception (``!``) support."""

    def __init__(self, rules: Iterable[str], version: str | None = None):
        self.version = version
        self._normal: set[str] = set()
        self._wildcard: set[str] = set()
        self._exception: set[str] = set()
        for rule in rules:
            rule = rule.strip().lower()
            if not rule:
                continue
            if rule.startswith("!"):
                self._exception.add(_ascii_host(rule[1:]))
            elif rule.startswith("*."):
                self._wildcard.add(_ascii_host(rule[2:]))
            else:
                self._normal.add(_ascii_host(rule))

    @classmethod
    def from_text(cls, text: str) -> "PublicSuffixList":
        rules = []
        version = None
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("//"):
                if version is None and line.startswith("// VERSION:"):
                    version = line.split(":", 1)[1].strip()
                continue
            if line:
                # only the first whitespace-delimited token is the rule
                rules.append(line.split()[0])
        return cls(rules, version)

    @classmethod
    def from_file(cls, path: str | Path) -> "PublicSuffixList":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def __len__(self) -> int:
        return len(self._normal) + len(self._wildcard) + len(self._exception)

    def public_suffix(self, host: str) -> str:
        labels = host.split(".")
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            if candidate in self._exception:
                return ".".join(labels[i + 1:])
            if candidate in self._normal:
                return candidate
            if i + 1 < len(labels) and ".".join(labels[i + 1:]) in self._wildcard:
                return candidate
        # implicit "*" rule
        return labels[-1]

    def is_public_suffix(self, host: str) -> bool:
        return self.public_suffix(host) == host

    def registrable_domain(self, host: str) -> str:
        suffix = self.public_suffix(host)
        if suffix == host:
            raise ReductionError(f"{host!r} is a public suffix and names no organization")
        labels = host.split(".")
        return ".".join(labels[-(suffix.count(".") + 2):])


@functools.lru_cache(maxsize=None)
def default_suffixes() -> PublicSuffixList:
    """The bundled Public Suffix List snapshot."""
    text = resources.files("interlink").joinpath("data/public_suffix_list.dat").read_text(
        encoding="utf-8"
    )
    return PublicSuffixList.from_text(text)


def _host_of(url: Url | SiteKey | str) -> str:
    if isinstance(url, Url):
        return url.host
    if isinstance(url, SiteKey):
        return url.value
    return _ascii_host(url)


def reduce_host(
    host: str,
    granularity: Granularity | str = Granularity.SUBDOMAIN,
    suffixes: PublicSuffixList | None = None,
) -> str:
    """Reduce a bare hostname to a site key value."""
    granularity = Granularity.parse(granularity)
    suffixes = suffixes or default_suffixes()
    if _IPV4_RE.match(host):
        return host
    domain = suffixes.registrable_domain(host)
    if granularity is Granularity.DOMAIN:
        return domain
    if host.startswith("www.") and host != "www." + suffixes.public_suffix(host):
        host = host[4:]
    return host


def reduce_to_site_key(
    url: Url | SiteKey | str,
    granularity: Granularity | str = Granularity.SUBDOMAIN,
    suffixes: PublicSuffixList | None = None,
) -> SiteKey:
    granularity = Granularity.parse(granularity)
    return SiteKey(reduce_host(_host_of(url), granularity, suffixes), granularity)


def is_subdomain(key: SiteKey | str, suffixes: PublicSuffixList | None = None) -> bool:
    """True when *key* names a host below its registrable domain."""
    host = _host_of(key)
    if _IPV4_RE.match(host):
        return False
    return host != (suffixes or default_suffixes()).registrable_domain(host)


def normalize_key(text: str) -> str:
    """Normalize a hand-written site key (registry, alias files) to host form."""
    host = _host_of(text.strip())
    if "/" in host or ":" in host:
        host = parse_url(host).host
    if not _valid_host(host):
        raise UrlParseError(text, "not a hostname")
    try:
        return reduce_host(host, Granularity.SUBDOMAIN)
    except ReductionError:
        raise UrlParseError(text, "a public suffix is not a site key") from None


def host_matches(host: str, key: str) -> bool:
    """True if *host* is *key* or lies below it (``www.`` ignored)."""
    return host == key or host.endswith("." + key) or host == "www." + key


# -- alias resolution -------------------------------------------------------


@dataclass(frozen=True)
class AliasEvidence:
    pages: int | None = None
    inlinks: int | None = None
    outlinks: int | None = None
    first_seen: date | None = None

    def __post_init__(self):
        for name in ("pages", "inlinks", "outlinks"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"negative {name} in alias evidence")

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "AliasEvidence":
        data = dict(data or {})
        first_seen = data.get("first_seen")
        if isinstance(first_seen, str):
            first_seen = date.fromisoformat(first_seen)
        return cls(data.get("pages"), data.get("inlinks"), data.get("outlinks"), first_seen)

    def to_dict(self) -> dict:
        out = {}
        for name in ("pages", "inlinks", "outlinks"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.first_seen is not None:
            out["first_seen"] = self.first_seen.isoformat()
        return out

    @property
    def empty(self) -> bool:
        return self == AliasEvidence()


def rank_alias_candidates(evidence: Mapping[str, AliasEvidence | Mapping]) -> list[str]:
    """Order aliases best-first by pages, inlinks, outlinks, then age.

    Larger counts win; for ties the alias active since the earliest date
    wins.  A missing field sorts after every present value of that field.
    Remaining ties fall back to the alias name so the order is stable.
    """
    parsed = {
        alias: ev if isinstance(ev, AliasEvidence) else AliasEvidence.from_dict(ev)
        for alias, ev in evidence.items()
    }
    if not parsed or all(ev.empty for ev in parsed.values()):
        raise ConfigError("no evidence for any alias; choose the canonical name manually")

    def sort_key(alias: str):
        ev = parsed[alias]
        counts = tuple(
            (1, 0) if value is None else (0, -value) for value in (ev.pages, ev.inlinks, ev.outlinks)
        )
        age = (1, 0) if ev.first_seen is None else (0, ev.first_seen.toordinal())
        return counts + (age, alias)

    return sorted(parsed, key=sort_key)


@dataclass(frozen=True)
class AliasRule:
    aliases: tuple[str, ...]
    canonical: str
    evidence: Mapping[str, AliasEvidence] = field(default_factory=dict)

    def __post_init__(self):
        aliases = tuple(normalize_key(a) for a in self.aliases)
        canonical = normalize_key(self.canonical)
        if len(set(aliases)) != len(aliases):
            raise ConfigError(f"duplicate alias in rule for {canonical}")
        if canonical not in aliases:
            raise ConfigError(f"canonical {canonical} is not one of its aliases")
        object.__setattr__(self, "aliases", aliases)
        object.__setattr__(self, "canonical", canonical)

    @classmethod
    def from_dict(cls, data: Mapping) -> "AliasRule":
        evidence = {
            normalize_key(k): AliasEvidence.from_dict(v) for k, v in (data.get("evidence") or {}).items()
        }
        return cls(tuple(data["aliases"]), data["canonical"], evidence)

    def to_dict(self) -> dict:
        out = {"aliases": list(self.aliases), "canonical": self.canonical}
        if self.evidence:
            out["evidence"] = {k: v.to_dict() for k, v in sorted(self.evidence.items())}
        return out


class AliasTable:
    """Validated alias rules; maps any alias to its canonical key."""

    def __init__(self, rules: Iterable[AliasRule] = ()):
        self.rules = list(rules)
        self._map: dict[str, str] = {}
        for rule in self.rules:
            for alias in rule.aliases:
                if alias in self._map:
                    raise ConfigError(f"{alias} appears in more than one alias rule")
                self._map[alias] = rule.canonical

    def __len__(self) -> int:
        return len(self.rules)

    def __contains__(self, key: str) -> bool:
        return key in self._map

    def canonical(self, key: str) -> str:
        return self._map.get(key, key)

    def names(self, key: str) -> tuple[str, ...]:
        """Every alias sharing *key*'s canonical name, canonical first."""
        canonical = self.canonical(key)
        for rule in self.rules:
            if rule.canonical == canonical:
                return (canonical, *sorted(a for a in rule.aliases if a != canonical))
        return (key,)

    @classmethod
    def load(cls, path: str | Path) -> "AliasTable":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, list):
            raise ConfigError(f"{path}: expected a JSON array of alias rules")
        return cls(AliasRule.from_dict(item) for item in data)

    def dump(self, path: str | Path) -> None:
        payload = [rule.to_dict() for rule in self.rules]
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def canonicalize(key, rules: AliasTable | Iterable[AliasRule] | None):
    """Map *key* (a :class:`SiteKey` or key string) to its canonical alias."""
    if rules is None:
        return key
    table = rules if isinstance(rules, AliasTable) else AliasTable(rules)
    if isinstance(key, SiteKey):
        return SiteKey(table.canonical(key.value), key.granularity)
    return table.canonical(key)
