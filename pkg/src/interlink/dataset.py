"""Organization samples and the in/out link data sets built over them."""

from __future__ import annotations

import csv
import enum
import json
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import CapabilityWarning, ClassificationError, ClassificationWarning, RegistryError, ReductionError
from .linkindex import DEFAULT_MAX_RESULTS, LinkProvider, harvest_links
from .records import Direction, LinkRecord
from .urls import (
    AliasTable,
    Granularity,
    PublicSuffixList,
    SiteKey,
    Url,
    default_suffixes,
    normalize_key,
    reduce_host,
)

REGISTRY_HEADER = ["key", "name", "sector", "relationship", "category"]


class Sector(str, enum.Enum):
    INDUSTRY = "Industry"
    ACADEMIA = "Academia"
    GOVERNMENT = "Government"


class Relationship(str, enum.Enum):
    TENANT = "Tenant"
    INFORMATION = "Information"
    SUPPORT = "Support"
    PARTNERSHIP = "Partnership"
    MEMBERSHIP = "Membership"
    INCUBATOR = "Incubator"
    OTHER = "Other"


def _enum_token(enum_cls, token: str):
    token = token.strip()
    for member in enum_cls:
        if member.value.lower() == token.lower():
            return member
    raise ValueError(token)


@dataclass(frozen=True)
class Organization:
    key: str
    name: str
    sector: Sector
    relationship: Relationship = Relationship.OTHER
    category: str = ""


def load_registry(path: str | Path, aliases: AliasTable | None = None) -> list[Organization]:
    """Read a ``key,name,sector,relationship,category`` CSV registry.

    Keys are normalized and mapped through *aliases*; two rows ending up
    on the same key are rejected.
    """
    orgs: list[Organization] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != REGISTRY_HEADER:
            raise RegistryError(f"{path}: header must be exactly {','.join(REGISTRY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(REGISTRY_HEADER):
                raise RegistryError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            raw_key, name, sector, relationship, category = row
            try:
                key = normalize_key(raw_key)
            except ValueError:
                raise RegistryError(f"{path}:{lineno}: bad site key {raw_key!r}") from None
            if aliases is not None:
                key = aliases.canonical(key)
            try:
                sector_v = _enum_token(Sector, sector)
            except ValueError:
                raise RegistryError(f"{path}:{lineno}: unknown sector {sector!r}") from None
            try:
                rel_v = _enum_token(Relationship, relationship)
            except ValueError:
                raise RegistryError(f"{path}:{lineno}: unknown relationship {relationship!r}") from None
            if key in seen:
                raise RegistryError(f"{path}:{lineno}: duplicate key {key} (first on line {seen[key]})")
            seen[key] = lineno
            orgs.append(Organization(key, name.strip() or key, sector_v, rel_v, category.strip()))
    return orgs


def write_registry(orgs: Iterable[Organization], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REGISTRY_HEADER)
        for o in orgs:
            writer.writerow([o.key, o.name, o.sector.value, o.relationship.value, o.category])


@dataclass
class Sample:
    seed: Organization
    members: list[Organization]
    granularity: Granularity = Granularity.SUBDOMAIN
    audit: dict = field(default_factory=dict)

    def __post_init__(self):
        self.granularity = Granularity.parse(self.granularity)
        keys = [m.key for m in self.members]
        if len(set(keys)) != len(keys):
            dupes = sorted(k for k, n in Counter(keys).items() if n > 1)
            raise ValueError(f"duplicate sample keys: {', '.join(dupes)}")
        if self.seed.key not in keys:
            raise ValueError(f"seed {self.seed.key} is not a sample member")
        self.members = sorted(self.members, key=lambda m: m.key)
        self._by_key = {m.key: m for m in self.members}

    @classmethod
    def from_registry(cls, registry: Sequence[Organization], seed_key: str, granularity=Granularity.SUBDOMAIN):
        by_key = {o.key: o for o in registry}
        if seed_key not in by_key:
            raise ValueError(f"seed {seed_key} is not in the registry")
        return cls(by_key[seed_key], list(registry), granularity)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, key: str) -> bool:
        return key in self._by_key

    @property
    def keys(self) -> list[str]:
        return [m.key for m in self.members]

    def get(self, key: str) -> Organization | None:
        return self._by_key.get(key)


class KeyResolver:
    """Assigns hosts to site keys, preferring declared organization keys.

    A host belongs to the most specific known key it equals or lies below
    (aliases applied at every level); otherwise it is reduced at the
    configured granularity.
    """

    def __init__(
        self,
        known_keys: Iterable[str] = (),
        granularity: Granularity | str = Granularity.SUBDOMAIN,
        aliases: AliasTable | None = None,
        suffixes: PublicSuffixList | None = None,
        match_subdomains: bool = True,
    ):
        self.known = set(known_keys)
        self.granularity = Granularity.parse(granularity)
        self.aliases = aliases or AliasTable()
        self.suffixes = suffixes or default_suffixes()
        self.match_subdomains = match_subdomains
        self._cache: dict[str, str | None] = {}

    def __call__(self, item: Url | SiteKey | str | None) -> str | None:
        if item is None:
            return None
        host = item.host if isinstance(item, Url) else item.value if isinstance(item, SiteKey) else item
        if host not in self._cache:
            self._cache[host] = self._resolve(host)
        return self._cache[host]

    def _resolve(self, host: str) -> str | None:
        try:
            reduced = reduce_host(host, Granularity.SUBDOMAIN, self.suffixes)
            domain = reduce_host(host, Granularity.DOMAIN, self.suffixes)
        except ReductionError:
            return None
        labels = reduced.split(".")
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            mapped = self.aliases.canonical(candidate)
            if mapped in self.known or (mapped != candidate and i == 0):
                return mapped
            if not self.match_subdomains or candidate == domain:
                break
        key = reduced if self.granularity is Granularity.SUBDOMAIN else domain
        return self.aliases.canonical(key)

    def record_pair(self, record: LinkRecord) -> tuple[str | None, str | None]:
        return self(record.source_url or record.source), self(record.target_url or record.target)


# -- data sets ---------------------------------------------------------------------------


class DatasetKind(str, enum.Enum):
    IN = "in"
    OUT = "out"

    @property
    def direction(self) -> Direction:
        return Direction.INLINKS if self is DatasetKind.IN else Direction.OUTLINKS


@dataclass(frozen=True, order=True)
class SiteLink:
    source: str
    target: str
    providers: tuple[str, ...] = ()

    @property
    def pair(self) -> tuple[str, str]:
        return self.source, self.target


@dataclass
class LinkDataset:
    """Site-level links for one direction, merged over providers."""

    kind: DatasetKind
    links: list[SiteLink]
    raw_count: int
    provider_names: list[str]
    retrieved_count: int = 0
    self_links_dropped: int = 0
    per_provider_raw: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, list[str]] = field(default_factory=dict)
    link_counts: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.links = sorted(self.links)

    @property
    def deduped_count(self) -> int:
        return len(self.links)

    def pairs(self) -> set[tuple[str, str]]:
        return {link.pair for link in self.links}

    def provider_pairs(self, name: str) -> set[tuple[str, str]]:
        return {link.pair for link in self.links if name in link.providers}

    def counters(self) -> dict:
        return {
            "kind": self.kind.value,
            "providers": list(self.provider_names),
            "retrieved": self.retrieved_count,
            "raw": self.raw_count,
            "self_links_dropped": self.self_links_dropped,
            "deduped": self.deduped_count,
            "per_provider_raw": dict(sorted(self.per_provider_raw.items())),
            "per_provider_deduped": {n: len(self.provider_pairs(n)) for n in sorted(self.provider_names)},
            "skipped": {k: list(v) for k, v in sorted(self.skipped.items())},
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("source\ttarget\tproviders\n")
            for link in self.links:
                fh.write(f"{link.source}\t{link.target}\t{','.join(link.providers)}\n")
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps(self.counters(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinkDataset":
        path = Path(path)
        links = []
        with open(path, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    s, t, p = line.split("\t")
                    links.append(SiteLink(s, t, tuple(x for x in p.split(",") if x)))
        c = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
        return cls(
            DatasetKind(c["kind"]), links, c["raw"], c["providers"], c["retrieved"],
            c["self_links_dropped"], c["per_provider_raw"], c["skipped"],
        )


def build_dataset(
    kind: DatasetKind | str,
    providers: Sequence[LinkProvider],
    sample: Sample,
    granularity: Granularity | str | None = None,
    *,
    cap: int = DEFAULT_MAX_RESULTS,
    aliases: AliasTable | None = None,
    suffixes: PublicSuffixList | None = None,
    match_subdomains: bool = True,
    workers: int = 1,
) -> LinkDataset:
    """Harvest every member (under each of its alias names) from every
    provider and merge at site-key level.

    Names a provider cannot be asked about (see its capabilities) are
    skipped for that provider and listed in ``dataset.skipped``.
    """
    kind = DatasetKind(kind)
    granularity = Granularity.parse(granularity or sample.granularity)
    direction = kind.direction
    resolve = KeyResolver(sample.keys, granularity, aliases, suffixes, match_subdomains)

    # every alias of a member is queried; links to any of them belong to the member
    table = aliases or AliasTable()
    jobs = []
    skipped: dict[str, list[str]] = {}
    for member in sample.members:
        for name in table.names(member.key):
            for provider in providers:
                if provider.capabilities().supports(direction, name, suffixes):
                    jobs.append((name, provider))
                else:
                    skipped.setdefault(provider.name, []).append(name)

    def run(job):
        name, provider = job
        return harvest_links(provider, name, direction, cap, suffixes=suffixes)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            harvests = list(pool.map(run, jobs))
    else:
        harvests = [run(j) for j in jobs]

    pair_providers: dict[tuple[str, str], set[str]] = {}
    counts: Counter = Counter()
    per_provider_raw: Counter = Counter()
    raw = retrieved = self_links = 0
    for (key, provider), harvest in zip(jobs, harvests):
        retrieved += harvest.retrieved
        raw += len(harvest.records)
        per_provider_raw[provider.name] += len(harvest.records)
        for record in harvest.records:
            s, t = resolve.record_pair(record)
            if s is None or t is None:
                continue
            if s == t:
                self_links += 1
                continue
            pair_providers.setdefault((s, t), set()).add(provider.name)
            counts[(s, t)] += 1

    for name, keys in skipped.items():
        warnings.warn(
            CapabilityWarning(f"{name} cannot answer {direction.value} for: {', '.join(keys)}"), stacklevel=2
        )
    links = [SiteLink(s, t, tuple(sorted(p))) for (s, t), p in pair_providers.items()]
    names = sorted({p.name for p in providers})
    return LinkDataset(
        kind, links, raw, names, retrieved, self_links, dict(per_provider_raw), skipped, counts
    )


@dataclass(frozen=True)
class OverlapStats:
    size_a: int
    size_b: int
    intersection: int
    union: int
    jaccard: float

    @property
    def overlap_percent(self) -> float:
        return 100.0 * self.jaccard


def _pairs(items) -> set:
    if isinstance(items, LinkDataset):
        return items.pairs()
    out = set()
    for item in items:
        out.add(item.pair if hasattr(item, "pair") else tuple(item))
    return out


def overlap_stats(a, b) -> OverlapStats:
    """Set overlap of two link collections (pairs, SiteLinks or datasets).

    Two empty collections are identical, so their Jaccard index is 1.
    """
    sa, sb = _pairs(a), _pairs(b)
    inter = len(sa & sb)
    union = len(sa | sb)
    jaccard = inter / union if union else 1.0
    return OverlapStats(len(sa), len(sb), inter, union, jaccard)


def sample_from_seed_crawl(
    crawl,
    registry: Sequence[Organization],
    *,
    seed_key: str | None = None,
    granularity: Granularity | str = Granularity.SUBDOMAIN,
    strict: bool = True,
    exclude: Iterable[str] = (),
    aliases: AliasTable | None = None,
    suffixes: PublicSuffixList | None = None,
) -> Sample:
    """The seed site plus every classified site its crawl links to.

    In strict mode any linked site missing from *registry* (and not in
    *exclude*) is an error.  Otherwise such sites join as Industry/Other
    with a :class:`ClassificationWarning`.
    """
    granularity = Granularity.parse(granularity)
    by_key = {o.key: o for o in registry}
    resolve = KeyResolver(by_key, granularity, aliases, suffixes)
    if seed_key is None:
        sites = list(crawl.page_count_per_site)
        if len(sites) != 1:
            raise ValueError("crawl covers several sites; pass seed_key")
        seed_key = sites[0]
    seed_key = resolve(seed_key) or seed_key
    excluded = {resolve(normalize_key(k)) for k in exclude}

    hosts = set()
    keys: set[str] = set()
    for record in crawl.site_outlinks:
        target = record.target_url or record.target
        hosts.add(target.host if isinstance(target, Url) else target.value)
        key = resolve(target)
        if key is not None and key != seed_key:
            keys.add(key)
    kept = sorted(keys - excluded)

    missing = [k for k in [seed_key, *kept] if k not in by_key]
    if missing and strict:
        raise ClassificationError(missing)
    if missing:
        warnings.warn(
            ClassificationWarning(f"{len(missing)} unclassified sites default to Industry/Other: {', '.join(missing)}"),
            stacklevel=2,
        )

    def org(key):
        return by_key.get(key) or Organization(key, key, Sector.INDUSTRY, Relationship.OTHER, "unclassified")

    members = [org(seed_key)] + [org(k) for k in kept]
    audit = {
        "site_outlinks": len(crawl.site_outlinks),
        "distinct_target_hosts": len(hosts),
        "distinct_target_keys": len(keys),
        "excluded": len(keys & excluded),
        "organizations": len(kept),
        "unclassified": len(missing),
    }
    return Sample(org(seed_key), members, granularity, audit)


def relationship_counts(sample: Sample) -> Counter:
    """Relationship categories of the sample's non-seed members."""
    return Counter(m.relationship for m in sample.members if m.key != sample.seed.key)
