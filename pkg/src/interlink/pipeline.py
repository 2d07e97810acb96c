"""Configuration-driven pipeline: crawl, harvest, build networks, analyze, export."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .crawler import CorpusFetcher, CrawlConfig, CrawlResult, HttpFetcher, Politeness, SystemClock, VirtualClock, crawl_site
from .dataset import DatasetKind, LinkDataset, Sample, build_dataset, load_registry, sample_from_seed_crawl, write_registry
from .errors import ConfigError, CrawlError, InterlinkError, RegistryError, UrlParseError
from .linkindex import DEFAULT_MAX_RESULTS, ExternalIndexAdapter, LocalLinkIndex, ProviderCapabilities
from .metrics import (
    RECIPROCITY_METHODS,
    CentralityTable,
    cohesion,
    degree_correlations,
    gini_report,
    harvested_gini_report,
    sector_matrix,
    size_correlations,
)
from .network import combine, interlink, prune_seed_outlinks, write_matrix
from .records import Direction
from .report import ParkReport, build_tables, digest_json, export_graph, render_tables, sha256_path, write_manifest
from .urls import AliasTable, Granularity, parse_url, reduce_to_site_key

log = logging.getLogger(__name__)

GINI_VARIANTS = ("plain", "corrected")
KNOWN_KEYS = {
    "seeds", "granularity", "crawl", "providers", "datasets", "max_results", "registry",
    "aliases", "page_counts", "output_dir", "flags",
}
DEFAULT_FLAGS = {
    "strict": True,
    "exclude_seed_outlinks": True,
    "reciprocity": "arc",
    "gini": "plain",
    "match_subdomains": True,
    "prune_seed": False,
}
DEFAULT_CRAWL = {
    "max_depth": 2,
    "delay_ms": 1000,
    "max_pages_per_site": 10000,
    "timeout_s": 10.0,
    "user_agent": "interlink-crawler/0.1",
    "respect_robots": True,
    "corpus": None,
    "workers": 1,
}


@dataclass
class SeedConfig:
    url: str
    label: str | None = None
    registry: Path | None = None
    prune_seed: bool | None = None
    exclude: list[str] = field(default_factory=list)


@dataclass
class PipelineConfig:
    raw: dict
    base: Path
    seeds: list[SeedConfig]
    granularity: Granularity
    crawl: dict
    providers: list[dict]
    datasets: dict[str, list[str]]
    max_results: int
    registry: Path | None
    aliases: Path | None
    page_counts: Path | None
    output_dir: Path
    flags: dict

    @classmethod
    def load(cls, path: str | Path, out: str | Path | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw, path.parent, out)

    @classmethod
    def from_dict(cls, raw: dict, base: str | Path = ".", out: str | Path | None = None) -> "PipelineConfig":
        base = Path(base)
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")

        def rel(value):
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else base / p

        seeds = []
        for item in raw.get("seeds") or []:
            if isinstance(item, str):
                item = {"url": item}
            if not isinstance(item, dict) or "url" not in item:
                raise ConfigError(f"bad seed entry {item!r}")
            seeds.append(
                SeedConfig(item["url"], item.get("label"), rel(item.get("registry")), item.get("prune_seed"), list(item.get("exclude", [])))
            )
        crawl = {**DEFAULT_CRAWL, **(raw.get("crawl") or {})}
        crawl["corpus"] = rel(crawl.get("corpus"))
        flags = {**DEFAULT_FLAGS, **(raw.get("flags") or {})}
        providers = raw.get("providers") or [{"type": "local", "name": "crawl"}]
        datasets = raw.get("datasets") or {"in": [providers[0]["name"]], "out": [providers[0]["name"]]}
        output = out if out is not None else rel(raw.get("output_dir", "out"))
        try:
            granularity = Granularity.parse(raw.get("granularity", "subdomain"))
        except ConfigError:
            raise
        return cls(
            raw=raw,
            base=base,
            seeds=seeds,
            granularity=granularity,
            crawl=crawl,
            providers=[dict(p) for p in providers],
            datasets={k: list(v) for k, v in datasets.items()},
            max_results=int(raw.get("max_results", DEFAULT_MAX_RESULTS)),
            registry=rel(raw.get("registry")),
            aliases=rel(raw.get("aliases")),
            page_counts=rel(raw.get("page_counts")),
            output_dir=Path(output),
            flags=flags,
        )

    def digest(self) -> str:
        return digest_json(self.raw)

    def crawl_config(self) -> CrawlConfig:
        c = self.crawl
        return CrawlConfig(
            max_depth=int(c["max_depth"]),
            per_host_delay=float(c["delay_ms"]) / 1000.0,
            max_pages_per_site=int(c["max_pages_per_site"]),
            fetch_timeout=float(c["timeout_s"]),
            user_agent=c["user_agent"],
            granularity=self.granularity,
            respect_robots=bool(c["respect_robots"]),
        )

    def input_paths(self) -> dict[str, Path]:
        paths = {}
        for name in ("registry", "aliases", "page_counts"):
            if getattr(self, name) is not None:
                paths[name] = getattr(self, name)
        if self.crawl.get("corpus"):
            paths["corpus"] = self.crawl["corpus"]
        for s in self.seeds:
            if s.registry is not None:
                paths[f"registry:{s.label or s.url}"] = s.registry
        for p in self.providers:
            if p.get("path"):
                paths[f"provider:{p['name']}"] = self.base / p["path"]
        return paths


# -- validation --------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    level: str  # "error" | "warning"
    code: str
    message: str

    def __str__(self):
        return f"{self.level.upper()} [{self.code}] {self.message}"


def _provider_caps(p: dict) -> ProviderCapabilities:
    return ProviderCapabilities.from_dict(p.get("capabilities"))


def validate(cfg_or_path, out=None) -> list[Finding]:
    """Check a configuration without touching the network or the output directory."""
    findings: list[Finding] = []
    if isinstance(cfg_or_path, PipelineConfig):
        cfg = cfg_or_path
    else:
        try:
            cfg = PipelineConfig.load(cfg_or_path, out)
        except ConfigError as exc:
            return [Finding("error", "config", str(exc))]

    for key in sorted(set(cfg.raw) - KNOWN_KEYS):
        findings.append(Finding("warning", "config", f"unknown key {key!r} ignored"))
    if not cfg.seeds:
        findings.append(Finding("error", "config", "no seeds configured"))
    for seed in cfg.seeds:
        try:
            reduce_to_site_key(parse_url(seed.url), cfg.granularity)
        except (UrlParseError, InterlinkError) as exc:
            findings.append(Finding("error", "seed", str(exc)))
    if cfg.flags.get("reciprocity") not in RECIPROCITY_METHODS:
        findings.append(Finding("error", "flags", f"reciprocity must be one of {RECIPROCITY_METHODS}"))
    if cfg.flags.get("gini") not in GINI_VARIANTS:
        findings.append(Finding("error", "flags", f"gini must be one of {GINI_VARIANTS}"))
    try:
        cfg.crawl_config()
    except (ValueError, TypeError) as exc:
        findings.append(Finding("error", "crawl", str(exc)))

    for name, path in cfg.input_paths().items():
        if not Path(path).exists():
            findings.append(Finding("error", "path", f"{name}: {path} does not exist"))

    aliases = None
    if cfg.aliases is not None and cfg.aliases.exists():
        try:
            aliases = AliasTable.load(cfg.aliases)
        except (ConfigError, KeyError, ValueError) as exc:
            findings.append(Finding("error", "aliases", str(exc)))
    registries = {s.registry or cfg.registry for s in cfg.seeds}
    if None in registries:
        findings.append(Finding("error", "registry", "a seed has no registry"))
    for reg in sorted(r for r in registries if r is not None):
        if not Path(reg).exists():
            continue
        try:
            load_registry(reg, aliases)
        except (RegistryError, ConfigError) as exc:
            findings.append(Finding("error", "registry", str(exc)))

    names = [p.get("name") for p in cfg.providers]
    if len(set(names)) != len(names) or None in names:
        findings.append(Finding("error", "providers", "providers need unique names"))
    by_name = {p.get("name"): p for p in cfg.providers}
    for p in cfg.providers:
        if p.get("type", "local") not in ("local", "external"):
            findings.append(Finding("error", "providers", f"{p.get('name')}: unknown type {p.get('type')!r}"))
        if p.get("type") == "external":
            for k in ("endpoint",):
                if k not in p:
                    findings.append(Finding("error", "providers", f"{p.get('name')}: missing {k}"))
    for kind, plist in cfg.datasets.items():
        if kind not in ("in", "out"):
            findings.append(Finding("error", "datasets", f"unknown data set {kind!r}"))
            continue
        direction = DatasetKind(kind).direction
        usable = []
        for name in plist:
            if name not in by_name:
                findings.append(Finding("error", "datasets", f"{kind}: unknown provider {name!r}"))
                continue
            caps = _provider_caps(by_name[name])
            grans = caps.granularities(direction)
            if not grans:
                others = [n for n in plist if n != name]
                fallback = ", ".join(others) if others else "no other provider"
                findings.append(
                    Finding("warning", "capability", f"{name} cannot answer {direction.value}; {kind} data relies on {fallback}")
                )
                continue
            usable.append(name)
            if Granularity.SUBDOMAIN not in grans:
                findings.append(
                    Finding("warning", "capability", f"{name} answers {direction.value} for registrable domains only; subdomain members are skipped for it")
                )
        if not usable and plist:
            findings.append(Finding("error", "capability", f"no provider can build the {kind} data set"))
    return findings


# -- running -----------------------------------------------------------------------------


class Run:
    """One pipeline execution writing into ``cfg.output_dir``."""

    def __init__(self, cfg: PipelineConfig, log_fn=None):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.log = log_fn or (lambda msg: log.info(msg))
        self.aliases = AliasTable.load(cfg.aliases) if cfg.aliases else AliasTable()
        self.crawl_cfg = cfg.crawl_config()
        corpus = cfg.crawl.get("corpus")
        if corpus:
            self.fetcher = CorpusFetcher(corpus)
            self.clock = VirtualClock()
            self._corpus_digest = sha256_path(corpus)
        else:
            self.fetcher = HttpFetcher(self.crawl_cfg.fetch_timeout, self.crawl_cfg.user_agent)
            self.clock = SystemClock()
            self._corpus_digest = None
        self.politeness = Politeness(self.crawl_cfg.per_host_delay, self.clock)
        self.seed_crawls: dict[str, CrawlResult] = {}
        self.seed_status: dict[str, str] = {}
        self.samples: dict[str, Sample] = {}
        self.member_crawls: dict[str, CrawlResult] = {}
        self.datasets: dict[str, dict[str, LinkDataset]] = {}
        self.parks: list[ParkReport] = []
        self.counts: dict[str, dict] = {}
        self.outputs: list[Path] = []
        self.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.warnings: list[warnings.WarningMessage] = []

    # crawl results are cached by the digest of everything that determines them
    def _crawl_cached(self, url: str) -> CrawlResult:
        key = digest_json({"url": url, "crawl": self.crawl_cfg.__dict__ | {"seeds": []}, "corpus": self._corpus_digest, "aliases": [r.to_dict() for r in self.aliases.rules]})
        cache = self.out / "cache" / "crawl" / f"{key[:32]}.jsonl"
        if self._corpus_digest is not None and cache.exists():
            return CrawlResult.read_jsonl(cache)
        result = crawl_site(url, self.crawl_cfg, self.fetcher, politeness=self.politeness, aliases=self.aliases)
        cache.parent.mkdir(parents=True, exist_ok=True)
        result.write_jsonl(cache)
        return result

    def _label(self, seed: SeedConfig) -> str:
        return seed.label or reduce_to_site_key(parse_url(seed.url), self.cfg.granularity).value

    def crawl(self) -> dict[str, str]:
        out = self.out / "crawl"
        out.mkdir(parents=True, exist_ok=True)
        for seed in self.cfg.seeds:
            label = self._label(seed)
            try:
                result = self._crawl_cached(seed.url)
            except CrawlError as exc:
                self.seed_status[label] = f"failed: {exc}"
                self.log(f"crawl {label}: {exc}")
                continue
            self.seed_crawls[label] = result
            self.seed_status[label] = "ok"
            path = out / f"{label}.jsonl"
            result.write_jsonl(path)
            self.outputs.append(path)
            self.counts.setdefault(label, {})["seed_pages"] = len(result.pages)
            self.counts[label]["seed_site_outlinks"] = len(result.site_outlinks)
        index = LocalLinkIndex.from_crawls(self.seed_crawls.values(), name="seed-crawl", granularity=self.cfg.granularity)
        index.save(self.out / "index" / "seeds")
        return self.seed_status

    def _registry(self, seed: SeedConfig):
        path = seed.registry or self.cfg.registry
        if path is None:
            raise ConfigError(f"no registry for seed {seed.url}")
        return load_registry(path, self.aliases)

    def _providers(self, crawl_index: LocalLinkIndex) -> dict[str, Any]:
        providers = {}
        for p in self.cfg.providers:
            kind = p.get("type", "local")
            caps = _provider_caps(p)
            if kind == "local" and p.get("path"):
                providers[p["name"]] = LocalLinkIndex.load(
                    self.cfg.base / p["path"], name=p["name"], granularity=self.cfg.granularity, capabilities=caps
                )
            elif kind == "local":
                providers[p["name"]] = LocalLinkIndex(
                    crawl_index.edges, name=p["name"], granularity=self.cfg.granularity, capabilities=caps
                )
            else:
                providers[p["name"]] = ExternalIndexAdapter.from_config(p)
        return providers

    def harvest(self) -> None:
        if not self.seed_status:
            self.crawl()
        failed = [k for k, v in self.seed_status.items() if v != "ok"]
        if failed:
            raise CrawlError("unreachable seeds: " + ", ".join(failed))
        strict = bool(self.cfg.flags["strict"])
        for seed in self.cfg.seeds:
            label = self._label(seed)
            registry = self._registry(seed)
            sample = sample_from_seed_crawl(
                self.seed_crawls[label], registry, granularity=self.cfg.granularity,
                strict=strict, exclude=seed.exclude, aliases=self.aliases,
            )
            self.samples[label] = sample
            path = self.out / "samples" / f"{label}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_registry(sample.members, path)
            self.outputs.append(path)
            self.counts.setdefault(label, {}).update({f"sample_{k}": v for k, v in sample.audit.items()})

        members = sorted({m.key for s in self.samples.values() for m in s.members})
        for key in members:
            if key in self.member_crawls:
                continue
            try:
                self.member_crawls[key] = self._crawl_cached(f"http://{key}/")
            except CrawlError as exc:
                self.log(f"member crawl {key}: {exc}")
        crawl_index = LocalLinkIndex.from_crawls(
            [self.member_crawls[k] for k in sorted(self.member_crawls)], name="crawl", granularity=self.cfg.granularity
        )
        crawl_index.save(self.out / "index" / "crawl")
        providers = self._providers(crawl_index)

        for seed in self.cfg.seeds:
            label = self._label(seed)
            sample = self.samples[label]
            sets = {}
            for kind in ("in", "out"):
                names = self.cfg.datasets.get(kind, [])
                chosen = [providers[n] for n in names]
                ds = build_dataset(
                    kind, chosen, sample, self.cfg.granularity, cap=self.cfg.max_results,
                    aliases=self.aliases, match_subdomains=bool(self.cfg.flags["match_subdomains"]),
                )
                sets[kind] = ds
                path = self.out / "datasets" / label / f"{kind}.tsv"
                path.parent.mkdir(parents=True, exist_ok=True)
                ds.save(path)
                self.outputs.append(path)
                self.counts[label][f"{kind}_raw"] = ds.raw_count
                self.counts[label][f"{kind}_retrieved"] = ds.retrieved_count
                self.counts[label][f"{kind}_deduped"] = ds.deduped_count
            self.datasets[label] = sets

    def _page_counts(self) -> dict[str, int]:
        pages: dict[str, int] = {}
        for result in self.member_crawls.values():
            pages.update(result.page_count_per_site)
        if self.cfg.page_counts is not None:
            with open(self.cfg.page_counts, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    pages[self.aliases.canonical(row["key"].strip().lower())] = int(row["pages"])
        return pages

    def analyze(self, formats=("edgelist", "dot", "gexf")) -> list[ParkReport]:
        if not self.datasets:
            self.harvest()
        flags = self.cfg.flags
        pages = self._page_counts()
        corrected = flags["gini"] == "corrected"
        for seed in self.cfg.seeds:
            label = self._label(seed)
            sample = self.samples[label]
            sets = self.datasets[label]
            nets = {"in": interlink(sets["in"], sample), "out": interlink(sets["out"], sample)}
            nets["combined"] = combine(nets["in"], nets["out"])
            prune = seed.prune_seed if seed.prune_seed is not None else flags["prune_seed"]
            if prune:
                nets["pruned"] = prune_seed_outlinks(nets["combined"], sample.seed.key)
            analyzed = nets.get("pruned", nets["combined"])
            combined_ties = nets["combined"].ties
            coh = {
                k: cohesion(nets[k], combined_ties if k in ("in", "out") else None, flags["reciprocity"])
                for k in ("in", "out", "combined", "pruned")
                if k in nets and nets[k].n >= 2
            }
            corr = degree_correlations(nets["in"], nets["out"])
            corr.spearman_indeg_pages, corr.spearman_outdeg_pages = size_correlations(analyzed, pages)
            centrality = CentralityTable.of(analyzed)
            sectors = sector_matrix(analyzed, sample, exclude_seed_outlinks=bool(flags["exclude_seed_outlinks"]))
            park = ParkReport(
                label=label,
                sample=sample,
                networks=nets,
                cohesion=coh,
                correlations=corr,
                gini=gini_report({"in": nets["in"], "out": nets["out"]}, corrected),
                gini_harvested=harvested_gini_report(sets, sample.keys, corrected),
                centrality=centrality,
                sectors=sectors,
                dataset_counts={k: v.counters() for k, v in sets.items()},
            )
            self.parks.append(park)
            self.counts[label].update({f"{k}_ties": v.ties for k, v in nets.items()})
            self._write_networks(park, formats)

        tables = build_tables(self.parks)
        for style in ("text", "csv"):
            self.outputs += render_tables(tables, self.out / "tables", style)
        report_path = self.out / "reports" / "metrics.json"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(self.metrics_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.outputs.append(report_path)
        return self.parks

    def _write_networks(self, park: ParkReport, formats) -> None:
        d = self.out / "networks" / park.label
        d.mkdir(parents=True, exist_ok=True)
        for name, net in park.networks.items():
            path = d / f"{name}.matrix.tsv"
            write_matrix(net.nodes, net.adjacency.astype(int), path)
            self.outputs.append(path)
        graphs = {"combined": park.networks["combined"]}
        if "pruned" in park.networks:
            graphs["pruned"] = park.networks["pruned"]
        for name, net in graphs.items():
            cent = park.centrality if net is park.networks.get("pruned", park.networks["combined"]) else None
            for fmt in formats:
                ext = {"edgelist": "tsv", "dot": "dot", "gexf": "gexf"}[fmt]
                path = d / f"{name}.{'edges.' if fmt == 'edgelist' else ''}{ext}"
                export_graph(net, park.sample, cent, fmt, path)
                self.outputs.append(path)

    def export(self, formats=("edgelist", "dot", "gexf")) -> None:
        if not self.parks:
            self.analyze(formats)

    def metrics_json(self) -> dict:
        out = {}
        for p in self.parks:
            out[p.label] = {
                "seed": p.sample.seed.key,
                "cohesion": {k: vars(v) for k, v in p.cohesion.items()},
                "correlations": vars(p.correlations),
                "gini": {f"{a}_{b}": v for (a, b), v in sorted(p.gini.values.items())},
                "gini_harvested": {f"{a}_{b}": v for (a, b), v in sorted(p.gini_harvested.values.items())} if p.gini_harvested else None,
                "gini_variant": "corrected" if p.gini.corrected else "plain",
                "centrality": {
                    k: {"in_degree": p.centrality.in_degree[k], "out_degree": p.centrality.out_degree[k], "betweenness": p.centrality.betweenness[k]}
                    for k in p.centrality.nodes
                },
                "sectors": {
                    "counts": p.sectors.counts.tolist(),
                    "org_counts": {s.value: n for s, n in p.sectors.org_counts.items()},
                },
                "datasets": p.dataset_counts,
                "ties": {k: n.ties for k, n in p.networks.items()},
                "nodes": {k: n.n for k, n in p.networks.items()},
            }
        return out

    def manifest(self, status: str = "ok"):
        finished = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return write_manifest(
            self.out / "manifest.json",
            config=self.cfg.raw,
            inputs={k: v for k, v in self.cfg.input_paths().items()},
            counts=self.counts,
            started_at=self.started_at,
            finished_at=finished,
            status=status,
            outputs=self.outputs,
            base=self.out,
        )
