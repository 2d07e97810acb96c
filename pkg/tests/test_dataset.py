import warnings

import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS, PROJECT, corpus_anchor_edges
from interlink.crawler import CorpusFetcher, CrawlConfig, CrawlResult, VirtualClock, crawl_site
from interlink.dataset import (
    DatasetKind,
    KeyResolver,
    LinkDataset,
    Organization,
    Relationship,
    Sample,
    Sector,
    build_dataset,
    load_registry,
    overlap_stats,
    relationship_counts,
    sample_from_seed_crawl,
    write_registry,
)
from interlink.errors import CapabilityWarning, ClassificationError, ClassificationWarning, RegistryError
from interlink.linkindex import LocalLinkIndex, ProviderCapabilities
from interlink.records import LinkRecord, ProviderTag
from interlink.urls import AliasRule, AliasTable, Granularity, SiteKey, parse_url

HEADER = "key,name,sector,relationship,category\n"


def registry_file(tmp_path, rows):
    p = tmp_path / "reg.csv"
    p.write_text(HEADER + "".join(r + "\n" for r in rows), encoding="utf-8")
    return p


def org(key, sector=Sector.INDUSTRY, rel=Relationship.OTHER):
    return Organization(key, key, sector, rel)


def fake_crawl(seed, targets):
    tag = ProviderTag("crawl")
    src = parse_url(f"http://{seed}/")
    recs = [LinkRecord(SiteKey(seed), SiteKey(t), tag, src, parse_url(f"http://{t}/")) for t in targets]
    return CrawlResult([], recs, {seed: 1})


class TestRegistry:
    def test_row(self, tmp_path):
        [o] = load_registry(registry_file(tmp_path, ["wlv.ac.uk,Univ,Academia,Partnership,university"]))
        assert o == Organization("wlv.ac.uk", "Univ", Sector.ACADEMIA, Relationship.PARTNERSHIP, "university")

    def test_unknown_sector(self, tmp_path):
        with pytest.raises(RegistryError, match="sector"):
            load_registry(registry_file(tmp_path, ["a.com,A,Charity,Other,"]))

    def test_unknown_relationship(self, tmp_path):
        with pytest.raises(RegistryError, match="relationship"):
            load_registry(registry_file(tmp_path, ["a.com,A,Industry,Friend,"]))

    def test_duplicate_after_aliasing(self, tmp_path):
        table = AliasTable([AliasRule(("a.com", "a.co.uk"), "a.com")])
        path = registry_file(tmp_path, ["a.com,A,Industry,Other,", "www.A.co.uk,A2,Industry,Other,"])
        with pytest.raises(RegistryError, match="duplicate"):
            load_registry(path, table)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("key,name\n")
        with pytest.raises(RegistryError):
            load_registry(p)

    def test_case_insensitive_tokens_and_round_trip(self, tmp_path):
        orgs = load_registry(registry_file(tmp_path, ["b.com,B,government,SUPPORT,x", "a.com,A,industry,tenant,"]))
        write_registry(orgs, tmp_path / "out.csv")
        assert load_registry(tmp_path / "out.csv") == orgs

    def test_large_sample(self, tmp_path):
        rows = [f"org{i:03d}.com,Org {i},Industry,Tenant," for i in range(186)]
        orgs = load_registry(registry_file(tmp_path, rows))
        assert len(Sample.from_registry(orgs, "org000.com")) == 186


class TestSample:
    def test_invariants(self):
        with pytest.raises(ValueError):
            Sample(org("s.com"), [org("a.com")])
        with pytest.raises(ValueError):
            Sample(org("s.com"), [org("s.com"), org("s.com")])

    def test_from_seed_crawl(self):
        reg = [org(k) for k in ("s.com", "a.com", "b.com", "c.com")]
        s = sample_from_seed_crawl(fake_crawl("s.com", ["a.com", "b.com", "c.com", "www.a.com"]), reg)
        assert s.keys == ["a.com", "b.com", "c.com", "s.com"] and s.seed.key == "s.com"

    def test_empty_crawl(self):
        s = sample_from_seed_crawl(fake_crawl("s.com", []), [org("s.com")])
        assert s.keys == ["s.com"]

    def test_strict_unclassified(self):
        with pytest.raises(ClassificationError) as exc:
            sample_from_seed_crawl(fake_crawl("s.com", ["z.com", "a.com"]), [org("s.com")])
        assert exc.value.missing == ["a.com", "z.com"]

    def test_lenient_unclassified(self):
        with pytest.warns(ClassificationWarning):
            s = sample_from_seed_crawl(fake_crawl("s.com", ["z.com"]), [org("s.com")], strict=False)
        assert s.get("z.com").sector is Sector.INDUSTRY and s.get("z.com").category == "unclassified"

    def test_exclude(self):
        s = sample_from_seed_crawl(fake_crawl("s.com", ["a.com", "twitter.com"]), [org("s.com"), org("a.com")], exclude=["twitter.com"])
        assert s.keys == ["a.com", "s.com"] and s.audit["excluded"] == 1

    def test_alias_collisions_reduce_site_count(self):
        # 190 relevant sites; 7 are second names of registered organizations
        keys = [f"org{i:03d}.co.uk" for i in range(183)]
        rules = [AliasRule((f"org{i:03d}.co.uk", f"org{i:03d}.com"), f"org{i:03d}.co.uk") for i in range(7)]
        targets = keys + [f"org{i:03d}.com" for i in range(7)]
        reg = [org("park.co.uk")] + [org(k) for k in keys]
        s = sample_from_seed_crawl(fake_crawl("park.co.uk", targets), reg, aliases=AliasTable(rules))
        assert s.audit["distinct_target_hosts"] == 190
        assert s.audit["organizations"] == 183 and len(s) == 184

    def test_relationship_counts(self):
        s = Sample(org("s.com"), [org("s.com"), org("a.com", rel=Relationship.TENANT), org("b.com", rel=Relationship.TENANT)])
        assert relationship_counts(s) == {Relationship.TENANT: 2}


class TestKeyResolver:
    def test_prefers_declared_keys(self):
        r = KeyResolver(["uni.ac.uk", "cs.other.ac.uk"])
        assert r("www.lib.uni.ac.uk") == "uni.ac.uk"
        assert r("cs.other.ac.uk") == "cs.other.ac.uk"
        assert r("maths.other.ac.uk") == "maths.other.ac.uk"
        assert r(parse_url("http://www.x.com/p")) == "x.com"
        assert r("co.uk") is None

    def test_domain_granularity(self):
        r = KeyResolver([], Granularity.DOMAIN)
        assert r("a.b.example.co.uk") == "example.co.uk"

    def test_without_subdomain_matching(self):
        r = KeyResolver(["uni.ac.uk"], match_subdomains=False)
        assert r("cs.uni.ac.uk") == "cs.uni.ac.uk"


class OneLink:
    name = "p"

    def __init__(self, name, edges):
        self.name = name
        self.index = LocalLinkIndex(edges, name=name)

    def capabilities(self):
        return self.index.capabilities()

    def query(self, q):
        return self.index.query(q)


class TestBuildDataset:
    SAMPLE = Sample(org("a.com"), [org("a.com"), org("b.com"), org("c.com")])

    def test_two_providers_same_link(self):
        p1 = OneLink("one", [("http://a.com/", "http://b.com/")])
        p2 = OneLink("two", [("http://a.com/", "http://b.com/")])
        ds = build_dataset("out", [p1, p2], self.SAMPLE)
        assert ds.deduped_count == 1 and ds.raw_count == 2
        assert ds.links[0].providers == ("one", "two")

    def test_self_links_and_multiplicity(self):
        edges = [("http://a.com/1", "http://b.com/"), ("http://a.com/2", "http://b.com/"), ("http://a.com/", "http://x.org/")]
        ds = build_dataset("out", [LocalLinkIndex(edges, name="l")], self.SAMPLE)
        assert ds.pairs() == {("a.com", "b.com"), ("a.com", "x.org")}
        assert ds.link_counts[("a.com", "b.com")] == 2

    def test_capability_skip(self):
        idx = LocalLinkIndex([("http://a.com/", "http://cs.u.ac.uk/")], name="dom",
                             capabilities=ProviderCapabilities(inlinks=frozenset({Granularity.DOMAIN})))
        s = Sample(org("a.com"), [org("a.com"), org("cs.u.ac.uk")])
        with pytest.warns(CapabilityWarning):
            ds = build_dataset("in", [idx], s)
        assert ds.skipped == {"dom": ["cs.u.ac.uk"]} and ds.pairs() == set()

    def test_save_load(self, tmp_path):
        ds = build_dataset("out", [OneLink("one", [("http://a.com/", "http://b.com/")])], self.SAMPLE)
        ds.save(tmp_path / "out.tsv")
        back = LinkDataset.load(tmp_path / "out.tsv")
        assert back.links == ds.links and back.counters() == ds.counters()

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from("abcdx"), st.integers(0, 2), st.sampled_from("abcdx")), max_size=30))
    def test_invariants(self, raw):
        edges = [(f"http://{s}.com/{i}", f"http://{t}.com/") for s, i, t in raw]
        sample = Sample(org("a.com"), [org(f"{k}.com") for k in "abcd"])
        for kind in ("in", "out"):
            ds = build_dataset(kind, [LocalLinkIndex(edges)], sample)
            assert ds.deduped_count <= ds.raw_count
            assert all(link.source != link.target for link in ds.links)


class TestOverlap:
    def test_identical(self):
        assert overlap_stats({("a", "b")}, {("a", "b")}).overlap_percent == 100.0

    def test_disjoint(self):
        o = overlap_stats({(1, 2), (1, 3), (1, 4)}, {(5, 6), (5, 7), (5, 8), (5, 9), (6, 5)})
        assert (o.intersection, o.jaccard) == (0, 0.0)

    def test_hand_count(self):
        o = overlap_stats({("x", "y"), ("y", "z")}, {("y", "z"), ("z", "x")})
        assert o.intersection == 1 and o.union == 3 and o.jaccard == pytest.approx(1 / 3)


# -- the bundled fixture project ---------------------------------------------------------

MEMBERS = sorted(o.key for o in load_registry(PROJECT / "registry.csv"))
ALIASES = {"widgets.com": "widget.co.uk"}


def fixture_indexes():
    aliases = AliasTable.load(PROJECT / "aliases.json")
    reg = load_registry(PROJECT / "registry.csv", aliases)
    sample = Sample.from_registry(reg, "sciencepark.co.uk")
    cfg = CrawlConfig(per_host_delay=0.5)
    clock = VirtualClock()
    crawls = [crawl_site(f"http://{k}/", cfg, CorpusFetcher(CORPUS), clock=clock, aliases=aliases) for k in sample.keys]
    return sample, aliases, LocalLinkIndex.from_crawls(crawls, name="crawl")


def hand_key(host):
    if host.startswith("www.") and host[4:] not in ("gov.uk", "co.uk", "ac.uk", "org.uk", "com"):
        host = host[4:]
    host = ALIASES.get(host, host)
    for m in MEMBERS:
        if host == m or host.endswith("." + m):
            return m
    return host


def test_fixture_outdata_golden():
    sample, aliases, idx = fixture_indexes()
    ds = build_dataset("out", [idx], sample, aliases=aliases)
    blocked = "http://sciencepark.co.uk/private"
    expect = set()
    for s, t in corpus_anchor_edges(CORPUS, skip={blocked}):
        src_host, dst_host = parse_url(s).host, parse_url(t).host
        if src_host not in MEMBERS:
            continue
        pair = (hand_key(src_host), hand_key(dst_host))
        if pair[0] != pair[1]:
            expect.add(pair)
    assert ds.pairs() == expect


def test_fixture_transpose_property():
    sample, aliases, idx = fixture_indexes()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ind = build_dataset(DatasetKind.IN, [idx], sample, aliases=aliases)
        outd = build_dataset(DatasetKind.OUT, [idx], sample, aliases=aliases)
    members = set(sample.keys)
    inner_in = {p for p in ind.pairs() if set(p) <= members}
    inner_out = {p for p in outd.pairs() if set(p) <= members}
    assert inner_in == inner_out and inner_in
    for m in members:
        assert {s for s, t in inner_in if t == m} == {s for s, t in inner_out if t == m}
