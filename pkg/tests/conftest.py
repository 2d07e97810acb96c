import re
from pathlib import Path
from urllib.parse import unquote, urljoin

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
PROJECT = FIXTURES / "project"
CORPUS = PROJECT / "corpus"

HREF_RE = re.compile(r'<a\s+href="([^"]*)"', re.I)


def write_corpus(root: Path, pages: dict[str, list[str]]) -> Path:
    """pages maps "host/path" (path without leading slash, "" for root) to hrefs."""
    from interlink.crawler import corpus_path
    from interlink.urls import parse_url

    for entry, hrefs in pages.items():
        host, _, path = entry.partition("/")
        p = corpus_path(root, parse_url(f"http://{host}/{path}"))
        p.parent.mkdir(parents=True, exist_ok=True)
        body = "".join(f'<a href="{h}">x</a>\n' for h in hrefs)
        p.write_text(f"<html><body>\n{body}</body></html>\n", encoding="utf-8")
    return root


def corpus_anchor_edges(root: Path = CORPUS, skip=()) -> list[tuple[str, str]]:
    """(page url, absolute href) for every anchor in a corpus, found by regex."""
    edges = []
    for f in sorted(root.glob("*/*.html")):
        host = f.parent.name
        name = unquote(f.stem)
        url = f"http://{host}/" + ("" if name == "index" else name)
        if url in skip:
            continue
        for href in HREF_RE.findall(f.read_text(encoding="utf-8")):
            target = urljoin(url, href).split("#")[0]
            if target.startswith(("http://", "https://")):
                edges.append((url, target))
    return edges


@pytest.fixture
def corpus_dir():
    return CORPUS


@pytest.fixture
def project_dir():
    return PROJECT


@pytest.fixture
def project_copy(tmp_path):
    """A writable copy of the fixture project, without any prior output."""
    import shutil

    dst = tmp_path / "project"
    shutil.copytree(PROJECT, dst, ignore=shutil.ignore_patterns("out"))
    return dst


_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            number, title = mark.args
            _CRITERIA.setdefault(number, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for number, title in getattr(report, "criterion", ()):
        _CRITERIA[number]["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark:
        outcome.get_result().criterion = [tuple(mark.args)]


def pytest_terminal_summary(terminalreporter):
    ran = {n: c for n, c in _CRITERIA.items() if c["outcomes"]}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ran):
        c = ran[number]
        ok = all(o == "passed" for o in c["outcomes"])
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {c['title']}")
