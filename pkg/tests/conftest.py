import functools
from importlib import resources

import pytest

from fedpkt.experiment import ExperimentSpec, featurize
from fedpkt.features import EncodedExample
from fedpkt.synth import planted_corpus
from fedpkt.trace import HttpPacket


def ex(indices, label, origin=""):
    return EncodedExample(tuple(sorted(indices)), label, origin)


def pkt(uri="/", method="GET", headers=(), cookie=None, domain="h.example", pii=None, ad=None, pid="p", app="a"):
    return HttpPacket(pid, app, method, domain, uri, tuple(headers), cookie, pii, ad, None)


@functools.lru_cache(maxsize=None)
def planted_examples(n=5000, seed=0, noise=0.05, task="pii"):
    """(vocab, examples) for a planted corpus; cached across tests."""
    packets = planted_corpus(n=n, seed=seed, noise=noise)
    _, vocab, examples = featurize(ExperimentSpec(task=task), packets)
    return vocab, examples


@pytest.fixture(scope="session")
def minicorpus_path():
    return resources.files("fedpkt").joinpath("data/minicorpus.jsonl")


@pytest.fixture(scope="session")
def bitmoji_packet():
    # ad-SDK request carrying identifiers in query keys, cookies and a custom header
    return HttpPacket(
        packet_id="bitmoji-1",
        app_id="com.bitstrips.imoji",
        method="GET",
        domain="pubads.g.doubleclick.net",
        uri="/gampad/ads?android_id=3f1c9a7be0d2&adid=38400000-8cf0-11bd-b23e-10b96e40000d"
            "&zip=city_X&sz=320x50&correlator=1487",
        headers=(("host", "pubads.g.doubleclick.net"), ("user-agent", "Dalvik/2.1.0"),
                 ("bitmoji-user-agent", "Bitmoji/10.3 Android"), ("accept-encoding", "gzip")),
        cookie="id=22a3b4c5d6; IDE=AHWqTUm0",
        label_pii=True,
        label_ad=True,
        timestamp=1500000000000,
    )


ACCEPTANCE_LINES: list[str] = []


def criterion(num, name, ok, measured, tolerance):
    """Record one acceptance line and fail the calling test when ``ok`` is false."""
    line = f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {measured} (need {tolerance})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
