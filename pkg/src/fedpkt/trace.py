"""Canonical packet traces: parsing, emission, summary statistics.

A trace is line-delimited JSON, one request per line::

    {"id": str, "app": str, "method": str, "domain": str, "uri": str,
     "headers": [[name, value], ...], "cookie": str|null,
     "labels": {"pii": bool|null, "ad": bool|null}, "ts": int|null}

Only ``method`` and ``uri`` are mandatory; missing ``id`` defaults to
``L<line number>``.  Header names are lowercased, and any ``cookie`` header is
folded into the ``cookie`` field.
"""

from __future__ import annotations

import io
import json
import os
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import DataError, MalformedRecord

KNOWN_KEYS = ("id", "app", "method", "domain", "uri", "headers", "cookie", "labels", "ts")
TASKS = ("pii", "ad")


@dataclass(frozen=True)
class HttpPacket:
    packet_id: str
    app_id: str
    method: str
    domain: str
    uri: str
    headers: tuple[tuple[str, str], ...] = ()
    cookie: str | None = None
    label_pii: bool | None = None
    label_ad: bool | None = None
    timestamp: int | None = None

    def label(self, task: str) -> bool | None:
        if task == "pii":
            return self.label_pii
        if task == "ad":
            return self.label_ad
        raise ValueError(f"unknown task {task!r}")

    def header_names(self) -> list[str]:
        return [name for name, _ in self.headers]

    def to_record(self) -> dict:
        return {
            "id": self.packet_id,
            "app": self.app_id,
            "method": self.method,
            "domain": self.domain,
            "uri": self.uri,
            "headers": [[n, v] for n, v in self.headers],
            "cookie": self.cookie,
            "labels": {"pii": self.label_pii, "ad": self.label_ad},
            "ts": self.timestamp,
        }


@dataclass(frozen=True)
class ParseWarning:
    line_no: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.reason}"


def _as_label(value, name: str) -> bool | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    # integer 0/1 labels are common in published traces
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    raise ValueError(f"label {name!r} must be bool or null")


def packet_from_record(rec: dict, line_no: int = 0) -> tuple[HttpPacket, list[str]]:
    """Validate one decoded record; returns the packet and soft warnings.

    Raises ValueError with a human-readable reason on schema violations.
    """
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    notes = [f"unknown key {k!r} ignored" for k in rec if k not in KNOWN_KEYS]

    uri = rec.get("uri")
    if uri is None:
        raise ValueError("missing required field 'uri'")
    if not isinstance(uri, str) or not uri.startswith("/"):
        raise ValueError("'uri' must be a string beginning with '/'")
    method = rec.get("method")
    if not isinstance(method, str) or not method.strip():
        raise ValueError("missing required field 'method'")

    for key in ("id", "app", "domain"):
        if rec.get(key) is not None and not isinstance(rec[key], str):
            raise ValueError(f"'{key}' must be a string")

    raw_headers = rec.get("headers") or []
    if not isinstance(raw_headers, list):
        raise ValueError("'headers' must be a list of [name, value] pairs")
    headers = []
    cookies = []
    cookie = rec.get("cookie")
    if cookie is not None:
        if not isinstance(cookie, str):
            raise ValueError("'cookie' must be a string or null")
        cookies.append(cookie)
    for pair in raw_headers:
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(x, str) for x in pair)):
            raise ValueError("header entries must be [name, value] string pairs")
        name = pair[0].strip().lower()
        if name == "cookie":
            cookies.append(pair[1])
        else:
            headers.append((name, pair[1]))

    labels = rec.get("labels") or {}
    if not isinstance(labels, dict):
        raise ValueError("'labels' must be an object")
    ts = rec.get("ts")
    if ts is not None and (isinstance(ts, bool) or not isinstance(ts, int)):
        raise ValueError("'ts' must be an integer or null")

    packet = HttpPacket(
        packet_id=rec.get("id") or f"L{line_no}",
        app_id=rec.get("app") or "",
        method=method.strip().upper(),
        domain=(rec.get("domain") or "").lower(),
        uri=uri,
        headers=tuple(headers),
        cookie="; ".join(cookies) if cookies else None,
        label_pii=_as_label(labels.get("pii"), "pii"),
        label_ad=_as_label(labels.get("ad"), "ad"),
        timestamp=ts,
    )
    return packet, notes


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            yield from _iter_lines(fh)
        return
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    for raw in source:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def parse_trace(source, strictness: str = "strict") -> tuple[list[HttpPacket], list[ParseWarning]]:
    """Parse a canonical trace from a path, bytes, or (binary/text) stream.

    In ``strict`` mode the first malformed record raises MalformedRecord; in
    ``skip_invalid`` mode it becomes a ParseWarning and parsing continues.
    """
    if strictness not in ("strict", "skip_invalid"):
        raise ValueError(f"unknown strictness {strictness!r}")
    packets: list[HttpPacket] = []
    warnings: list[ParseWarning] = []
    try:
        lines = list(_iter_lines(source))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read trace: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            packet, notes = packet_from_record(rec, line_no)
        except ValueError as exc:  # JSONDecodeError is a ValueError
            if strictness == "strict":
                raise MalformedRecord(line_no, str(exc)) from None
            warnings.append(ParseWarning(line_no, str(exc)))
            continue
        warnings.extend(ParseWarning(line_no, n) for n in notes)
        packets.append(packet)
    return packets, warnings


def emit_trace(packets: Iterable[HttpPacket]) -> str:
    return "".join(json.dumps(p.to_record(), ensure_ascii=False) + "\n" for p in packets)


def partition_by_app(packets: Iterable[HttpPacket]) -> dict[str, list[HttpPacket]]:
    buckets: dict[str, list[HttpPacket]] = OrderedDict()
    for p in packets:
        buckets.setdefault(p.app_id, []).append(p)
    return dict(buckets)


@dataclass
class DatasetSummary:
    packet_count: int = 0
    positive_pii: int = 0
    positive_ad: int = 0
    uri_key_count: int = 0
    cookie_key_count: int = 0
    custom_header_count: int = 0
    file_request_only_count: int = 0
    keyless_count: int = 0
    keyless_post_count: int = 0
    distinct_domains: int = 0
    app_count: int = 0
    per_app: dict[str, tuple[int, int]] = field(default_factory=dict)
    all_words_count: int | None = None
    recon_words_count: int | None = None

    @property
    def http_keys_count(self) -> int:
        # +1 for the single file_request feature
        return self.uri_key_count + self.cookie_key_count + self.custom_header_count + 1

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["per_app"] = {k: list(v) for k, v in sorted(self.per_app.items())}
        return d

    def to_table(self, name: str = "dataset") -> str:
        """Render as one Table-1-style row (plus header)."""
        words = "-"
        if self.all_words_count is not None:
            words = f"{self.all_words_count:,}/{self.recon_words_count:,}"
        cols = [
            ("Dataset", name),
            ("#Apps", f"{self.app_count:,}"),
            ("#Packets", f"{self.packet_count:,}"),
            ("#Ads/PII", f"{self.positive_ad:,}/{self.positive_pii:,}"),
            ("#Features All/ReconWords", words),
            ("#URI keys", f"{self.uri_key_count:,}"),
            ("#Cookie keys", f"{self.cookie_key_count:,}"),
            ("#Custom Headers", f"{self.custom_header_count:,}"),
            ("#File Requests", f"{self.file_request_only_count:,}"),
            ("#Keyless/POST", f"{self.keyless_count:,}/{self.keyless_post_count:,}"),
            ("#Domains", f"{self.distinct_domains:,}"),
        ]
        widths = [max(len(h), len(v)) for h, v in cols]
        head = " | ".join(h.ljust(w) for (h, _), w in zip(cols, widths))
        rule = "-+-".join("-" * w for w in widths)
        row = " | ".join(v.ljust(w) for (_, v), w in zip(cols, widths))
        return f"{head}\n{rule}\n{row}\n"


def summarize(packets: list[HttpPacket], featurizer: Callable | None = None,
              word_counts: bool = False) -> DatasetSummary:
    """Corpus-level counts: packets, labels, distinct keys per kind, domains, apps.

    ``featurizer`` maps a packet to its HTTP-Keys feature set; by default the
    bundled standard-header list is used.  ``keyless_count`` counts all
    packets with no HTTP-Keys feature, ``keyless_post_count`` the POST subset.
    """
    from . import features as fx

    if featurizer is None:
        headers = fx.load_standard_headers()
        featurizer = lambda p: fx.extract_http_keys(p, headers)  # noqa: E731

    s = DatasetSummary(packet_count=len(packets))
    kinds: dict[str, set] = {fx.URI_KEY: set(), fx.COOKIE_KEY: set(), fx.CUSTOM_HEADER: set()}
    domains = set()
    app_feats: dict[str, set] = {}
    app_domains: dict[str, set] = {}
    for p in packets:
        s.positive_pii += bool(p.label_pii)
        s.positive_ad += bool(p.label_ad)
        feats = featurizer(p)
        if not feats:
            s.keyless_count += 1
            s.keyless_post_count += p.method == "POST"
        elif feats == {fx.FILE_REQUEST_FEATURE}:
            s.file_request_only_count += 1
        for f in feats:
            if f.kind in kinds:
                kinds[f.kind].add(f.token)
        domains.add(p.domain)
        app_feats.setdefault(p.app_id, set()).update(f for f in feats if f.kind != fx.FILE_REQUEST)
        app_domains.setdefault(p.app_id, set()).add(p.domain)
    s.uri_key_count = len(kinds[fx.URI_KEY])
    s.cookie_key_count = len(kinds[fx.COOKIE_KEY])
    s.custom_header_count = len(kinds[fx.CUSTOM_HEADER])
    s.distinct_domains = len(domains)
    s.app_count = len(app_feats)
    s.per_app = {a: (len(app_feats[a]), len(app_domains[a])) for a in app_feats}
    if word_counts and packets:
        s.all_words_count = len(fx.Featurizer(mode="all_words").build_vocabulary(packets))
        recon = fx.Featurizer(mode="recon_words_approx").fit(packets)
        s.recon_words_count = len(recon.build_vocabulary(packets))
    elif word_counts:
        s.all_words_count = s.recon_words_count = 0
    return s


def label_counts(packets: Iterable[HttpPacket], task: str) -> Counter:
    return Counter(p.label(task) for p in packets)
