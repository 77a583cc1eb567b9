"""Adapters from third-party capture formats to canonical traces.

The NoMoAds adapter is best-effort: the public release ships JSON exports
whose field names vary between versions, so each canonical field is looked
up under several aliases.  Records lacking a method or a request target are
reported and skipped.
"""

from __future__ import annotations

import json
from pathlib import Path
from urllib.parse import urlsplit

from .errors import ConfigInvalid, EmptyData, MalformedRecord
from .synth import planted_corpus
from .trace import HttpPacket, ParseWarning, parse_trace

FORMATS = ("canonical", "nomoads", "planted")

_ALIASES = {
    "id": ("id", "packet_id", "pkt_id", "_id", "uid"),
    "app": ("package_name", "app", "app_id", "package", "pkg"),
    "method": ("method", "http_method", "request_method"),
    "domain": ("host", "domain", "dst_host", "server"),
    "uri": ("uri", "url", "path", "request_uri", "request_target"),
    "headers": ("headers", "http_headers", "request_headers"),
    "cookie": ("cookie", "cookies"),
    "ad": ("is_ad", "ad", "label_ad", "ad_label", "label"),
    "pii": ("is_pii", "pii", "label_pii", "pii_label", "pii_types", "pii_type"),
    "ts": ("ts", "timestamp", "time", "frame_time_epoch"),
}


def _pick(rec: dict, field: str):
    lowered = {str(k).lower(): v for k, v in rec.items()}
    for alias in _ALIASES[field]:
        if alias in lowered and lowered[alias] not in (None, ""):
            return lowered[alias]
    return None


def _truthy(value) -> bool | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value != 0
    if isinstance(value, (list, tuple, dict)):
        return len(value) > 0
    text = str(value).strip().lower()
    if text in ("", "0", "false", "no", "none", "n", "benign", "non-ad", "nonad", "not_ad", "[]"):
        return False
    return True


def _headers(raw) -> list[tuple[str, str]]:
    if raw is None:
        return []
    if isinstance(raw, dict):
        return [(str(k), str(v)) for k, v in raw.items()]
    if isinstance(raw, list):
        out = []
        for item in raw:
            if isinstance(item, (list, tuple)) and len(item) == 2:
                out.append((str(item[0]), str(item[1])))
            elif isinstance(item, str) and ":" in item:
                k, _, v = item.partition(":")
                out.append((k.strip(), v.strip()))
        return out
    out = []
    for line in str(raw).replace("\r\n", "\n").split("\n"):
        if ":" in line:
            k, _, v = line.partition(":")
            out.append((k.strip(), v.strip()))
    return out


def nomoads_record(rec: dict, line_no: int) -> HttpPacket:
    method = _pick(rec, "method")
    target = _pick(rec, "uri")
    if method is None or target is None:
        raise MalformedRecord(line_no, "record has no method or request target")
    target = str(target)
    domain = _pick(rec, "domain")
    if "://" in target:
        parts = urlsplit(target)
        domain = domain or parts.hostname
        target = parts.path or "/"
        if parts.query:
            target += "?" + parts.query
    if not target.startswith("/"):
        target = "/" + target
    headers = [(k.lower(), v) for k, v in _headers(_pick(rec, "headers")) if k]
    cookie = _pick(rec, "cookie")
    if isinstance(cookie, dict):
        cookie = "; ".join(f"{k}={v}" for k, v in cookie.items())
    jar = [v for k, v in headers if k == "cookie"]
    if cookie is not None:
        jar.append(str(cookie))
    headers = [(k, v) for k, v in headers if k != "cookie"]
    if domain is None:
        domain = next((v for k, v in headers if k == "host"), "")
    ts = _pick(rec, "ts")
    try:
        ts = int(float(ts)) if ts is not None else None
    except (TypeError, ValueError):
        ts = None
    return HttpPacket(
        packet_id=str(_pick(rec, "id") or f"L{line_no}"),
        app_id=str(_pick(rec, "app") or ""),
        method=str(method).upper(),
        domain=str(domain or "").lower(),
        uri=target,
        headers=tuple(headers),
        cookie="; ".join(jar) if jar else None,
        label_pii=_truthy(_pick(rec, "pii")),
        label_ad=_truthy(_pick(rec, "ad")),
        timestamp=ts,
    )


def _nomoads_records(text: str):
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            doc = None
        if isinstance(doc, list):
            yield from ((i + 1, r) for i, r in enumerate(doc))
            return
        if isinstance(doc, dict):
            # either a single record or an id -> record mapping
            if _pick(doc, "method") is not None:
                yield 1, doc
                return
            for i, (key, r) in enumerate(doc.items()):
                if isinstance(r, dict):
                    r = dict(r)
                    r.setdefault("id", key)
                yield i + 1, r
            return
    for i, line in enumerate(text.splitlines()):
        if line.strip():
            try:
                yield i + 1, json.loads(line)
            except json.JSONDecodeError as exc:
                yield i + 1, exc


def convert_nomoads(paths, strictness: str = "skip_invalid") -> tuple[list[HttpPacket], list[ParseWarning]]:
    """Convert NoMoAds JSON/JSONL exports (a file or a directory of them)."""
    if isinstance(paths, (str, Path)):
        p = Path(paths)
        paths = sorted(p.rglob("*.json*")) if p.is_dir() else [p]
    packets, warnings = [], []
    for path in paths:
        for line_no, rec in _nomoads_records(Path(path).read_text(encoding="utf-8", errors="replace")):
            try:
                if not isinstance(rec, dict):
                    raise MalformedRecord(line_no, f"not a JSON object ({rec})")
                packets.append(nomoads_record(rec, line_no))
            except MalformedRecord as exc:
                if strictness == "strict":
                    raise
                warnings.append(ParseWarning(line_no, f"{Path(path).name}: {exc.reason}"))
    if not packets:
        raise EmptyData("no convertible records found")
    return packets, warnings


def convert(fmt: str, source=None, *, n: int = 5000, noise: float = 0.0, seed: int = 0,
            strictness: str = "skip_invalid") -> tuple[list[HttpPacket], list[ParseWarning]]:
    if fmt == "planted":
        return planted_corpus(n=n, seed=seed, noise=noise), []
    if source is None:
        raise ConfigInvalid("convert.input", f"format {fmt!r} needs an input path")
    if fmt == "nomoads":
        return convert_nomoads(source, strictness)
    if fmt == "canonical":
        return parse_trace(source, strictness)
    raise ConfigInvalid("convert.format", f"must be one of {FORMATS}")
