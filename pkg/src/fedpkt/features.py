"""HTTP-Keys features, word-based baselines, vocabularies and multi-hot encoding."""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, NamedTuple
from urllib.parse import unquote_plus

from .errors import ModeMismatch, ValidationError
from .trace import HttpPacket

URI_KEY = "uri_key"
COOKIE_KEY = "cookie_key"
CUSTOM_HEADER = "custom_header"
FILE_REQUEST = "file_request"
WORD = "word"
KINDS = (COOKIE_KEY, CUSTOM_HEADER, FILE_REQUEST, URI_KEY, WORD)

MODES = ("http_keys", "all_words", "recon_words_approx")

# '\t' is not in the documented delimiter list, but tokens must be whitespace-free
DEFAULT_DELIMITERS = frozenset("=&;,:/? \"{}[]\r\n\t")

_WS = re.compile(r"\s+")


class Feature(NamedTuple):
    """A namespaced feature; tuple ordering gives the canonical (kind, token) order."""

    kind: str
    token: str

    def __str__(self) -> str:
        return f"{self.kind}:{self.token}" if self.token else self.kind


FILE_REQUEST_FEATURE = Feature(FILE_REQUEST, "")


@lru_cache(maxsize=None)
def _bundled_headers() -> frozenset[str]:
    text = resources.files("fedpkt").joinpath("data/standard_headers.txt").read_text("utf-8")
    return parse_header_list(text)


def parse_header_list(text: str) -> frozenset[str]:
    names = (ln.strip().lower() for ln in text.splitlines())
    return frozenset(n for n in names if n and not n.startswith("#"))


def load_standard_headers(path=None) -> frozenset[str]:
    if path is None:
        return _bundled_headers()
    with open(path, encoding="utf-8") as fh:
        return parse_header_list(fh.read())


def _normalize_key(raw: str) -> str:
    return _WS.sub("_", unquote_plus(raw).strip())


def query_string(uri: str) -> str:
    _, _, query = uri.partition("?")
    return query.partition("#")[0]


def query_pairs(uri: str) -> list[tuple[str, str | None]]:
    """(key, value) pairs of the query; value is None for bare segments."""
    pairs = []
    for seg in query_string(uri).split("&"):
        if not seg:
            continue
        key, eq, value = seg.partition("=")
        pairs.append((key, value if eq else None))
    return pairs


def cookie_pairs(cookie: str | None) -> list[tuple[str, str]]:
    if not cookie:
        return []
    pairs = []
    for seg in cookie.split(";"):
        key, eq, value = seg.strip().partition("=")
        # bare cookie segments carry a value, not a name
        if eq:
            pairs.append((key, value))
    return pairs


def extract_http_keys(packet: HttpPacket, standard_headers: frozenset[str] | None = None,
                      file_request: bool = True) -> frozenset[Feature]:
    """Query keys, cookie keys, custom header names, else the file-request flag.

    Values, URI path segments and the destination domain never contribute.
    ``file_request`` is only granted to GET requests with no other feature.
    """
    if standard_headers is None:
        standard_headers = _bundled_headers()
    feats = set()
    for key, _ in query_pairs(packet.uri):
        tok = _normalize_key(key)
        if tok:
            feats.add(Feature(URI_KEY, tok))
    for key, _ in cookie_pairs(packet.cookie):
        tok = _normalize_key(key)
        if tok:
            feats.add(Feature(COOKIE_KEY, tok))
    for name, _ in packet.headers:
        name = _WS.sub("_", name.strip().lower())
        if name and name != "cookie" and name not in standard_headers:
            feats.add(Feature(CUSTOM_HEADER, name))
    if not feats and file_request and packet.method == "GET":
        feats.add(FILE_REQUEST_FEATURE)
    return frozenset(feats)


def is_keyless(packet: HttpPacket, standard_headers: frozenset[str] | None = None,
               file_request: bool = True) -> bool:
    return not extract_http_keys(packet, standard_headers, file_request)


def _splitter(delimiters: frozenset[str]) -> re.Pattern:
    return re.compile("[" + re.escape("".join(sorted(delimiters))) + r"\s]+")


def serialize_request(packet: HttpPacket) -> str:
    lines = [f"{packet.method} {packet.uri} HTTP/1.1"]
    if packet.domain and "host" not in packet.header_names():
        lines.append(f"host: {packet.domain}")
    lines.extend(f"{n}: {v}" for n, v in packet.headers)
    if packet.cookie is not None:
        lines.append(f"cookie: {packet.cookie}")
    return "\r\n".join(lines) + "\r\n"


def extract_words(packet: HttpPacket, mode: str = "all_words",
                  delimiters: frozenset[str] = DEFAULT_DELIMITERS,
                  stopwords: frozenset[str] = frozenset()) -> Counter:
    """Word tokens of the serialized request as a multiset of ``word`` features.

    ``recon_words_approx`` additionally drops stopwords (case-insensitive) and
    any token that occurs inside a query or cookie value of this packet.
    """
    if mode not in ("all_words", "recon_words_approx"):
        raise ValueError(f"extract_words does not support mode {mode!r}")
    split = _splitter(delimiters)
    tokens = [t for t in split.split(serialize_request(packet)) if t]
    if mode == "recon_words_approx":
        values = [v for _, v in query_pairs(packet.uri) if v] + [v for _, v in cookie_pairs(packet.cookie)]
        dropped = {t for v in values for t in split.split(v) if t}
        tokens = [t for t in tokens if t not in dropped and t.lower() not in stopwords]
    return Counter(Feature(WORD, t) for t in tokens)


class Vocabulary:
    """Frozen, lexicographically ordered feature -> index map."""

    def __init__(self, features: Iterable[Feature], mode: str = "http_keys", min_df: int = 1):
        if mode not in MODES:
            raise ValidationError(f"unknown vocabulary mode {mode!r}")
        self.features: tuple[Feature, ...] = tuple(sorted(set(features)))
        self.index: dict[Feature, int] = {f: i for i, f in enumerate(self.features)}
        self.mode = mode
        self.min_df = min_df
        self.frozen = True

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, f) -> bool:
        return f in self.index

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary) and self.features == other.features
                and self.mode == other.mode and self.min_df == other.min_df)

    def __repr__(self) -> str:
        return f"Vocabulary(mode={self.mode!r}, size={len(self)})"

    def dumps(self) -> str:
        lines = [f"#fedpkt-vocab\tmode={self.mode}\tmin_df={self.min_df}"]
        lines.extend(f"{f.kind}\t{f.token}" for f in self.features)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        head = lines[0].split("\t")
        if not head or head[0] != "#fedpkt-vocab":
            raise ValidationError("not a fedpkt vocabulary file")
        meta = dict(kv.split("=", 1) for kv in head[1:])
        feats = []
        for ln in lines[1:]:
            if not ln:
                continue
            kind, _, token = ln.partition("\t")
            if kind not in KINDS:
                raise ValidationError(f"unknown feature kind {kind!r} in vocabulary")
            feats.append(Feature(kind, token))
        vocab = cls(feats, mode=meta.get("mode", "http_keys"), min_df=int(meta.get("min_df", 1)))
        if list(vocab.features) != feats:
            raise ValidationError("vocabulary file is not in canonical order")
        return vocab

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()[:16]


def build_vocabulary(feature_sets: Iterable[Iterable[Feature]], mode: str = "http_keys",
                     min_df: int = 1) -> Vocabulary:
    df: Counter = Counter()
    for fs in feature_sets:
        df.update(set(fs))
    return Vocabulary((f for f, c in df.items() if c >= min_df), mode=mode, min_df=min_df)


@dataclass(frozen=True)
class EncodedExample:
    indices: tuple[int, ...]
    label: int
    origin_packet_id: str = ""
    weight: int = 1
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")


def encode(features: Iterable[Feature], vocab: Vocabulary, label, origin: str = "") -> EncodedExample:
    """Multi-hot support of ``features`` in ``vocab``; labels 1/True -> +1, 0/False -> -1."""
    idx = []
    dropped = 0
    for f in set(features):
        i = vocab.index.get(f)
        if i is None:
            dropped += 1
        else:
            idx.append(i)
    y = 1 if int(label) == 1 else -1
    return EncodedExample(tuple(sorted(idx)), y, origin, dropped=dropped)


def vocab_overlap(vocabs: list[Vocabulary]) -> tuple[int, int]:
    if not vocabs:
        return 0, 0
    modes = {v.mode for v in vocabs}
    if len(modes) > 1:
        raise ModeMismatch(f"vocabularies mix modes {sorted(modes)}")
    sets = [set(v.features) for v in vocabs]
    return len(set.intersection(*sets)), len(set.union(*sets))


def frequent_tokens(word_sets: list[set[Feature]], top_fraction: float) -> frozenset[str]:
    """Tokens in the top ``top_fraction`` of distinct words by document frequency."""
    df: Counter = Counter()
    for ws in word_sets:
        df.update(ws)
    if not df or top_fraction <= 0:
        return frozenset()
    n_top = math.ceil(top_fraction * len(df))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(f.token.lower() for f, _ in ranked[:n_top])


@dataclass(frozen=True)
class Featurizer:
    """Packet -> feature-set mapping for one feature space.

    ``recon_words_approx`` needs corpus-level stopwords: call :meth:`fit`
    first (standard header names plus the most frequent words).
    """

    mode: str = "http_keys"
    standard_headers: frozenset[str] = field(default_factory=_bundled_headers)
    file_request: bool = True
    delimiters: frozenset[str] = DEFAULT_DELIMITERS
    stopwords: frozenset[str] = frozenset()
    min_df: int = 1
    stopword_top_fraction: float = 0.001

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown featurization mode {self.mode!r}")

    def features(self, packet: HttpPacket) -> frozenset[Feature]:
        if self.mode == "http_keys":
            return extract_http_keys(packet, self.standard_headers, self.file_request)
        return frozenset(extract_words(packet, self.mode, self.delimiters, self.stopwords))

    __call__ = features

    def fit(self, packets: Iterable[HttpPacket]) -> "Featurizer":
        if self.mode != "recon_words_approx":
            return self
        words = [set(extract_words(p, "all_words", self.delimiters)) for p in packets]
        stop = self.standard_headers | frequent_tokens(words, self.stopword_top_fraction)
        return replace(self, stopwords=frozenset(stop))

    def build_vocabulary(self, packets: Iterable[HttpPacket]) -> Vocabulary:
        return build_vocabulary((self.features(p) for p in packets), self.mode, self.min_df)


def encode_corpus(packets: Iterable[HttpPacket], featurizer: Featurizer, vocab: Vocabulary,
                  task: str) -> list[EncodedExample]:
    """Encode every labeled packet with at least one feature; the rest are skipped."""
    out = []
    for p in packets:
        y = p.label(task)
        if y is None:
            continue
        feats = featurizer.features(p)
        if not feats:
            continue
        out.append(encode(feats, vocab, y, p.packet_id))
    return out
