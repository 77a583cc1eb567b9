import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpkt.errors import ModeMismatch, ValidationError
from fedpkt.features import (COOKIE_KEY, CUSTOM_HEADER, FILE_REQUEST_FEATURE, URI_KEY, WORD, Feature,
                             Featurizer, Vocabulary, build_vocabulary, encode, extract_http_keys,
                             extract_words, is_keyless, load_standard_headers, query_pairs, vocab_overlap)
from fedpkt.synth import planted_corpus
from fedpkt.trace import HttpPacket

from conftest import pkt

A, B, C, D = (Feature(URI_KEY, t) for t in "abcd")
STD = [("accept", "*/*"), ("user-agent", "Dalvik"), ("host", "h.example")]


def words(counter):
    return {f.token for f in counter}


def test_standard_headers_bundle():
    std = load_standard_headers()
    for name in ("accept", "user-agent", "cookie", "host", "content-type", "connection"):
        assert name in std
    assert "x-requested-with" not in std and "bitmoji-user-agent" not in std
    assert all(n == n.lower() for n in std)


def test_plain_get_is_file_request():
    assert extract_http_keys(pkt("/index.html", headers=STD)) == {FILE_REQUEST_FEATURE}


def test_query_and_cookie_keys():
    got = extract_http_keys(pkt("/?aid=1234&width=240", headers=STD, cookie="sid=abc"))
    assert got == {Feature(URI_KEY, "aid"), Feature(URI_KEY, "width"), Feature(COOKIE_KEY, "sid")}


def test_bare_query_segment_is_a_key():
    assert extract_http_keys(pkt("/?debug&x=1")) == {Feature(URI_KEY, "debug"), Feature(URI_KEY, "x")}


def test_duplicate_and_encoded_keys():
    assert query_pairs("/p?a=1&a=2&b") == [("a", "1"), ("a", "2"), ("b", None)]
    got = extract_http_keys(pkt("/?a=1&a=2&user%20id=3&c+d=4"))
    assert got == {Feature(URI_KEY, "a"), Feature(URI_KEY, "user_id"), Feature(URI_KEY, "c_d")}


def test_custom_header_case_insensitive():
    p = pkt("/", headers=[("X-Requested-With", "com.app"), ("Accept", "*/*")])
    assert extract_http_keys(p) == {Feature(CUSTOM_HEADER, "x-requested-with")}


def test_bitmoji_packet(bitmoji_packet):
    feats = extract_http_keys(bitmoji_packet)
    assert Feature(CUSTOM_HEADER, "bitmoji-user-agent") in feats
    for k in ("android_id", "adid", "zip", "sz", "correlator"):
        assert Feature(URI_KEY, k) in feats
    assert {Feature(COOKIE_KEY, "id"), Feature(COOKIE_KEY, "IDE")} <= feats
    tokens = {f.token for f in feats}
    assert "city_X" not in tokens
    assert "pubads.g.doubleclick.net" not in tokens
    assert not tokens & {"gampad", "ads", "3f1c9a7be0d2"}
    assert FILE_REQUEST_FEATURE not in feats


def test_bitmoji_encoding_keeps_all_kinds(bitmoji_packet):
    feats = extract_http_keys(bitmoji_packet)
    vocab = build_vocabulary([feats, {FILE_REQUEST_FEATURE}])
    e = encode(feats, vocab, 1)
    assert e.label == 1 and e.dropped == 0
    kinds = {vocab.features[i].kind for i in e.indices} | {f.kind for f in vocab.features}
    assert kinds == {URI_KEY, COOKIE_KEY, CUSTOM_HEADER, "file_request"}
    assert all("city_X" != vocab.features[i].token for i in e.indices)


def test_keyless_rules():
    assert is_keyless(pkt("/upload", method="POST", headers=STD))
    assert not is_keyless(pkt("/a.png"))
    assert not is_keyless(pkt("/?k=v"))
    # file_request disabled: featureless GET is keyless too
    assert is_keyless(pkt("/a.png"), file_request=False)


def test_post_body_never_parsed():
    # query keys still count for non-GET; nothing else is read
    assert extract_http_keys(pkt("/submit?uid=9", method="POST")) == {Feature(URI_KEY, "uid")}


def test_all_words_tokens():
    got = words(extract_words(pkt("/?aid=1234&width=240"), "all_words"))
    assert {"aid", "1234", "width", "240"} <= got


def test_recon_words_drop_values():
    got = words(extract_words(pkt("/?aid=1234&width=240"), "recon_words_approx"))
    assert {"aid", "width"} <= got
    assert not {"1234", "240"} & got


def test_recon_stopwords_case_insensitive():
    got = words(extract_words(pkt("/?aid=1", headers=[("User-Agent", "x")]), "recon_words_approx",
                              stopwords=frozenset({"user-agent", "get"})))
    assert "User-Agent" not in got and "GET" not in got and "aid" in got


def test_build_vocabulary_examples():
    v = build_vocabulary([{A}, {A, B}])
    assert v.features == (A, B) and v.index == {A: 0, B: 1}
    assert len(build_vocabulary([])) == 0
    assert len(build_vocabulary([{A}, {B}], min_df=2)) == 0


def test_vocabulary_orders_by_kind_then_token():
    v = build_vocabulary([{Feature(URI_KEY, "a"), Feature(COOKIE_KEY, "z"), FILE_REQUEST_FEATURE}])
    assert [f.kind for f in v.features] == [COOKIE_KEY, "file_request", URI_KEY]


def test_encode_examples():
    v = build_vocabulary([{A, B, C}])
    e = encode({A, B}, v, 1)
    assert e.indices == (0, 1) and e.label == 1 and e.dropped == 0
    e = encode({D}, v, 0)
    assert e.indices == () and e.label == -1 and e.dropped == 1


def test_vocab_overlap_examples():
    v1, v2 = build_vocabulary([{A, B}]), build_vocabulary([{B, C}])
    assert vocab_overlap([v1, v2]) == (1, 3)
    assert vocab_overlap([v1, v1]) == (2, 2)
    w = Vocabulary([Feature(WORD, "a")], mode="all_words")
    with pytest.raises(ModeMismatch):
        vocab_overlap([v1, w])


def test_vocabulary_file_round_trip():
    v = build_vocabulary([{A, FILE_REQUEST_FEATURE, Feature(CUSTOM_HEADER, "x-y")}])
    text = v.dumps()
    assert text.splitlines()[0] == "#fedpkt-vocab\tmode=http_keys\tmin_df=1"
    w = Vocabulary.loads(text)
    assert w == v and w.fingerprint == v.fingerprint
    with pytest.raises(ValidationError):
        Vocabulary.loads("nonsense\n")


def test_fingerprint_changes_with_content():
    assert build_vocabulary([{A}]).fingerprint != build_vocabulary([{B}]).fingerprint


def test_unknown_mode_rejected():
    with pytest.raises(ValidationError):
        Featurizer(mode="bag_of_bytes")


def test_vocabulary_sizes_monotone_on_realistic_corpus():
    ps = planted_corpus(n=800, seed=3)
    sizes = []
    for mode in ("http_keys", "recon_words_approx", "all_words"):
        fz = Featurizer(mode=mode).fit(ps)
        sizes.append(len(fz.build_vocabulary(ps)))
    assert sizes[0] <= sizes[1] <= sizes[2]


# -- properties ---------------------------------------------------------------

_key = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=6)
_val = st.text(alphabet="ABCDEFGHIJ0123456789.-", min_size=1, max_size=10)


@given(st.lists(_key, min_size=1, max_size=4, unique=True), st.lists(_val, min_size=4, max_size=4),
       st.lists(_val, min_size=4, max_size=4), st.lists(_key, min_size=0, max_size=3), _val, _val)
@settings(max_examples=80, deadline=None)
def test_value_invariance(keys, vals1, vals2, path, dom1, dom2):
    def make(vals, p, dom):
        q = "&".join(f"{k}={v}" for k, v in zip(keys, vals))
        return HttpPacket("x", "a", "GET", dom, "/" + "/".join(p) + "?" + q,
                          (("x-custom", vals[0]),), f"sid={vals[1]}")
    a = extract_http_keys(make(vals1, path, dom1))
    b = extract_http_keys(make(vals2, list(reversed(path)) + ["extra"], dom2))
    assert a == b


@given(st.lists(st.sets(st.sampled_from([A, B, C, D]), max_size=4), max_size=8),
       st.sets(st.sampled_from([A, B, C, D, Feature(WORD, "z")])))
@settings(max_examples=60, deadline=None)
def test_encode_invariants(sets, feats):
    v = build_vocabulary(sets)
    e1, e2 = encode(feats, v, 1), encode(feats, v, 1)
    assert e1 == e2
    idx = np.array(e1.indices)
    assert np.all(np.diff(idx) > 0) if idx.size > 1 else True
    assert all(0 <= i < len(v) for i in e1.indices)
    assert len(e1.indices) + e1.dropped == len(feats)
    assert sorted(v.index.values()) == list(range(len(v)))
