"""Synthetic packet corpora with planted labeling rules.

The PII label is positive exactly when a query carries one of
``pii_keys`` (default ``gaid``/``adid``); the ad label is positive when a
query carries one of ``ad_keys``.  ``noise`` flips each label independently.
Keys and values come from disjoint vocabularies, so any leak of a value into
the key feature space is detectable.
"""

from __future__ import annotations

import string

import numpy as np

from .trace import HttpPacket

BENIGN_KEYS = [
    "v", "ver", "sdk", "lang", "locale", "os", "osv", "model", "make", "w", "h", "width",
    "height", "fmt", "format", "ts", "t", "cb", "r", "ref", "page", "q", "id", "cid", "sid",
    "session", "net", "carrier", "tz", "dpi", "orient", "app", "bundle", "pkg", "build",
    "channel", "src", "utm_source", "utm_medium", "cat", "tag", "count", "offset", "limit",
    "sort", "mode", "theme", "region", "currency", "token", "nonce", "sig", "api_key",
    "client", "platform", "type", "kind", "level", "score", "event", "action", "label",
]
COOKIE_KEYS = ["sid", "uid", "_ga", "_gid", "pref", "lang", "consent", "csrftoken", "track", "ab"]
CUSTOM_HEADERS = [
    "x-requested-with", "x-unity-version", "x-app-version", "x-client-id", "x-device-model",
    "x-api-key", "x-session", "x-fb-http-engine", "x-crashlytics-api-client-version",
    "x-goog-api-key", "x-ads-sdk", "x-platform",
]
STANDARD = [("accept", "*/*"), ("accept-encoding", "gzip"), ("connection", "keep-alive"),
            ("user-agent", "Dalvik/2.1.0 (Linux; U; Android 9)"), ("accept-language", "en-US")]
STATIC_SUFFIX = [".png", ".jpg", ".js", ".css", ".html", ".gif", ".webp"]


def _hex(rng, n=12) -> str:
    return "".join(rng.choice(list("0123456789abcdef"), size=n))


def _value(rng) -> str:
    kind = rng.integers(4)
    if kind == 0:
        return str(int(rng.integers(10, 10**9)))
    if kind == 1:
        return "V" + _hex(rng, 16).upper()
    if kind == 2:
        return f"city_{string.ascii_uppercase[rng.integers(26)]}{int(rng.integers(100))}"
    return "val-" + _hex(rng, 8)


def planted_corpus(n: int = 5000, seed: int = 0, noise: float = 0.0,
                   pii_keys=("gaid", "adid"), ad_keys=("adunit", "ad_slot"),
                   n_apps: int = 10, pii_rate: float = 0.35, ad_rate: float = 0.3,
                   static_rate: float = 0.08, post_rate: float = 0.04) -> list[HttpPacket]:
    rng = np.random.default_rng(seed)
    apps = [f"com.example.app{i:02d}" for i in range(n_apps)]
    app_keys = {a: list(rng.choice(BENIGN_KEYS, size=14, replace=False)) for a in apps}
    app_domains = {a: [f"api{j}.app{i:02d}.example.com" for j in range(3)] for i, a in enumerate(apps)}
    app_headers = {a: list(rng.choice(CUSTOM_HEADERS, size=2, replace=False)) for a in apps}
    ad_domains = ["ads.doubleclick.example", "adx.unity.example", "mopub.example"]
    packets = []
    for i in range(n):
        app = apps[int(rng.integers(n_apps))]
        headers = [h for h in STANDARD if rng.random() < 0.8]
        u = rng.random()
        if u < post_rate:
            method, uri, cookie = "POST", "/upload/" + _hex(rng, 6), None
            pii = ad = False
        elif u < post_rate + static_rate:
            method = "GET"
            uri = "/static/" + _hex(rng, 6) + STATIC_SUFFIX[int(rng.integers(len(STATIC_SUFFIX)))]
            cookie = None
            pii = ad = False
        else:
            method = "GET"
            pii = rng.random() < pii_rate
            ad = rng.random() < ad_rate
            keys = list(rng.choice(app_keys[app], size=int(rng.integers(1, 6)), replace=False))
            if pii:
                planted = [k for k in pii_keys if rng.random() < 0.6] or [pii_keys[int(rng.integers(len(pii_keys)))]]
                keys += planted
            if ad:
                keys.append(ad_keys[int(rng.integers(len(ad_keys)))])
            rng.shuffle(keys)
            query = "&".join(f"{k}={_value(rng)}" for k in keys)
            uri = f"/api/v{int(rng.integers(1, 4))}/{_hex(rng, 6)}?{query}"
            cookie = None
            if rng.random() < 0.4:
                ck = rng.choice(COOKIE_KEYS, size=int(rng.integers(1, 4)), replace=False)
                cookie = "; ".join(f"{k}={_value(rng)}" for k in ck)
            if rng.random() < 0.5:
                headers.append((app_headers[app][int(rng.integers(2))], _value(rng)))
        domain = ad_domains[int(rng.integers(3))] if ad else app_domains[app][int(rng.integers(3))]
        if rng.random() < noise:
            pii = not pii
        if rng.random() < noise:
            ad = not ad
        packets.append(HttpPacket(
            packet_id=f"p{i:06d}", app_id=app, method=method, domain=domain, uri=uri,
            headers=tuple(headers), cookie=cookie, label_pii=bool(pii), label_ad=bool(ad),
            timestamp=1_500_000_000_000 + i * 1000,
        ))
    return packets
