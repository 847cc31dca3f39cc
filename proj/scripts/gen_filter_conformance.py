#!/usr/bin/env python3
"""Regex-translation oracle for Adblock Plus network rules.

Each rule is rewritten into an equivalent Python regular expression following
the documented filter syntax, and options are checked against the request
context. The resulting (rules, url, context, expected) rows are written to
tests/fixtures/filters/conformance.json for the C++ matcher to reproduce.
"""

import itertools
import json
import random
import re
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "filters" / "conformance.json"

SEPARATOR = r"(?:[^\w\-.%]|$)"
HOST_ANCHOR = r"^[a-z][a-z0-9+.\-]*://(?:[^/?#:]*\.)?"
NON_IMAGE_TYPES = {"script", "stylesheet", "object", "xmlhttprequest", "subdocument", "font", "media",
                   "other", "websocket", "ping", "document"}


def translate(pattern):
    """ABP pattern -> regex source."""
    prefix = ""
    if pattern.startswith("||"):
        prefix, pattern = HOST_ANCHOR, pattern[2:]
    elif pattern.startswith("|"):
        prefix, pattern = "^", pattern[1:]
    suffix = ""
    if pattern.endswith("|"):
        suffix, pattern = "$", pattern[:-1]
    body = []
    for ch in pattern:
        if ch == "*":
            body.append(".*")
        elif ch == "^":
            body.append(SEPARATOR)
        else:
            body.append(re.escape(ch))
    return prefix + "".join(body) + suffix


def compile_rule(line):
    line = line.strip()
    if not line or line.startswith("!") or line.startswith("["):
        return None
    if "##" in line or "#@#" in line or "#?#" in line:
        return None
    exception = line.startswith("@@")
    if exception:
        line = line[2:]
    options = {}
    if "$" in line and not (line.startswith("/") and line.endswith("/")):
        line, _, opt_text = line.rpartition("$")
        for opt in opt_text.split(","):
            opt = opt.strip().lower()
            if opt in ("third-party", "~third-party"):
                options["third_party"] = not opt.startswith("~")
            elif opt == "image":
                options.setdefault("types", set()).add("image")
            elif opt == "~image":
                options["no_image"] = True
            elif opt in NON_IMAGE_TYPES:
                options.setdefault("types", set()).add(opt)
            elif opt.startswith("~") and opt[1:] in NON_IMAGE_TYPES:
                pass
            elif opt.startswith("domain="):
                inc, exc = [], []
                for d in opt[7:].split("|"):
                    (exc if d.startswith("~") else inc).append(d.lstrip("~"))
                options["include"], options["exclude"] = inc, exc
            else:
                return None  # unsupported option: the rule is dropped
    if line.startswith("/") and line.endswith("/") and len(line) > 1:
        return None  # regex literal rules are not supported
    return {"exception": exception, "regex": re.compile(translate(line)), "options": options}


def domain_hit(page, domain):
    return page == domain or page.endswith("." + domain)


def applies(rule, url, ctx):
    opts = rule["options"]
    if "third_party" in opts and opts["third_party"] != ctx["third_party"]:
        return False
    if opts.get("no_image"):
        return False
    if "types" in opts and "image" not in opts["types"]:
        return False
    page = ctx["page_host"]
    if opts.get("include") and not any(domain_hit(page, d) for d in opts["include"]):
        return False
    if any(domain_hit(page, d) for d in opts.get("exclude", [])):
        return False
    return rule["regex"].search(url) is not None


def decide(rules, url, ctx):
    compiled = [r for r in (compile_rule(x) for x in rules) if r]
    if any(r["exception"] and applies(r, url, ctx) for r in compiled):
        return "allowlisted"
    if any(not r["exception"] and applies(r, url, ctx) for r in compiled):
        return "blocked"
    return "no_match"


def naive_sld(host):
    return ".".join(host.split(".")[-2:])


SINGLE_RULES = [
    "||ads.example.com^",
    "||tracker.net^",
    "||tracker.net/px",
    "|http://stats.",
    "/pixel.gif",
    "/pixel.gif|",
    "/pixel.gif$third-party",
    "/pixel.gif$~third-party",
    "/beacon/*.gif",
    "/beacon/*.gif^",
    "&uid=",
    "?uid=*&ref=",
    "^track^",
    "||cdn.example.org/ads/",
    "/ads/$image",
    "/ads/$~image",
    "/ads/$script",
    "/ads/$script,image",
    "/ads/$~script",
    "||metrics.io^$domain=shop.com",
    "||metrics.io^$domain=~shop.com",
    "||metrics.io^$domain=shop.com|~blog.shop.com",
    "/Banner/",
    "/banner/",
    "doubleclick",
    "||doubleclick.net^$third-party,image",
    "/px?*id=",
    "/1x1.",
    "||example.com/pixel|",
    "/spacer.gif$popup",
    "/banner\\d+/",
    "example.com##.ad",
    "! /pixel.gif",
    ".gif?",
    "||com^",
    "_ad_",
    "-ad-",
]

URLS = [
    "http://ads.example.com/banner.gif",
    "http://ads.example.com:8080/x.png",
    "http://notads.example.com/banner.gif",
    "http://xads.example.com/banner.gif",
    "http://tracker.net/px.gif?uid=42",
    "http://sub.tracker.net/px?id=7",
    "http://tracker.network/px.gif",
    "http://stats.site.com/p.gif",
    "https://stats.site.com/p.gif",
    "http://shop.com/img/pixel.gif",
    "http://shop.com/img/pixel.gif?x=1",
    "http://cdn.shop.com/beacon/a.gif",
    "http://cdn.shop.com/beacon/a.gifx",
    "http://cdn.shop.com/beacon/deep/a.gif?v=1",
    "http://a.com/p?uid=1&ref=b.com",
    "http://a.com/p?ref=b.com&uid=1",
    "http://a.com/track/1.gif",
    "http://a.com/tracking/1.gif",
    "http://a.com/x?track",
    "http://cdn.example.org/ads/1.jpg",
    "http://cdn.example.org/Ads/1.jpg",
    "http://metrics.io/c.gif",
    "http://img.metrics.io/c.gif",
    "http://x.com/Banner/1.png",
    "http://x.com/banner/1.png",
    "http://ad.doubleclick.net/pixel;ord=1",
    "http://x.com/ads/top.png",
    "http://x.com/images/1x1.gif",
    "http://example.com/pixel",
    "http://example.com/pixel.gif",
    "http://x.com/banner12/a.gif",
    "http://x.com/spacer.gif",
    "http://x.com/my_ad_1.gif",
    "http://x.com/my-ad-1.gif",
    "http://x.com/myad1.gif",
]

CONTEXTS = [
    {"page_host": "www.shop.com", "third_party": True},
    {"page_host": "shop.com", "third_party": False},
    {"page_host": "blog.shop.com", "third_party": True},
    {"page_host": "news.org", "third_party": True},
]

# Multi-rule sets that exercise precedence between blocking and exception rules.
RULE_SETS = [
    ["||tracker.net^", "@@||tracker.net/px.gif"],
    ["||tracker.net^", "@@||tracker.net/px.gif$image"],
    ["||tracker.net^", "@@||tracker.net/px.gif$script"],
    ["||tracker.net^", "@@||tracker.net^$~third-party"],
    ["/pixel.gif", "@@/pixel.gif$domain=shop.com"],
    ["/pixel.gif", "@@/pixel.gif$domain=news.org"],
    ["||ads.example.com^", "@@||example.com^"],
    ["@@||ads.example.com^"],
    ["/ads/", "/ads/$image", "@@/ads/top.png"],
    ["||metrics.io^$third-party", "@@||img.metrics.io^"],
    ["/beacon/*", "@@*.gif?v="],
    ["/banner/", "@@/Banner/"],
    ["||doubleclick.net^", "@@||doubleclick.net^$popup"],
]


def url_matches_anything(rules, url, ctx):
    return decide(rules, url, ctx) != "no_match"


def main():
    rng = random.Random(20180906)
    rows = []
    seen = set()

    def add(rules, url, ctx):
        key = (tuple(rules), url, ctx["page_host"], ctx["third_party"])
        if key in seen:
            return
        seen.add(key)
        rows.append({
            "rules": rules,
            "url": url,
            "page_host": ctx["page_host"],
            "page_sld": naive_sld(ctx["page_host"]),
            "third_party": ctx["third_party"],
            "expected": decide(rules, url, ctx),
        })

    # Every rule against every URL under one context keeps positives and
    # negatives side by side; then a sample of other contexts.
    for rule, url in itertools.product(SINGLE_RULES, URLS):
        if url_matches_anything([rule], url, CONTEXTS[0]) or rng.random() < 0.12:
            add([rule], url, CONTEXTS[0])
    for rule, url in itertools.product(SINGLE_RULES, URLS):
        if rng.random() < 0.06:
            add([rule], url, rng.choice(CONTEXTS[1:]))
    for rules in RULE_SETS:
        for url in URLS:
            for ctx in CONTEXTS:
                if url_matches_anything(rules, url, ctx) or rng.random() < 0.02:
                    add(rules, url, ctx)

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w") as fh:
        json.dump({"rows": rows}, fh, indent=1)
        fh.write("\n")
    tally = {}
    for row in rows:
        tally[row["expected"]] = tally.get(row["expected"], 0) + 1
    print(f"wrote {len(rows)} rows to {OUT}: {tally}")


if __name__ == "__main__":
    main()
