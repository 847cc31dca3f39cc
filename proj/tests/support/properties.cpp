#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "beaconscan/features.hpp"
#include "beaconscan/filter_engine.hpp"
#include "beaconscan/html_extract.hpp"
#include "beaconscan/image_inspect.hpp"
#include "beaconscan/report.hpp"
#include "oracles.hpp"
#include "synthetic_images.hpp"

namespace fixture {

using namespace beaconscan;

namespace {

template <typename Body>
PropertyResult run(std::string name, std::uint64_t seed, std::size_t cases, Body body) {
  PropertyResult result{std::move(name), 0, 0, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    ++result.cases;
    std::string failure;
    try {
      failure = body(rng, i);
    } catch (const std::exception& error) {
      failure = std::string("exception: ") + error.what();
    } catch (...) {
      failure = "unknown exception";
    }
    if (!failure.empty() && result.failures++ == 0) result.first_failure = "case " + std::to_string(i) + ": " + failure;
  }
  return result;
}

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&items)[N]) {
  return items[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

int between(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string random_label(std::mt19937_64& rng) {
  static const char kChars[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
  std::string label;
  const int length = between(rng, 1, 10);
  for (int i = 0; i < length; ++i) {
    char c = kChars[between(rng, 0, sizeof kChars - 2)];
    if (c == '-' && (i == 0 || i == length - 1)) c = 'x';
    label.push_back(c);
  }
  return label;
}

std::string random_component(std::mt19937_64& rng) {
  static const char* const kPieces[] = {"a", "img", "px.gif", "%20", "%2F", "..", ".", "~u", "x y", "\xc3\xa9",
                                        "=", "&", "+", "%", "1", "@", ";", ",", "!", "$", "'", "(", ")"};
  std::string out;
  const int n = between(rng, 0, 5);
  for (int i = 0; i < n; ++i) out += pick(rng, kPieces);
  return out;
}

std::string random_url(std::mt19937_64& rng) {
  static const char* const kSchemes[] = {"http", "https", "HTTP", "Https"};
  std::string url = std::string(pick(rng, kSchemes)) + "://";
  const int labels = between(rng, 1, 4);
  for (int i = 0; i < labels; ++i) url += (i ? "." : "") + random_label(rng);
  if (between(rng, 0, 3) == 0) url += ":" + std::to_string(between(rng, 1, 65535));
  const int segments = between(rng, 0, 4);
  for (int i = 0; i < segments; ++i) url += "/" + random_component(rng);
  if (between(rng, 0, 1)) url += "?" + random_component(rng);
  if (between(rng, 0, 3) == 0) url += "#" + random_component(rng);
  return url;
}

std::string random_bytes(std::mt19937_64& rng, std::size_t max) {
  std::string out(static_cast<std::size_t>(between(rng, 0, static_cast<int>(max))), '\0');
  for (auto& c : out) c = static_cast<char>(between(rng, 0, 255));
  return out;
}

}  // namespace

PropertyResult url_round_trip(std::uint64_t seed, std::size_t cases) {
  return run("URL round-trip", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    const std::string raw = random_url(rng);
    const ParsedUrl first = parse_url(raw);
    const ParsedUrl second = parse_url(first.serialize());
    if (!(first == second)) return raw + " -> " + first.serialize() + " -> " + second.serialize();
    if (first.host.empty()) return raw + ": empty host";
    if (std::any_of(first.host.begin(), first.host.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
      return raw + ": whitespace in host";
    }
    // A relative reference resolved against the result survives the trip too.
    const ParsedUrl relative = parse_url(random_component(rng) + "/x?" + random_component(rng), first);
    if (!(parse_url(relative.serialize()) == relative)) return "relative against " + raw;
    return {};
  });
}

PropertyResult qdom_implies_qurl(std::uint64_t seed, std::size_t cases) {
  return run("qdom implies qurl", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    static const char* const kDomains[] = {"a.com", "example.com", "co.uk", "shop.example.com", "x", "%", ""};
    std::set<std::string> referencing;
    const int n = between(rng, 0, 3);
    for (int i = 0; i < n; ++i) referencing.insert(pick(rng, kDomains));
    std::string raw = random_url(rng);
    raw.resize(std::min(raw.size(), raw.find('#')));
    if (between(rng, 0, 1)) raw += std::string(raw.find('?') == std::string::npos ? "/?" : "&") + "ref=" + pick(rng, kDomains);
    const ParsedUrl url = parse_url(raw);
    for (bool decode : {true, false}) {
      if (qdom(url, referencing, decode) && !qurl(url)) return raw;
    }
    return {};
  });
}

PropertyResult single_mime_dummy(std::uint64_t seed, std::size_t cases) {
  const FilterSet filters;
  const TopDomains top;
  return run("single true mime dummy", seed, cases, [&](std::mt19937_64& rng, std::size_t) -> std::string {
    static const MimeType kMimes[] = {MimeType::of(MimeType::Kind::gif),  MimeType::of(MimeType::Kind::jpeg),
                                      MimeType::of(MimeType::Kind::png),  MimeType::of(MimeType::Kind::svg),
                                      MimeType::of(MimeType::Kind::webp), MimeType::other("image/bmp"),
                                      MimeType::other("image/x-icon"),    MimeType::other("application/octet-stream"),
                                      MimeType::other("")};
    PageRecord page;
    page.site_domain = "a.com";
    page.requested_url = page.final_url = parse_url("http://www.a.com/");
    ImageRecord image;
    image.resolved_url = image.fetched_url = parse_url(random_url(rng));
    image.mime = between(rng, 0, 3) ? pick(rng, kMimes) : sniff_mime(as_bytes(random_bytes(rng, 32)));
    image.dimensions = Dimensions{1, 1};
    classify_image(image, page, DomainMode::naive());
    const auto v = featurize(image, page, filters, top, {"a.com"}, DomainMode::naive());
    const auto on = std::count(v.mime.begin(), v.mime.end(), true);
    if (on != 1) return image.mime.name() + ": " + std::to_string(on) + " dummies set";
    if (v.qdom && !v.qurl) return "qdom without qurl";
    if (v.mage < -1) return "mage below -1";
    return {};
  });
}

PropertyResult summary_inequalities(std::uint64_t seed, std::size_t cases) {
  const auto table = std::make_shared<const SuffixTable>(SuffixTable::parse("com\norg\nuk\nco.uk\nnet\n*.ck\n!www.ck\n"));
  return run("SampleSummary inequalities", seed, cases, [&](std::mt19937_64& rng, std::size_t) -> std::string {
    const Corpus corpus = random_corpus(rng());
    for (const auto& mode : {DomainMode::naive(), DomainMode::suffix_list(table)}) {
      const auto summary = summarize(corpus, mode);
      const auto bad = summary_violations(summary);
      if (!bad.empty()) return std::string(mode.name()) + ": " + bad.front();
      // Percentages never divide by zero.
      if (percent(summary.one_by_one_images, summary.images_total).find("nan") != std::string::npos) return "nan";
    }
    return {};
  });
}

PropertyResult extract_never_crashes(std::uint64_t seed, std::size_t cases) {
  return run("html_extract fuzz", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    static const char* const kTokens[] = {
        "<img", "<IMG ", " src=", "src", "=", "\"", "'", ">", "/>", "<", "</img>", "<!--", "-->", "<script>",
        "</script>", "<style>", "</style>", "<a href=", "</a>", "<iframe src=", "<frame src=", "<noscript>",
        "<![CDATA[", "]]>", "<!doctype html>", "&amp;", "&#x41;", "&#9999999999;", "&", "#", "alt", "style=",
        "x.gif", "http://a.com/p?x=1", "//b.net/p", "mailto:x@y", "javascript:void(0)", "data:image/gif;base64,AA",
        " ", "\n", "\t", "\0", "\xff", "\xc3", "<meta charset=", "utf-8", "windows-1252", "<textarea>", "<title>"};
    std::string html;
    const int tokens = between(rng, 0, 80);
    for (int i = 0; i < tokens; ++i) html += between(rng, 0, 9) ? std::string(pick(rng, kTokens)) : random_bytes(rng, 6);
    static const char* const kHints[] = {"", "utf-8", "iso-8859-1", "windows-1252", "shift_jis", "bogus"};
    const std::string hint = pick(rng, kHints);
    const auto result = hint.empty() ? extract(html) : extract(html, hint);
    const auto page = parse_url("http://www.a.com/dir/page.html");
    for (const auto& url : frontier(result, page, DomainMode::naive())) {
      if (url.scheme != "http" && url.scheme != "https") return "non-http frontier URL";
      if (second_level_domain(url.host, DomainMode::naive()) != "a.com") return "frontier left the site";
    }
    return {};
  });
}

PropertyResult inspect_never_crashes(std::uint64_t seed, std::size_t cases) {
  return run("image_inspect fuzz", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    std::string bytes;
    switch (between(rng, 0, 6)) {
      case 0: bytes = gif(static_cast<std::uint16_t>(between(rng, 0, 3)), 1, "t"); break;
      case 1: bytes = png(static_cast<std::uint32_t>(between(rng, 0, 3)), 1, "t"); break;
      case 2: bytes = jpeg(1, static_cast<std::uint16_t>(between(rng, 0, 3)), "t"); break;
      case 3: bytes = webp(1, 1, "t"); break;
      case 4: bytes = svg(std::to_string(between(rng, 0, 2)), "1px", "t"); break;
      case 5: bytes = "RIFF\x10\0\0\0WEBPVP8L" + random_bytes(rng, 12); break;
      default: bytes = random_bytes(rng, 64); break;
    }
    // Mutate: truncate, flip or splice.
    const int edits = between(rng, 0, 3);
    for (int e = 0; e < edits && !bytes.empty(); ++e) {
      const auto at = static_cast<std::size_t>(between(rng, 0, static_cast<int>(bytes.size()) - 1));
      switch (between(rng, 0, 2)) {
        case 0: bytes.resize(at); break;
        case 1: bytes[at] = static_cast<char>(between(rng, 0, 255)); break;
        default: bytes.insert(at, random_bytes(rng, 4)); break;
      }
    }
    static const char* const kTypes[] = {"", "image/gif", "image/svg+xml", "text/html", "image/png; charset=x"};
    const std::string type = pick(rng, kTypes);
    const auto result = type.empty() ? inspect_image(as_bytes(bytes)) : inspect_image(as_bytes(bytes), type);
    if (result.dimensions && (result.dimensions->width < 0 || result.dimensions->height < 0)) return "negative size";
    if (result.error && result.invisible) return "invisible despite parse error";
    try {
      const auto mime = sniff_mime(as_bytes(bytes));
      if (mime.is_raster()) raster_dimensions(as_bytes(bytes), mime);
    } catch (const ImageParseError&) {
    }
    return {};
  });
}

PropertyResult best_split_matches_brute_force(std::uint64_t seed, std::size_t cases) {
  return run("best_split equals brute force", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    const Dataset data = random_small_dataset(rng(), 12, 4);
    const std::size_t min_leaf = between(rng, 0, 3) ? 1 : static_cast<std::size_t>(between(rng, 1, 3));
    std::vector<std::size_t> rows(data.size()), features(data.arity());
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(features.begin(), features.end(), 0);
    const auto fast = best_split(data, rows, features, min_leaf);
    const auto slow = brute_force_split(data, min_leaf);
    if (fast.has_value() != slow.has_value()) return fast ? "spurious split" : "missed split";
    if (!fast) return {};
    if (fast->feature != slow->feature || fast->threshold != slow->threshold) {
      return "chose f" + std::to_string(fast->feature) + "<=" + std::to_string(fast->threshold) + ", oracle f" +
             std::to_string(slow->feature) + "<=" + std::to_string(slow->threshold);
    }
    if (std::abs(fast->impurity_decrease - slow->gain) > 1e-9) return "impurity decrease differs";
    return {};
  });
}

PropertyResult fit_matches_naive_cart(std::uint64_t seed, std::size_t cases) {
  return run("fit equals naive CART", seed, cases, [](std::mt19937_64& rng, std::size_t) -> std::string {
    const Dataset data = random_small_dataset(rng(), 20, 5);
    const Tree tree = fit(data);
    const NaiveCart oracle(data);
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (tree.predict(data.rows[r]) != oracle.predict(data.rows[r])) return "row " + std::to_string(r);
    }
    for (int probe = 0; probe < 20; ++probe) {
      std::vector<double> row(data.arity());
      for (auto& x : row) x = between(rng, -3, 6) / 2.0;
      if (tree.predict(row) != oracle.predict(row)) return "probe " + std::to_string(probe);
    }
    return {};
  });
}

PropertyResult filter_order_invariance(std::uint64_t seed, std::size_t cases) {
  std::vector<std::string> rules;
  {
    std::ifstream in(std::string(BEACONSCAN_FIXTURES) + "/filters/easylist_snapshot.txt");
    for (std::string line; std::getline(in, line);) rules.push_back(line);
    std::ifstream conformance(std::string(BEACONSCAN_FIXTURES) + "/filters/conformance.json");
    std::set<std::string> seen(rules.begin(), rules.end());
    for (const auto& row : nlohmann::json::parse(conformance)["rows"]) {
      for (const auto& rule : row["rules"]) {
        if (seen.insert(rule.get<std::string>()).second) rules.push_back(rule.get<std::string>());
      }
    }
  }
  static const char* const kUrls[] = {
      "http://adnet.test/px.gif?slot=top", "http://px.tracker1.test/p.gif?sid=01", "http://px.tracker2.test/p.gif?sid=02",
      "http://cdn.imghost.test/s01/0.gif", "http://tracker.net/px.gif?uid=42", "http://x.com/ads/top.png",
      "http://shop.com/img/pixel.gif", "http://metrics.io/c.gif", "http://a.com/p?uid=1&ref=b.com",
      "http://frame-ads.test/f.gif", "http://x.com/banner/1/img.gif", "http://stats.site.com/p.gif"};
  static const char* const kPages[] = {"www.shop.com", "site09.test", "blog.shop.com", "news.org", "x.com"};
  return run("filter rule order invariance", seed, cases, [&](std::mt19937_64& rng, std::size_t) -> std::string {
    std::vector<std::string> chosen;
    std::sample(rules.begin(), rules.end(), std::back_inserter(chosen), between(rng, 1, 12), rng);
    auto shuffled = chosen;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto join = [](const std::vector<std::string>& lines) {
      std::string text;
      for (const auto& line : lines) text += line + "\n";
      return text;
    };
    const auto a = FilterSet::compile(join(chosen));
    const auto b = FilterSet::compile(join(shuffled));
    for (int i = 0; i < 8; ++i) {
      MatchContext context;
      context.request_url = parse_url(pick(rng, kUrls));
      context.page_host = pick(rng, kPages);
      context.page_sld = second_level_domain(context.page_host, DomainMode::naive());
      context.is_third_party = between(rng, 0, 1);
      if (a.matches(context) != b.matches(context)) return "order changed the decision for " + context.request_url.serialize();
    }
    return {};
  });
}

}  // namespace fixture
