#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "beaconscan/crawler.hpp"
#include "beaconscan/report.hpp"
#include "fixture_server.hpp"

using namespace beaconscan;
namespace fs = std::filesystem;

namespace {

fixture::FixtureServer& server() {
  static fixture::FixtureServer instance;
  return instance;
}

CrawlConfig fixture_config(double timeout_seconds = 5) {
  CrawlConfig config;
  config.connect_to = server().connect_to();
  config.timeout_seconds = timeout_seconds;
  config.politeness_ms = 2;
  config.per_host_parallelism = 4;
  return config;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("beaconscan_crawler_" + name);
  fs::remove_all(dir);
  return dir;
}

bool logged(const std::vector<std::string>& log, const std::string& prefix) {
  return std::any_of(log.begin(), log.end(), [&](const std::string& line) { return line.rfind(prefix, 0) == 0; });
}

}  // namespace

TEST_CASE("redirects are followed up to ten hops") {
  Crawler crawler(fixture_config());
  const auto three = crawler.fetch(parse_url("http://redir.test/chain/3"));
  CHECK(three.ok());
  CHECK(three.redirect_chain.size() == 4);
  CHECK(three.final_url.serialize() == "http://redir.test/chain/0");

  const auto ten = crawler.fetch(parse_url("http://redir.test/chain/10"));
  CHECK(ten.ok());
  CHECK(ten.redirect_chain.size() == 11);

  const auto eleven = crawler.fetch(parse_url("http://redir.test/chain/11"));
  CHECK_FALSE(eleven.ok());
  CHECK(eleven.error == FetchResult::Error::too_many_redirects);

  const auto loop = crawler.fetch(parse_url("http://loop.test/a"));
  CHECK(loop.error == FetchResult::Error::too_many_redirects);
  CHECK(loop.status_record().state == FetchStatus::State::error);
}

TEST_CASE("a slow response hits the timeout") {
  Crawler crawler(fixture_config(1));
  const auto start = std::chrono::steady_clock::now();
  const auto result = crawler.fetch(parse_url("http://slow.test/"));
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(result.error == FetchResult::Error::timeout);
  CHECK(result.status_record().state == FetchStatus::State::timeout);
  CHECK(elapsed < std::chrono::milliseconds(2500));
}

TEST_CASE("error statuses and repeated headers") {
  Crawler crawler(fixture_config());
  const auto missing = crawler.fetch(parse_url("http://site01.test/nothing-here"));
  CHECK(missing.status == 404);
  CHECK_FALSE(missing.ok());
  CHECK(missing.body.empty());
  CHECK(missing.status_record() == FetchStatus{FetchStatus::State::error, 404, missing.status_record().detail});

  const auto pixel = crawler.fetch(parse_url("http://headers.test/px.gif"));
  REQUIRE(pixel.ok());
  CHECK(pixel.header("etag") == "\"x\"");
  CHECK(pixel.joined_header("set-cookie") == "a=1, b=2");
  CHECK(pixel.joined_header("Cache-Control") == "private, max-age=60");
  CHECK_FALSE(pixel.header("Expires").has_value());
}

TEST_CASE("robots rules") {
  const auto rules = RobotsRules::parse(
      "# comment\n"
      "User-agent: otherbot\nDisallow: /\n\n"
      "User-agent: *\nDisallow: /private/\nAllow: /private/open\nDisallow: /*.cgi$\n",
      "beaconscan/1.0");
  CHECK(rules.allowed("/"));
  CHECK(rules.allowed("/public/page.html"));
  CHECK_FALSE(rules.allowed("/private/x.html"));
  CHECK(rules.allowed("/private/open/x.html"));
  CHECK_FALSE(rules.allowed("/run/x.cgi"));
  CHECK(rules.allowed("/run/x.cgi?y=1"));

  const auto own = RobotsRules::parse("User-agent: beaconscan\nDisallow: /\n\nUser-agent: *\nDisallow:\n", "beaconscan/1.0");
  CHECK_FALSE(own.allowed("/index.html"));
  CHECK(RobotsRules::allow_all().allowed("/anything"));
  CHECK(RobotsRules::parse("User-agent: *\nDisallow:\n", "x").allowed("/a"));
}

TEST_CASE("host gate limits concurrency and spaces starts") {
  HostGate gate(2, std::chrono::milliseconds(20));
  std::atomic<int> active{0}, peak{0};
  std::vector<std::thread> threads;
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      auto ticket = gate.acquire("h:80");
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(100));
}

TEST_CASE("crawl_site stays inside the site and honours robots") {
  server().reset();
  Crawler crawler(fixture_config());
  const auto site03 = crawler.crawl_site({"site03.test", "arts"}, 1);
  REQUIRE(site03.pages.size() == 3);
  CHECK(site03.pages[0].requested_url.serialize() == "http://site03.test/");
  CHECK(site03.robots_blocked == std::vector<std::string>{"http://site03.test/private/c.html"});
  for (const auto& page : site03.pages) {
    CHECK(page.fetch_status.ok());
    CHECK_FALSE(page.body_digest.empty());
    CHECK(page.pass_index == 1);
  }
  const auto log = server().request_log();
  CHECK_FALSE(logged(log, "site03.test/private/"));
  CHECK_FALSE(logged(log, "decoy.test"));

  const auto site05 = crawler.crawl_site({"site05.test", ""}, 2);
  std::vector<std::string> finals;
  for (const auto& page : site05.pages) finals.push_back(page.final_url.serialize());
  CHECK(std::count(finals.begin(), finals.end(), "http://partner05.test/landing.html") == 1);

  const auto site02 = crawler.crawl_site({"site02.test", ""}, 1);
  REQUIRE_FALSE(site02.pages.empty());
  CHECK(site02.pages[0].final_url.host == "www.site02.test");

  const auto dead = crawler.crawl_site({"site20.test", ""}, 1);
  REQUIRE(dead.pages.size() == 1);
  CHECK(dead.pages[0].fetch_status == FetchStatus{FetchStatus::State::error, 503, dead.pages[0].fetch_status.detail});
  CHECK(dead.pages[0].image_refs.empty());
}

TEST_CASE("full fixture crawl matches the manifest") {
  server().reset();
  const auto out = scratch("run");
  auto config = fixture_config();
  for (int n = 1; n <= 20; ++n) config.sites.push_back({fixture::FixtureServer::site(n), "news"});
  Crawler crawler(config);
  const auto corpus = crawler.run(out);

  std::ifstream in(fs::path(BEACONSCAN_FIXTURES) / "fixture_sites" / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  const auto summary = summarize(corpus, DomainMode::naive());
  CHECK(summary.domains_listed == manifest["sites"].get<std::size_t>());
  CHECK(summary.domains_sampled_ok == manifest["domains_sampled_ok"].get<std::size_t>());
  CHECK(summary.images_total == manifest["images_total"].get<std::size_t>());
  CHECK(summary.cross_domain_images == manifest["cross_domain_images"].get<std::size_t>());
  CHECK(summary.one_by_one_images == manifest["one_by_one_images"].get<std::size_t>());
  CHECK(summary.one_by_one_cross_domain == manifest["one_by_one_cross_domain"].get<std::size_t>());
  CHECK(summary.parse_failures == manifest["parse_failures"].get<std::size_t>());
  CHECK(summary.domains_with_one_by_one == manifest["domains_with_one_by_one"].get<std::size_t>());
  for (const auto& row : summary.mimes) {
    CHECK_MESSAGE(row.images == manifest["mime"][row.mime].get<std::size_t>(), row.mime);
  }
  const auto& tally = manifest["tally"];
  CHECK(corpus.tally.skipped_empty == tally["skipped_empty"].get<std::size_t>());
  CHECK(corpus.tally.skipped_data_uri == tally["skipped_data_uri"].get<std::size_t>());
  CHECK(corpus.tally.image_fetch_errors == tally["image_fetch_errors"].get<std::size_t>());
  CHECK(corpus.tally.duplicate_images == tally["duplicate_images"].get<std::size_t>());
  CHECK(corpus.tally.robots_blocked == tally["robots_blocked"].get<std::size_t>());

  // site07 fails its first pass and recovers; site20 never answers.
  REQUIRE(corpus.sites.size() == 20);
  CHECK(corpus.sites[6].pass_results == std::vector<std::string>{"error:503", "ok", "ok"});
  CHECK(corpus.sites[6].sampled_ok);
  CHECK(corpus.sites[19].pass_results == std::vector<std::string>{"error:503", "error:503", "error:503"});
  CHECK_FALSE(corpus.sites[19].sampled_ok);

  for (const auto& host : {"site01.test", "cdn.imghost.test", "adnet.test"}) {
    CHECK_MESSAGE(server().max_concurrency(host) <= config.per_host_parallelism, host);
  }
  CHECK(server().requests_to("decoy.test") == 0);

  const auto reloaded = corpus_io::load(out);
  CHECK(reloaded.images.size() == corpus.images.size());
  CHECK(corpus_io::digest_of(out) == corpus_io::digest_of(out));
}

TEST_CASE("ingest fetches images of pre-rendered pages") {
  server().reset();
  const auto out = scratch("ingest");
  auto config = fixture_config();
  config.sites = {{"snapshot.test", "news"}};
  Crawler crawler(config);
  const auto corpus = crawler.ingest(fs::path(BEACONSCAN_FIXTURES) / "snapshots", out);
  REQUIRE(corpus.sites.size() == 1);
  CHECK(corpus.sites[0].category == "news");
  CHECK(corpus.sites[0].pass_results == std::vector<std::string>{"ingested"});
  REQUIRE(corpus.pages.size() == 2);
  CHECK(corpus.images.size() == 3);
  CHECK(corpus.tally.skipped_data_uri == 1);
  CHECK(corpus.tally.image_fetch_errors == 1);
  const auto beacons = std::count_if(corpus.images.begin(), corpus.images.end(),
                                     [](const ImageRecord& image) { return image.is_beacon(); });
  CHECK(beacons == 2);
  CHECK(server().requests_to("ignored.test") == 0);

  CHECK_THROWS_AS(crawler.ingest(fs::path(BEACONSCAN_FIXTURES) / "no-such-dir", out), ConfigError);
}

TEST_CASE("config files and domain lists") {
  std::istringstream list("domain,category\n# note\nExample.com,news\n\nother.org\n");
  const auto sites = read_domain_list(list);
  REQUIRE(sites.size() == 2);
  CHECK(sites[0].domain == "example.com");
  CHECK(sites[0].category == "news");
  CHECK(sites[1].category.empty());

  const auto dir = scratch("config");
  const auto file = server().write_config(dir);
  const auto parsed = read_config_file(file);
  CHECK(parsed.config.sites.size() == 20);
  CHECK(parsed.config.connect_to == server().connect_to());
  CHECK(parsed.config.per_host_parallelism == 4);

  std::ofstream(dir / "bad.json") << R"({"domains": "sites.csv", "passes": 0})";
  CHECK_THROWS_AS(read_config_file(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(read_config_file(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(read_config_file(dir / "missing.json"), ConfigError);
}
