#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "beaconscan/corpus.hpp"
#include "beaconscan/domain.hpp"
#include "beaconscan/url.hpp"

namespace beaconscan {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SiteEntry {
  std::string domain;
  std::string category;
};

/// `domain,category` rows; category may be missing. Blank lines, `#`
/// comments and a leading `domain,...` header row are skipped.
std::vector<SiteEntry> read_domain_list(std::istream& in);

struct CrawlConfig {
  std::vector<SiteEntry> sites;
  double timeout_seconds = 30;
  int passes = 3;
  int depth = 1;
  std::size_t per_host_parallelism = 2;
  std::size_t site_parallelism = 8;
  std::string user_agent = "beaconscan/1.0 (image beacon survey crawler)";
  std::string scheme = "http";
  int politeness_ms = 200;
  bool respect_robots = true;
  /// "HOST:PORT" that every connection is routed to, whatever the URL host.
  std::optional<std::string> connect_to;
  std::size_t max_body_bytes = 32u << 20;
  DomainMode mode = DomainMode::naive();

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Settings read from a JSON config file; the domain list path is resolved
/// relative to the file. `mode` and `psl_file` stay unresolved for the caller.
struct ConfigFile {
  CrawlConfig config;
  std::optional<std::string> mode;
  std::optional<std::string> psl_file;
};
ConfigFile read_config_file(const std::filesystem::path& file);

struct FetchResult {
  enum class Error { none, timeout, too_many_redirects, connection };

  ParsedUrl final_url;
  int status = 0;
  std::vector<std::pair<std::string, std::string>> headers;  // final response, in arrival order
  std::string body;                                           // 2xx responses only
  std::int64_t elapsed_ms = 0;
  std::vector<ParsedUrl> redirect_chain;  // starts with the requested URL
  Error error = Error::none;
  std::string error_detail;

  bool ok() const { return error == Error::none && status >= 200 && status < 300; }
  /// First header with this name, compared case-insensitively.
  std::optional<std::string> header(std::string_view name) const;
  /// All values of a header joined with ", ".
  std::optional<std::string> joined_header(std::string_view name) const;
  FetchStatus status_record() const;
};

/// Per-host admission: at most `limit` requests in flight and request
/// starts spaced at least `spacing` apart.
class HostGate {
 public:
  HostGate(std::size_t limit, std::chrono::milliseconds spacing) : limit_(limit), spacing_(spacing) {}

  class Ticket {
   public:
    Ticket(HostGate* gate, std::string host) : gate_(gate), host_(std::move(host)) {}
    Ticket(Ticket&& other) noexcept : gate_(std::exchange(other.gate_, nullptr)), host_(std::move(other.host_)) {}
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    Ticket& operator=(Ticket&&) = delete;
    ~Ticket() {
      if (gate_) gate_->release(host_);
    }

   private:
    HostGate* gate_;
    std::string host_;
  };

  Ticket acquire(const std::string& host);

 private:
  struct State {
    std::size_t active = 0;
    std::chrono::steady_clock::time_point next_start{};
  };
  void release(const std::string& host);

  std::size_t limit_;
  std::chrono::milliseconds spacing_;
  std::mutex mutex_;
  std::condition_variable changed_;
  std::map<std::string, State> hosts_;
};

class HttpFetcher {
 public:
  HttpFetcher(const CrawlConfig& config, HostGate& gate);

  /// GET with manual redirect following (at most 10 hops) inside one total
  /// time budget. Never throws for network conditions.
  FetchResult fetch(const ParsedUrl& url) const;

  static constexpr int kMaxRedirects = 10;

 private:
  const CrawlConfig& config_;
  HostGate& gate_;
};

/// robots.txt rules for one host; longest matching Allow/Disallow wins.
class RobotsRules {
 public:
  static RobotsRules parse(std::string_view text, std::string_view user_agent);
  static RobotsRules allow_all() { return {}; }
  bool allowed(std::string_view request_target) const;

 private:
  std::vector<std::pair<std::string, bool>> rules_;  // prefix, allow
};

/// One PageRecord per fetched page plus the raw bodies of successful pages.
struct SitePages {
  std::vector<PageRecord> pages;
  std::vector<std::string> bodies;  // parallel to pages; empty unless ok
  std::vector<std::string> robots_blocked;  // requested URLs refused by robots.txt
};

class Crawler {
 public:
  explicit Crawler(CrawlConfig config);
  ~Crawler();
  Crawler(const Crawler&) = delete;
  Crawler& operator=(const Crawler&) = delete;

  const CrawlConfig& config() const { return config_; }

  FetchResult fetch(const ParsedUrl& url) const;

  /// Primary page, then its same-SLD frontier up to the configured depth.
  SitePages crawl_site(const SiteEntry& site, int pass_index);

  /// Resolves, fetches, deduplicates by content digest and inspects every
  /// image of `pages`. Blobs go to `blob_dir` when given.
  std::vector<ImageRecord> fetch_images(const std::vector<PageRecord>& pages, CrawlTally& tally,
                                        const std::optional<std::filesystem::path>& blob_dir = std::nullopt);

  /// All passes over all sites; the corpus is saved to `out_dir` at the end.
  Corpus run(const std::filesystem::path& out_dir);

  /// Pre-rendered pages from `<site>/<page-id>.html` with `<site>/meta.json`
  /// mapping page ids to final URLs; only images are fetched.
  Corpus ingest(const std::filesystem::path& snapshot_dir, const std::filesystem::path& out_dir);

 private:
  struct Impl;
  CrawlConfig config_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace beaconscan
