#include "beaconscan/crawler.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <curl/curl.h>
#include <nlohmann/json.hpp>

#include "beaconscan/html_extract.hpp"
#include "beaconscan/image_inspect.hpp"

namespace beaconscan {

using Clock = std::chrono::steady_clock;

std::vector<SiteEntry> read_domain_list(std::istream& in) {
  std::vector<SiteEntry> sites;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto text = trim_ascii(line);
    if (text.empty() || text.front() == '#') continue;
    const auto comma = text.find(',');
    SiteEntry entry{to_lower_ascii(trim_ascii(text.substr(0, comma))), ""};
    if (comma != std::string_view::npos) entry.category = std::string(trim_ascii(text.substr(comma + 1)));
    const bool header = first && entry.domain == "domain";
    first = false;
    if (header || entry.domain.empty()) continue;
    if (!entry.domain.empty() && entry.domain.back() == '.') entry.domain.pop_back();
    sites.push_back(std::move(entry));
  }
  return sites;
}

void CrawlConfig::validate() const {
  if (!(timeout_seconds > 0)) throw ConfigError("timeout_seconds must be positive");
  if (passes < 1) throw ConfigError("passes must be at least 1");
  if (depth < 0) throw ConfigError("depth must not be negative");
  if (per_host_parallelism < 1) throw ConfigError("per_host_parallelism must be at least 1");
  if (site_parallelism < 1) throw ConfigError("site_parallelism must be at least 1");
  if (politeness_ms < 0) throw ConfigError("politeness_ms must not be negative");
  if (scheme != "http" && scheme != "https") throw ConfigError("scheme must be http or https");
}

ConfigFile read_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& error) {
    throw ConfigError("config file " + file.string() + ": " + error.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");

  ConfigFile result;
  auto& c = result.config;
  try {
    if (j.contains("domains")) {
      auto list = std::filesystem::path(j.at("domains").get<std::string>());
      if (list.is_relative()) list = file.parent_path() / list;
      std::ifstream domains(list);
      if (!domains) throw ConfigError("cannot read domain list " + list.string());
      c.sites = read_domain_list(domains);
    }
    if (j.contains("sites")) {
      for (const auto& site : j.at("sites")) {
        c.sites.push_back({to_lower_ascii(site.at("domain").get<std::string>()), site.value("category", "")});
      }
    }
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.passes = j.value("passes", c.passes);
    c.depth = j.value("depth", c.depth);
    c.per_host_parallelism = j.value("per_host_parallelism", c.per_host_parallelism);
    c.site_parallelism = j.value("site_parallelism", c.site_parallelism);
    c.user_agent = j.value("user_agent", c.user_agent);
    c.scheme = j.value("scheme", c.scheme);
    c.politeness_ms = j.value("politeness_ms", c.politeness_ms);
    c.respect_robots = j.value("respect_robots", c.respect_robots);
    if (j.contains("connect_to")) c.connect_to = j.at("connect_to").get<std::string>();
    if (j.contains("mode")) result.mode = j.at("mode").get<std::string>();
    if (j.contains("psl_file")) {
      auto psl = std::filesystem::path(j.at("psl_file").get<std::string>());
      if (psl.is_relative()) psl = file.parent_path() / psl;
      result.psl_file = psl.string();
    }
  } catch (const nlohmann::json::exception& error) {
    throw ConfigError("config file " + file.string() + ": " + error.what());
  }
  c.validate();
  return result;
}

std::optional<std::string> FetchResult::header(std::string_view name) const {
  const auto wanted = to_lower_ascii(name);
  for (const auto& [key, value] : headers) {
    if (to_lower_ascii(key) == wanted) return value;
  }
  return std::nullopt;
}

std::optional<std::string> FetchResult::joined_header(std::string_view name) const {
  const auto wanted = to_lower_ascii(name);
  std::optional<std::string> joined;
  for (const auto& [key, value] : headers) {
    if (to_lower_ascii(key) != wanted) continue;
    joined = joined ? *joined + ", " + value : value;
  }
  return joined;
}

FetchStatus FetchResult::status_record() const {
  switch (error) {
    case Error::timeout:
      return {FetchStatus::State::timeout, 0, error_detail};
    case Error::too_many_redirects:
    case Error::connection:
      return {FetchStatus::State::error, 0, error_detail};
    case Error::none:
      break;
  }
  if (ok()) return FetchStatus::success();
  return {FetchStatus::State::error, status, "HTTP " + std::to_string(status)};
}

HostGate::Ticket HostGate::acquire(const std::string& host) {
  std::unique_lock lock(mutex_);
  auto& state = hosts_[host];
  while (true) {
    if (state.active < limit_) {
      const auto now = Clock::now();
      if (now >= state.next_start) {
        ++state.active;
        state.next_start = now + spacing_;
        return Ticket(this, host);
      }
      changed_.wait_until(lock, state.next_start);
    } else {
      changed_.wait(lock);
    }
  }
}

void HostGate::release(const std::string& host) {
  {
    std::lock_guard lock(mutex_);
    --hosts_[host].active;
  }
  changed_.notify_all();
}

namespace {

void init_curl_once() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

struct Transfer {
  std::size_t limit = 0;
  bool overflow = false;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

std::size_t on_body(char* data, std::size_t size, std::size_t count, void* user) {
  auto* t = static_cast<Transfer*>(user);
  const std::size_t n = size * count;
  if (t->body.size() + n > t->limit) {
    t->overflow = true;
    return 0;
  }
  t->body.append(data, n);
  return n;
}

std::size_t on_header(char* data, std::size_t size, std::size_t count, void* user) {
  auto* t = static_cast<Transfer*>(user);
  const std::size_t n = size * count;
  std::string_view line(data, n);
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  if (line.rfind("HTTP/", 0) == 0) {
    t->headers.clear();  // a new response (after 1xx) starts
  } else if (const auto colon = line.find(':'); colon != std::string_view::npos) {
    t->headers.emplace_back(std::string(trim_ascii(line.substr(0, colon))),
                            std::string(trim_ascii(line.substr(colon + 1))));
  }
  return n;
}

bool is_redirect(int status) {
  return status == 301 || status == 302 || status == 303 || status == 307 || status == 308;
}

}  // namespace

HttpFetcher::HttpFetcher(const CrawlConfig& config, HostGate& gate) : config_(config), gate_(gate) {
  init_curl_once();
}

FetchResult HttpFetcher::fetch(const ParsedUrl& url) const {
  FetchResult result;
  result.redirect_chain.push_back(url);
  ParsedUrl current = url;
  const auto budget = std::chrono::milliseconds(static_cast<std::int64_t>(config_.timeout_seconds * 1000));
  Clock::duration spent{};

  for (int hop = 0;; ++hop) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(budget - spent);
    if (remaining.count() <= 0) {
      result.error = FetchResult::Error::timeout;
      result.error_detail = "time budget exhausted";
      break;
    }

    Transfer transfer;
    transfer.limit = config_.max_body_bytes;
    CURLcode code;
    long status = 0;
    {
      auto ticket = gate_.acquire(current.host + ":" + std::to_string(current.port));
      const auto started = Clock::now();
      CURL* curl = curl_easy_init();
      if (!curl) {
        result.error = FetchResult::Error::connection;
        result.error_detail = "curl_easy_init failed";
        break;
      }
      curl_slist* route = nullptr;
      if (config_.connect_to) route = curl_slist_append(route, ("::" + *config_.connect_to).c_str());
      const std::string target = current.serialize();
      curl_easy_setopt(curl, CURLOPT_URL, target.c_str());
      curl_easy_setopt(curl, CURLOPT_HTTPGET, 1L);
      curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 0L);
      curl_easy_setopt(curl, CURLOPT_NOSIGNAL, 1L);
      curl_easy_setopt(curl, CURLOPT_USERAGENT, config_.user_agent.c_str());
      curl_easy_setopt(curl, CURLOPT_TIMEOUT_MS, static_cast<long>(remaining.count()));
      curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT_MS, static_cast<long>(remaining.count()));
      curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, on_body);
      curl_easy_setopt(curl, CURLOPT_WRITEDATA, &transfer);
      curl_easy_setopt(curl, CURLOPT_HEADERFUNCTION, on_header);
      curl_easy_setopt(curl, CURLOPT_HEADERDATA, &transfer);
      if (route) curl_easy_setopt(curl, CURLOPT_CONNECT_TO, route);
      code = curl_easy_perform(curl);
      curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &status);
      curl_easy_cleanup(curl);
      curl_slist_free_all(route);
      spent += Clock::now() - started;
    }

    if (code != CURLE_OK) {
      if (code == CURLE_OPERATION_TIMEDOUT) {
        result.error = FetchResult::Error::timeout;
      } else {
        result.error = FetchResult::Error::connection;
      }
      result.error_detail = transfer.overflow ? "body exceeds size limit" : curl_easy_strerror(code);
      break;
    }

    result.status = static_cast<int>(status);
    result.headers = std::move(transfer.headers);
    if (is_redirect(result.status)) {
      const auto location = result.header("location");
      if (location) {
        if (hop == kMaxRedirects) {
          result.error = FetchResult::Error::too_many_redirects;
          result.error_detail = "more than " + std::to_string(kMaxRedirects) + " redirects";
          break;
        }
        try {
          ParsedUrl next = parse_url(*location, current);
          if (next.scheme != "http" && next.scheme != "https") throw MalformedUrl("not http(s): " + *location);
          current = std::move(next);
        } catch (const MalformedUrl& error) {
          result.error = FetchResult::Error::connection;
          result.error_detail = std::string("bad redirect: ") + error.what();
          break;
        }
        result.redirect_chain.push_back(current);
        continue;
      }
    }
    if (result.ok()) result.body = std::move(transfer.body);
    break;
  }
  result.final_url = current;
  result.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(spent).count();
  return result;
}

namespace {

// robots.txt path pattern: `*` matches any run, a trailing `$` anchors the end.
bool robots_match(std::string_view pattern, std::string_view path) {
  if (pattern.empty()) return true;
  if (pattern == "$") return path.empty();
  if (pattern.front() == '*') {
    for (std::size_t skip = 0; skip <= path.size(); ++skip) {
      if (robots_match(pattern.substr(1), path.substr(skip))) return true;
    }
    return false;
  }
  return !path.empty() && pattern.front() == path.front() && robots_match(pattern.substr(1), path.substr(1));
}

std::string product_token(std::string_view user_agent) {
  const auto end = user_agent.find_first_of("/ ");
  return to_lower_ascii(user_agent.substr(0, end));
}

}  // namespace

RobotsRules RobotsRules::parse(std::string_view text, std::string_view user_agent) {
  const std::string token = product_token(user_agent);
  std::vector<std::pair<std::string, bool>> named, wildcard;
  bool group_named = false, group_wildcard = false, in_agents = false;

  std::istringstream lines{std::string(text)};
  std::string raw;
  while (std::getline(lines, raw)) {
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string key = to_lower_ascii(trim_ascii(line.substr(0, colon)));
    const std::string value(trim_ascii(line.substr(colon + 1)));
    if (key == "user-agent") {
      if (!in_agents) group_named = group_wildcard = false;
      in_agents = true;
      const std::string agent = to_lower_ascii(value);
      if (agent == "*") group_wildcard = true;
      else if (!token.empty() && agent == token) group_named = true;
    } else if (key == "allow" || key == "disallow") {
      in_agents = false;
      if (value.empty()) continue;
      const std::pair<std::string, bool> rule{value, key == "allow"};
      if (group_named) named.push_back(rule);
      if (group_wildcard) wildcard.push_back(rule);
    } else {
      in_agents = false;
    }
  }
  RobotsRules rules;
  rules.rules_ = named.empty() ? std::move(wildcard) : std::move(named);
  return rules;
}

bool RobotsRules::allowed(std::string_view request_target) const {
  std::size_t best_length = 0;
  bool verdict = true;
  bool matched = false;
  for (const auto& [pattern, allow] : rules_) {
    // plain patterns match as prefixes
    const std::string anchored = pattern.back() == '$' ? pattern : pattern + "*";
    if (!robots_match(anchored, request_target)) continue;
    if (!matched || pattern.size() > best_length || (pattern.size() == best_length && allow)) {
      best_length = pattern.size();
      verdict = allow;
      matched = true;
    }
  }
  return verdict;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::optional<std::string> charset_of(const std::optional<std::string>& content_type) {
  if (!content_type) return std::nullopt;
  const std::string lowered = to_lower_ascii(*content_type);
  const auto at = lowered.find("charset=");
  if (at == std::string::npos) return std::nullopt;
  std::string value = lowered.substr(at + 8);
  value = value.substr(0, value.find(';'));
  value = std::string(trim_ascii(value));
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  return value;
}

std::string pass_label(const FetchStatus& status) {
  switch (status.state) {
    case FetchStatus::State::ok:
      return "ok";
    case FetchStatus::State::timeout:
      return "timeout";
    case FetchStatus::State::error:
      return status.code ? "error:" + std::to_string(status.code) : "error";
  }
  return "error";
}

constexpr std::size_t kImageThreadsPerSite = 8;

}  // namespace

struct Crawler::Impl {
  explicit Impl(const CrawlConfig& config)
      : gate(config.per_host_parallelism, std::chrono::milliseconds(config.politeness_ms)), fetcher(config, gate) {}

  HostGate gate;
  HttpFetcher fetcher;
  std::mutex robots_mutex;
  std::map<std::string, RobotsRules> robots;  // origin -> rules, reset every pass
};

namespace {

/// Gathers the image references of a site's pages and fetches each distinct
/// URL once, retrying failures on later calls. Records are built at the end in
/// reference order, so the first occurrence of a digest wins.
class ImageCollector {
 public:
  ImageCollector(const CrawlConfig& config, const HttpFetcher& fetcher) : config_(config), fetcher_(fetcher) {}

  void add_page(std::size_t index, const PageRecord& page) {
    for (const auto& tag : page.image_refs) {
      const auto src = trim_ascii(tag.src);
      if (src.empty()) {
        ++tally_.skipped_empty;
        continue;
      }
      if (to_lower_ascii(src.substr(0, 5)) == "data:") {
        ++tally_.skipped_data_uri;
        continue;
      }
      try {
        ParsedUrl resolved = parse_url(src, page.final_url);
        if (resolved.scheme != "http" && resolved.scheme != "https") throw MalformedUrl("not http(s)");
        const std::string key = resolved.serialize();
        slots_.push_back({index, tag, std::move(resolved), key});
        results_.try_emplace(key);
      } catch (const MalformedUrl&) {
        ++tally_.skipped_unresolvable;
      }
    }
  }

  void fetch_pending(const std::optional<std::filesystem::path>& corpus_dir) {
    std::vector<std::string> pending;
    std::set<std::string> queued;
    for (const auto& slot : slots_) {
      const auto& state = results_.at(slot.key);
      if ((!state || !state->ok) && queued.insert(slot.key).second) pending.push_back(slot.key);
    }
    std::vector<Fetched> fetched(pending.size());
    parallel_for(pending.size(), kImageThreadsPerSite, [&](std::size_t i) {
      fetched[i] = fetch_one(parse_url(pending[i]), corpus_dir);
    });
    for (std::size_t i = 0; i < pending.size(); ++i) results_[pending[i]] = std::move(fetched[i]);
  }

  std::vector<ImageRecord> finish(const std::vector<PageRecord>& pages, CrawlTally& tally) {
    tally.skipped_empty += tally_.skipped_empty;
    tally.skipped_data_uri += tally_.skipped_data_uri;
    tally.skipped_unresolvable += tally_.skipped_unresolvable;
    std::vector<ImageRecord> images;
    std::set<Digest> seen;
    for (const auto& slot : slots_) {
      const auto& state = results_.at(slot.key);
      if (!state || !state->ok) {
        ++tally.image_fetch_errors;
        continue;
      }
      if (!seen.insert(state->digest).second) {
        ++tally.duplicate_images;
        continue;
      }
      ImageRecord image;
      image.page = slot.page;
      image.tag = slot.tag;
      image.resolved_url = slot.resolved;
      image.fetched_url = state->fetched_url;
      image.content_digest = state->digest;
      image.mime = state->inspect.mime;
      image.dimensions = state->inspect.dimensions;
      image.parse_error = state->inspect.error;
      image.response_meta = state->meta;
      classify_image(image, pages.at(slot.page), config_.mode);
      images.push_back(std::move(image));
    }
    return images;
  }

 private:
  struct Slot {
    std::size_t page;
    ImgTagRef tag;
    ParsedUrl resolved;
    std::string key;
  };
  struct Fetched {
    bool ok = false;
    ParsedUrl fetched_url;
    HttpResponseMeta meta;
    Digest digest{};
    InspectResult inspect;
  };

  Fetched fetch_one(const ParsedUrl& url, const std::optional<std::filesystem::path>& corpus_dir) const {
    const FetchResult response = fetcher_.fetch(url);
    Fetched out;
    out.fetched_url = response.final_url;
    if (!response.ok()) return out;
    out.ok = true;
    out.meta.status = response.status;
    out.meta.etag_present = response.header("etag").has_value();
    out.meta.set_cookie_present = response.header("set-cookie").has_value();
    out.meta.cache_control = response.joined_header("cache-control");
    out.meta.content_type = response.header("content-type");
    const Bytes bytes = as_bytes(response.body);
    out.digest = content_digest(bytes);
    out.inspect = inspect_image(bytes, out.meta.content_type);
    if (corpus_dir) corpus_io::write_blob(*corpus_dir, out.digest, bytes);
    return out;
  }

  const CrawlConfig& config_;
  const HttpFetcher& fetcher_;
  std::vector<Slot> slots_;
  std::map<std::string, std::optional<Fetched>> results_;
  CrawlTally tally_;
};

void add_tally(CrawlTally& into, const CrawlTally& from) {
  into.skipped_empty += from.skipped_empty;
  into.skipped_data_uri += from.skipped_data_uri;
  into.skipped_unresolvable += from.skipped_unresolvable;
  into.image_fetch_errors += from.image_fetch_errors;
  into.duplicate_images += from.duplicate_images;
  into.robots_blocked += from.robots_blocked;
}

struct SiteResult {
  std::vector<PageRecord> pages;
  std::vector<ImageRecord> images;
  SiteOutcome outcome;
  CrawlTally tally;
};

void append_site(Corpus& corpus, SiteResult&& site) {
  const std::size_t offset = corpus.pages.size();
  for (auto& page : site.pages) corpus.pages.push_back(std::move(page));
  for (auto& image : site.images) {
    image.page += offset;
    corpus.images.push_back(std::move(image));
  }
  corpus.sites.push_back(std::move(site.outcome));
  add_tally(corpus.tally, site.tally);
}

}  // namespace

Crawler::Crawler(CrawlConfig config) : config_(std::move(config)) {
  config_.validate();
  impl_ = std::make_unique<Impl>(config_);
}

Crawler::~Crawler() = default;

FetchResult Crawler::fetch(const ParsedUrl& url) const { return impl_->fetcher.fetch(url); }

SitePages Crawler::crawl_site(const SiteEntry& site, int pass_index) {
  SitePages out;

  auto robots_allow = [&](const ParsedUrl& url) {
    if (!config_.respect_robots) return true;
    const std::string origin = url.scheme + "://" + url.host + ":" + std::to_string(url.port);
    {
      std::lock_guard lock(impl_->robots_mutex);
      if (const auto it = impl_->robots.find(origin); it != impl_->robots.end()) {
        return it->second.allowed(url.request_target());
      }
    }
    ParsedUrl robots_url = url;
    robots_url.path = "/robots.txt";
    robots_url.query.reset();
    const auto response = impl_->fetcher.fetch(robots_url);
    // unreachable or error robots.txt: crawl as if there were none
    const auto rules = response.ok() ? RobotsRules::parse(response.body, config_.user_agent) : RobotsRules::allow_all();
    std::lock_guard lock(impl_->robots_mutex);
    return impl_->robots.try_emplace(origin, rules).first->second.allowed(url.request_target());
  };

  std::set<std::string> visited;
  auto visit = [&](const ParsedUrl& url) -> std::optional<ExtractionResult> {
    if (!robots_allow(url)) {
      out.robots_blocked.push_back(url.serialize());
      return std::nullopt;
    }
    const auto response = impl_->fetcher.fetch(url);
    PageRecord page;
    page.site_domain = site.domain;
    page.category = site.category;
    page.requested_url = url;
    page.final_url = response.final_url;
    page.fetch_status = response.status_record();
    page.pass_index = pass_index;
    visited.insert(response.final_url.serialize());
    std::optional<ExtractionResult> extracted;
    std::string body;
    if (page.fetch_status.ok()) {
      const auto charset = charset_of(response.header("content-type"));
      extracted = extract(response.body, charset ? std::optional<std::string_view>(*charset) : std::nullopt);
      page.image_refs = extracted->img_refs;
      page.body_digest = to_hex(content_digest(as_bytes(response.body)));
      body = response.body;
    }
    out.pages.push_back(std::move(page));
    out.bodies.push_back(std::move(body));
    return extracted;
  };

  ParsedUrl primary;
  try {
    primary = parse_url(config_.scheme + "://" + site.domain + "/");
  } catch (const MalformedUrl& error) {
    PageRecord page;
    page.site_domain = site.domain;
    page.category = site.category;
    page.fetch_status = {FetchStatus::State::error, 0, std::string("bad site domain: ") + error.what()};
    page.pass_index = pass_index;
    out.pages.push_back(std::move(page));
    out.bodies.emplace_back();
    return out;
  }

  visited.insert(primary.serialize());
  std::vector<std::pair<ExtractionResult, ParsedUrl>> level;
  if (auto extracted = visit(primary)) level.emplace_back(std::move(*extracted), out.pages.back().final_url);

  for (int d = 0; d < config_.depth && !level.empty(); ++d) {
    std::vector<ParsedUrl> next_urls;
    for (const auto& [extracted, final_url] : level) {
      for (auto& url : frontier(extracted, final_url, config_.mode)) {
        if (visited.insert(url.serialize()).second) next_urls.push_back(std::move(url));
      }
    }
    std::vector<std::pair<ExtractionResult, ParsedUrl>> next_level;
    for (const auto& url : next_urls) {
      if (auto extracted = visit(url)) next_level.emplace_back(std::move(*extracted), out.pages.back().final_url);
    }
    level = std::move(next_level);
  }
  return out;
}

std::vector<ImageRecord> Crawler::fetch_images(const std::vector<PageRecord>& pages, CrawlTally& tally,
                                               const std::optional<std::filesystem::path>& blob_dir) {
  ImageCollector collector(config_, impl_->fetcher);
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (pages[i].fetch_status.ok()) collector.add_page(i, pages[i]);
  }
  collector.fetch_pending(blob_dir);
  return collector.finish(pages, tally);
}

Corpus Crawler::run(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  struct SiteState {
    std::vector<PageRecord> pages;
    std::map<std::string, std::size_t> by_url;
    std::set<std::string> robots_blocked;
    std::unique_ptr<ImageCollector> images;
    SiteOutcome outcome;
  };
  std::vector<SiteState> states(config_.sites.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i].images = std::make_unique<ImageCollector>(config_, impl_->fetcher);
    states[i].outcome.domain = config_.sites[i].domain;
    states[i].outcome.category = config_.sites[i].category;
  }

  for (int pass = 1; pass <= config_.passes; ++pass) {
    {
      std::lock_guard lock(impl_->robots_mutex);
      impl_->robots.clear();
    }
    parallel_for(states.size(), config_.site_parallelism, [&](std::size_t s) {
      auto& state = states[s];
      SitePages fetched = crawl_site(config_.sites[s], pass);
      state.outcome.pass_results.push_back(fetched.pages.empty() ? "robots" : pass_label(fetched.pages.front().fetch_status));
      state.robots_blocked.insert(fetched.robots_blocked.begin(), fetched.robots_blocked.end());
      for (std::size_t p = 0; p < fetched.pages.size(); ++p) {
        auto& page = fetched.pages[p];
        const std::string key = page.requested_url.serialize();
        const bool ok = page.fetch_status.ok();
        std::size_t index;
        if (const auto it = state.by_url.find(key); it == state.by_url.end()) {
          index = state.pages.size();
          state.by_url.emplace(key, index);
          state.pages.push_back(std::move(page));
        } else if (ok && !state.pages[it->second].fetch_status.ok()) {
          index = it->second;
          state.pages[index] = std::move(page);
        } else {
          continue;
        }
        if (ok) {
          corpus_io::write_blob(out_dir, digest_from_hex(state.pages[index].body_digest), as_bytes(fetched.bodies[p]));
          state.images->add_page(index, state.pages[index]);
        }
      }
      state.images->fetch_pending(out_dir);
    });
  }

  Corpus corpus;
  corpus.domain_mode = std::string(config_.mode.name());
  for (auto& state : states) {
    SiteResult site;
    site.outcome = std::move(state.outcome);
    site.outcome.sampled_ok = std::find(site.outcome.pass_results.begin(), site.outcome.pass_results.end(), "ok") !=
                              site.outcome.pass_results.end();
    site.images = state.images->finish(state.pages, site.tally);
    site.tally.robots_blocked = state.robots_blocked.size();
    site.pages = std::move(state.pages);
    append_site(corpus, std::move(site));
  }
  corpus_io::save(corpus, out_dir);
  return corpus;
}

Corpus Crawler::ingest(const std::filesystem::path& snapshot_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(snapshot_dir)) throw ConfigError("not a directory: " + snapshot_dir.string());
  std::filesystem::create_directories(out_dir);

  std::map<std::string, std::string> categories;
  for (const auto& site : config_.sites) categories[site.domain] = site.category;

  std::vector<std::filesystem::path> site_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(snapshot_dir)) {
    if (entry.is_directory()) site_dirs.push_back(entry.path());
  }
  std::sort(site_dirs.begin(), site_dirs.end());

  std::vector<SiteResult> results(site_dirs.size());
  parallel_for(site_dirs.size(), config_.site_parallelism, [&](std::size_t s) {
    const auto& dir = site_dirs[s];
    const std::string domain = to_lower_ascii(dir.filename().string());
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw ConfigError("missing meta.json in " + dir.string());
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& error) {
      throw ConfigError(dir.string() + "/meta.json: " + error.what());
    }
    if (!meta.is_object()) throw ConfigError(dir.string() + "/meta.json must map page ids to URLs");

    auto& site = results[s];
    site.outcome.domain = domain;
    site.outcome.category = categories.count(domain) ? categories[domain] : "";
    ImageCollector collector(config_, impl_->fetcher);
    for (const auto& [page_id, url_value] : meta.items()) {
      std::ifstream html_in(dir / (page_id + ".html"), std::ios::binary);
      if (!html_in) throw ConfigError("missing snapshot " + (dir / (page_id + ".html")).string());
      const std::string html((std::istreambuf_iterator<char>(html_in)), std::istreambuf_iterator<char>());
      PageRecord page;
      page.site_domain = domain;
      page.category = site.outcome.category;
      try {
        page.requested_url = page.final_url = parse_url(url_value.get<std::string>());
      } catch (const std::exception& error) {
        throw ConfigError(dir.string() + "/meta.json: page " + page_id + ": " + error.what());
      }
      page.image_refs = extract(html).img_refs;
      const Digest digest = content_digest(as_bytes(html));
      page.body_digest = to_hex(digest);
      corpus_io::write_blob(out_dir, digest, as_bytes(html));
      collector.add_page(site.pages.size(), page);
      site.pages.push_back(std::move(page));
    }
    for (int pass = 1; pass <= config_.passes; ++pass) collector.fetch_pending(out_dir);
    site.outcome.sampled_ok = !site.pages.empty();
    site.outcome.pass_results = {"ingested"};
    site.images = collector.finish(site.pages, site.tally);
  });

  Corpus corpus;
  corpus.domain_mode = std::string(config_.mode.name());
  for (auto& site : results) append_site(corpus, std::move(site));
  corpus_io::save(corpus, out_dir);
  return corpus;
}

}  // namespace beaconscan
