#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beaconscan/domain.hpp"
#include "beaconscan/image_inspect.hpp"
#include "beaconscan/url.hpp"

namespace beaconscan {

class CorruptCorpus : public std::runtime_error {
 public:
  explicit CorruptCorpus(const std::string& what) : std::runtime_error(what) {}
};

struct FetchStatus {
  enum class State { ok, timeout, error };
  State state = State::ok;
  int code = 0;  // HTTP status for error(code); 0 for transport failures
  std::string detail;

  bool ok() const { return state == State::ok; }
  static FetchStatus success() { return {}; }
  bool operator==(const FetchStatus&) const = default;
};

struct ImgTagRef {
  std::string src;  // verbatim attribute value, before resolution
  bool alt_present = false;
  std::optional<std::string> style_value;
  bool operator==(const ImgTagRef&) const = default;
};

struct PageRecord {
  std::string site_domain;
  std::string category;
  ParsedUrl requested_url;
  ParsedUrl final_url;
  FetchStatus fetch_status;
  std::vector<ImgTagRef> image_refs;  // empty unless fetch_status is ok
  int pass_index = 1;
  std::string body_digest;  // hex digest of the HTML under blobs/, empty when absent
};

struct HttpResponseMeta {
  int status = 0;
  bool etag_present = false;
  bool set_cookie_present = false;
  std::optional<std::string> cache_control;
  std::optional<std::string> content_type;
  bool operator==(const HttpResponseMeta&) const = default;
};

struct ImageRecord {
  std::size_t page = 0;  // index into Corpus::pages
  ImgTagRef tag;
  ParsedUrl resolved_url;  // the src attribute resolved against the page's final URL
  ParsedUrl fetched_url;   // after redirects
  Digest content_digest{};
  MimeType mime;
  std::optional<Dimensions> dimensions;
  std::optional<ImageParseError::Kind> parse_error;
  HttpResponseMeta response_meta;
  bool is_invisible = false;
  bool is_cross_domain = false;
  bool is_cross_origin = false;

  bool qualified() const { return !parse_error.has_value(); }
  /// Invisible and cross-domain: the positive class of the classifier.
  bool is_beacon() const { return qualified() && is_invisible && is_cross_domain; }
};

struct SiteOutcome {
  std::string domain;
  std::string category;
  bool sampled_ok = false;
  std::vector<std::string> pass_results;  // "ok", "timeout", "error:503", ...
};

/// Counters for references that never became image records.
struct CrawlTally {
  std::size_t skipped_empty = 0;
  std::size_t skipped_data_uri = 0;
  std::size_t skipped_unresolvable = 0;
  std::size_t image_fetch_errors = 0;
  std::size_t duplicate_images = 0;
  std::size_t robots_blocked = 0;
};

struct Corpus {
  std::vector<PageRecord> pages;
  std::vector<ImageRecord> images;
  std::vector<SiteOutcome> sites;
  CrawlTally tally;
  std::string domain_mode = "naive";

  const PageRecord& page_of(const ImageRecord& image) const { return pages.at(image.page); }

  /// Recomputes the cross-domain and cross-origin flags of every image.
  void reclassify(const DomainMode& mode);

  /// Number of sites with at least one successfully fetched page.
  std::size_t sites_sampled_ok() const;
};

/// Sets invisibility and cross flags from the inspected content and URLs.
void classify_image(ImageRecord& image, const PageRecord& page, const DomainMode& mode);

/// On-disk layout: pages.jsonl, images.jsonl, sites.json, blobs/<hex-digest>.
namespace corpus_io {

inline constexpr const char* kPagesFile = "pages.jsonl";
inline constexpr const char* kImagesFile = "images.jsonl";
inline constexpr const char* kSitesFile = "sites.json";
inline constexpr const char* kBlobDir = "blobs";

/// Stores `bytes` under blobs/<hex digest>; existing blobs are left alone.
void write_blob(const std::filesystem::path& dir, const Digest& digest, Bytes bytes);
std::string read_blob(const std::filesystem::path& dir, std::string_view hex_digest);

/// Writes the three metadata files via temporary names and renames.
void save(const Corpus& corpus, const std::filesystem::path& dir);
/// Throws CorruptCorpus on malformed records or broken invariants.
Corpus load(const std::filesystem::path& dir);

/// SHA-256 over the metadata files, for experiment manifests.
std::string digest_of(const std::filesystem::path& dir);

}  // namespace corpus_io

}  // namespace beaconscan
