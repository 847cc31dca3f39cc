#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "beaconscan/corpus.hpp"
#include "beaconscan/domain.hpp"
#include "beaconscan/filter_engine.hpp"
#include "beaconscan/url.hpp"

namespace beaconscan {

class CorpusTooSmall : public std::runtime_error {
 public:
  explicit CorpusTooSmall(const std::string& what) : std::runtime_error(what) {}
};

/// MIME classes used for the dummy columns; webp falls into `other`.
enum class MimeClass { gif, jpeg, png, svg, other };
MimeClass mime_class(const MimeType& mime);

struct FeatureVector {
  bool qurl = false;
  bool qdom = false;
  std::int64_t unum = 0;
  bool corg = false;
  bool blck = false;
  bool aalt = false;
  bool asty = false;
  bool etag = false;
  bool cook = false;
  bool noch = false;
  std::int64_t mage = -1;
  std::array<bool, 5> mime{};  // gif, jpeg, png, svg, other
  std::array<bool, 5> dtop{};  // top-1 .. top-5 referenced domains
  bool label = false;

  /// Numeric row in feature_columns() order, label excluded.
  std::vector<double> to_row() const;
};

/// qurl, qdom, unum, corg, blck, aalt, asty, etag, cook, noch, mage,
/// mime_gif .. mime_other, dtop_1 .. dtop_5 (21 columns).
const std::vector<std::string>& feature_columns();

struct TopDomains {
  struct Entry {
    std::string domain;
    std::size_t count = 0;
  };
  std::vector<Entry> entries;  // descending count, ties lexicographic
};

enum class TopScope { cross_domain_1x1, all_images };

enum class DigitCount { characters, tokens };

struct FeatureOptions {
  DigitCount digit_count = DigitCount::characters;
  bool qdom_percent_decode = true;
  /// Match full referencing hostnames in queries instead of their SLDs.
  bool qdom_full_hosts = false;
};

bool qurl(const ParsedUrl& url);
bool qdom(const ParsedUrl& url, const std::set<std::string>& referencing, bool percent_decode = true);
std::int64_t unum(const ParsedUrl& url, DigitCount mode = DigitCount::characters);

struct HeaderFeatures {
  bool etag = false;
  bool cook = false;
  bool noch = false;
  std::int64_t mage = -1;
  bool operator==(const HeaderFeatures&) const = default;
};

HeaderFeatures header_features(const HttpResponseMeta& meta);

/// Ranks the SLDs of image URLs in scope by record count. Throws
/// CorpusTooSmall when fewer than k distinct SLDs are in scope.
TopDomains top_referenced_domains(const Corpus& corpus, std::size_t k, TopScope scope, const DomainMode& mode);

FeatureVector featurize(const ImageRecord& image, const PageRecord& page, const FilterSet& filters,
                        const TopDomains& top, const std::set<std::string>& referencing,
                        const DomainMode& mode, const FeatureOptions& options = {});

struct FeatureMatrix {
  std::vector<FeatureVector> vectors;
  TopDomains top;
  std::string filter_digest;
  std::string corpus_digest;
  std::string domain_mode;
};

/// Featurizes every qualified image. Top domains use k = min(5, available)
/// and leave the remaining dummy columns at zero.
FeatureMatrix featurize_corpus(const Corpus& corpus, const FilterSet& filters, const DomainMode& mode,
                               const FeatureOptions& options = {});

/// Header row then one 0/1/integer row per vector.
void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& vectors);

/// Manifest written next to the feature CSV (`<csv>.manifest.json`).
void write_feature_manifest(const std::filesystem::path& file, const FeatureMatrix& matrix);

}  // namespace beaconscan
