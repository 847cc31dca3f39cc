#include "beaconscan/features.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

namespace beaconscan {

MimeClass mime_class(const MimeType& mime) {
  switch (mime.kind) {
    case MimeType::Kind::gif:
      return MimeClass::gif;
    case MimeType::Kind::jpeg:
      return MimeClass::jpeg;
    case MimeType::Kind::png:
      return MimeClass::png;
    case MimeType::Kind::svg:
      return MimeClass::svg;
    default:
      return MimeClass::other;
  }
}

std::vector<double> FeatureVector::to_row() const {
  std::vector<double> row = {double(qurl), double(qdom), double(unum), double(corg), double(blck),
                             double(aalt), double(asty), double(etag), double(cook), double(noch),
                             double(mage)};
  for (bool m : mime) row.push_back(m ? 1.0 : 0.0);
  for (bool d : dtop) row.push_back(d ? 1.0 : 0.0);
  return row;
}

const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> columns = {
      "qurl",     "qdom",      "unum",     "corg",     "blck",       "aalt",   "asty",
      "etag",     "cook",      "noch",     "mage",     "mime_gif",   "mime_jpeg", "mime_png",
      "mime_svg", "mime_other", "dtop_1",  "dtop_2",   "dtop_3",     "dtop_4", "dtop_5"};
  return columns;
}

bool qurl(const ParsedUrl& url) { return url.query.has_value() && !url.query->empty(); }

bool qdom(const ParsedUrl& url, const std::set<std::string>& referencing, bool percent_decode_query) {
  if (!qurl(url)) return false;
  const std::string query = to_lower_ascii(percent_decode_query ? percent_decode(*url.query) : *url.query);
  return std::any_of(referencing.begin(), referencing.end(), [&](const std::string& domain) {
    return !domain.empty() && query.find(to_lower_ascii(domain)) != std::string::npos;
  });
}

std::int64_t unum(const ParsedUrl& url, DigitCount mode) {
  const std::string text = url.serialize();
  std::int64_t count = 0;
  bool in_run = false;
  for (char c : text) {
    const bool digit = c >= '0' && c <= '9';
    if (digit && (mode == DigitCount::characters || !in_run)) ++count;
    in_run = digit;
  }
  return count;
}

namespace {

// Delta-seconds per HTTP caching rules: digits only, saturating at 2^31.
std::optional<std::int64_t> parse_delta_seconds(std::string_view value) {
  value = trim_ascii(value);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  constexpr std::int64_t kSaturation = 2147483648LL;
  std::int64_t seconds = 0;
  for (char c : value) {
    seconds = seconds * 10 + (c - '0');
    if (seconds >= kSaturation) return kSaturation;
  }
  return seconds;
}

}  // namespace

HeaderFeatures header_features(const HttpResponseMeta& meta) {
  HeaderFeatures features;
  features.etag = meta.etag_present;
  features.cook = meta.set_cookie_present;
  if (!meta.cache_control) return features;

  bool seen_max_age = false;
  std::string_view rest = *meta.cache_control;
  while (true) {
    const auto comma = rest.find(',');
    const auto directive = trim_ascii(rest.substr(0, comma));
    const auto equals = directive.find('=');
    const std::string name = to_lower_ascii(trim_ascii(directive.substr(0, equals)));
    if (name == "no-cache" || name == "no-store" || name == "must-revalidate") features.noch = true;
    if (name == "max-age" && !seen_max_age) {
      seen_max_age = true;
      if (equals != std::string_view::npos) {
        features.mage = parse_delta_seconds(directive.substr(equals + 1)).value_or(-1);
      }
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return features;
}

TopDomains top_referenced_domains(const Corpus& corpus, std::size_t k, TopScope scope, const DomainMode& mode) {
  std::map<std::string, std::size_t> counts;
  for (const auto& image : corpus.images) {
    const bool in_scope = scope == TopScope::all_images ? image.qualified() : image.is_beacon();
    if (in_scope) ++counts[second_level_domain(image.resolved_url.host, mode)];
  }
  if (counts.size() < k) {
    throw CorpusTooSmall("only " + std::to_string(counts.size()) + " distinct referenced domains, need " +
                         std::to_string(k));
  }
  TopDomains top;
  for (const auto& [domain, count] : counts) top.entries.push_back({domain, count});
  std::stable_sort(top.entries.begin(), top.entries.end(),
                   [](const TopDomains::Entry& a, const TopDomains::Entry& b) { return a.count > b.count; });
  top.entries.resize(k);
  return top;
}

FeatureVector featurize(const ImageRecord& image, const PageRecord& page, const FilterSet& filters,
                        const TopDomains& top, const std::set<std::string>& referencing,
                        const DomainMode& mode, const FeatureOptions& options) {
  FeatureVector v;
  const auto& url = image.resolved_url;
  v.qurl = qurl(url);
  v.qdom = qdom(url, referencing, options.qdom_percent_decode);
  v.unum = unum(url, options.digit_count);
  v.corg = image.is_cross_origin;
  v.blck = blck_feature(filters, image, page, mode);
  v.aalt = image.tag.alt_present;
  v.asty = image.tag.style_value.has_value();
  const auto headers = header_features(image.response_meta);
  v.etag = headers.etag;
  v.cook = headers.cook;
  v.noch = headers.noch;
  v.mage = headers.mage;
  v.mime[static_cast<std::size_t>(mime_class(image.mime))] = true;
  const std::string sld = second_level_domain(url.host, mode);
  for (std::size_t i = 0; i < top.entries.size() && i < v.dtop.size(); ++i) {
    v.dtop[i] = top.entries[i].domain == sld;
  }
  v.label = image.is_invisible && image.is_cross_domain;
  return v;
}

FeatureMatrix featurize_corpus(const Corpus& corpus, const FilterSet& filters, const DomainMode& mode,
                               const FeatureOptions& options) {
  FeatureMatrix matrix;
  matrix.filter_digest = filters.source_digest();
  matrix.domain_mode = std::string(mode.name());

  std::set<std::string> referencing;
  for (const auto& page : corpus.pages) {
    if (!page.fetch_status.ok()) continue;
    referencing.insert(options.qdom_full_hosts ? page.final_url.host : second_level_domain(page.site_domain, mode));
  }

  std::size_t available = 0;
  {
    std::set<std::string> distinct;
    for (const auto& image : corpus.images) {
      if (image.is_beacon()) distinct.insert(second_level_domain(image.resolved_url.host, mode));
    }
    available = distinct.size();
  }
  matrix.top = top_referenced_domains(corpus, std::min<std::size_t>(5, available), TopScope::cross_domain_1x1, mode);

  for (const auto& image : corpus.images) {
    if (!image.qualified()) continue;
    matrix.vectors.push_back(
        featurize(image, corpus.page_of(image), filters, matrix.top, referencing, mode, options));
  }
  return matrix;
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& vectors) {
  const auto& columns = feature_columns();
  for (std::size_t i = 0; i < columns.size(); ++i) out << columns[i] << ',';
  out << "label\n";
  for (const auto& v : vectors) {
    out << v.qurl << ',' << v.qdom << ',' << v.unum << ',' << v.corg << ',' << v.blck << ',' << v.aalt << ','
        << v.asty << ',' << v.etag << ',' << v.cook << ',' << v.noch << ',' << v.mage;
    for (bool m : v.mime) out << ',' << m;
    for (bool d : v.dtop) out << ',' << d;
    out << ',' << v.label << '\n';
  }
}

void write_feature_manifest(const std::filesystem::path& file, const FeatureMatrix& matrix) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& entry : matrix.top.entries) top.push_back({{"domain", entry.domain}, {"count", entry.count}});
  const auto positives = std::count_if(matrix.vectors.begin(), matrix.vectors.end(),
                                       [](const FeatureVector& v) { return v.label; });
  const nlohmann::json manifest = {{"columns", feature_columns()},
                                   {"top_domains", top},
                                   {"filter_digest", matrix.filter_digest},
                                   {"corpus_digest", matrix.corpus_digest},
                                   {"domain_mode", matrix.domain_mode},
                                   {"rows", matrix.vectors.size()},
                                   {"positives", positives}};
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace beaconscan
