#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "beaconscan/corpus.hpp"
#include "beaconscan/domain.hpp"
#include "beaconscan/url.hpp"

namespace beaconscan {

struct PatternToken {
  enum class Kind { literal, wildcard, separator };
  Kind kind = Kind::literal;
  std::string text;  // literal only
  bool operator==(const PatternToken&) const = default;
};

struct FilterOptions {
  std::optional<bool> third_party;
  /// nullopt: the rule's type options do not mention images and do not
  /// exclude them. true: `image` listed. false: images excluded, either by
  /// `~image` or by a positive type list without `image`.
  std::optional<bool> image_type;
  std::vector<std::string> include_domains;
  std::vector<std::string> exclude_domains;
  bool operator==(const FilterOptions&) const = default;
};

/// One Adblock Plus network rule.
struct FilterRule {
  enum class Anchor { none, start, domain };

  std::string text;  // the source line
  bool is_exception = false;
  Anchor start_anchor = Anchor::none;
  bool end_anchor = false;
  std::vector<PatternToken> tokens;
  FilterOptions options;
};

struct Skipped {
  enum class Reason { empty, comment, header, element_hiding, regex_rule, unsupported_option, malformed };
  Reason reason;
  std::string detail;
};

std::string_view to_string(Skipped::Reason reason);

/// Compiles a single filter-list line; unsupported lines come back as Skipped.
std::variant<FilterRule, Skipped> parse_rule(std::string_view line);

enum class ResourceType { image };

struct MatchContext {
  ParsedUrl request_url;
  std::string page_sld;
  std::string page_host;  // optional; `domain=` options fall back to page_sld when empty
  bool is_third_party = false;
  ResourceType resource_type = ResourceType::image;
};

enum class Decision { blocked, allowlisted, no_match };

std::string_view to_string(Decision decision);

struct MatchOptions {
  /// Compare paths case-insensitively too (hosts are always case-insensitive).
  bool strict_lowercase = false;
};

/// Pattern-only test of a rule against a URL, ignoring options.
bool pattern_matches(const FilterRule& rule, std::string_view url, std::size_t host_begin,
                     std::size_t host_end, const MatchOptions& options = {});

/// Option gate: third-party, resource type and domain restrictions.
bool options_allow(const FilterRule& rule, const MatchContext& context);

/// Compiled, immutable collection of blocking and exception rules.
class FilterSet {
 public:
  FilterSet() = default;
  explicit FilterSet(MatchOptions options) : match_options_(options) {}

  static FilterSet compile(std::string_view list_text, MatchOptions options = {});
  /// Throws std::runtime_error when the file cannot be read.
  static FilterSet load(const std::filesystem::path& file, MatchOptions options = {});

  void add_line(std::string_view line);

  const std::vector<FilterRule>& blocking() const { return blocking_; }
  const std::vector<FilterRule>& exceptions() const { return exceptions_; }
  std::size_t skipped() const { return skipped_; }
  const std::unordered_map<Skipped::Reason, std::size_t>& skipped_by_reason() const { return skipped_by_reason_; }
  /// SHA-256 of the source text, empty for sets built line by line.
  const std::string& source_digest() const { return source_digest_; }

  Decision matches(const MatchContext& context) const;

 private:
  struct Index {
    std::unordered_map<std::string, std::vector<std::size_t>> by_keyword;
    std::vector<std::size_t> unkeyed;
  };

  void add_rule(FilterRule rule);
  bool any_match(const std::vector<FilterRule>& rules, const Index& index, const MatchContext& context,
                 const std::string& url, std::size_t host_begin, std::size_t host_end,
                 const std::vector<std::string>& url_tokens) const;

  MatchOptions match_options_;
  std::vector<FilterRule> blocking_;
  std::vector<FilterRule> exceptions_;
  Index blocking_index_;
  Index exception_index_;
  std::size_t skipped_ = 0;
  std::unordered_map<Skipped::Reason, std::size_t> skipped_by_reason_;
  std::string source_digest_;
};

/// Lowercase literal runs of a rule that must appear as whole URL tokens for
/// the rule to match; any one of them can key the rule in an index.
std::vector<std::string> keyword_candidates(const FilterRule& rule);

/// BLCK: the image URL is blocked (not merely matched) for an image request
/// with third-party status decided by the cross-domain rule.
bool blck_feature(const FilterSet& filters, const ImageRecord& image, const PageRecord& page,
                  const DomainMode& mode);

}  // namespace beaconscan
