#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>

#include "beaconscan/url.hpp"

namespace beaconscan {

/// Public-suffix rules in the standard `public_suffix_list.dat` format:
/// plain rules, `*.` wildcard rules and `!` exception rules.
class SuffixTable {
 public:
  static SuffixTable parse(std::string_view text);
  static SuffixTable load(const std::filesystem::path& file);

  /// Number of trailing labels of `host` that form its public suffix. Hosts
  /// matching no rule fall back to the implicit `*` rule (one label).
  std::size_t suffix_label_count(std::string_view host) const;

  std::size_t rule_count() const { return plain_.size() + wildcard_.size() + exception_.size(); }

 private:
  std::unordered_set<std::string> plain_;
  std::unordered_set<std::string> wildcard_;   // stored without the leading "*."
  std::unordered_set<std::string> exception_;  // stored without the leading "!"
};

/// How hosts are reduced to the domain used for cross-domain comparisons.
class DomainMode {
 public:
  /// Last two DNS labels.
  static DomainMode naive() { return DomainMode(nullptr); }
  /// Registrable domain: public suffix plus one label.
  static DomainMode suffix_list(std::shared_ptr<const SuffixTable> table) {
    return DomainMode(std::move(table));
  }

  bool is_naive() const { return table_ == nullptr; }
  const SuffixTable* table() const { return table_.get(); }
  std::string_view name() const { return is_naive() ? "naive" : "psl"; }

 private:
  explicit DomainMode(std::shared_ptr<const SuffixTable> table) : table_(std::move(table)) {}
  std::shared_ptr<const SuffixTable> table_;
};

/// Reduces a host to its second-level (or registrable) domain. Single-label
/// hosts and IP literals come back unchanged.
std::string second_level_domain(std::string_view host, const DomainMode& mode);

/// Second-level domains differ between the visited page and the image.
bool is_cross_domain(const ParsedUrl& page_final, const ParsedUrl& image, const DomainMode& mode);

/// (scheme, host, port) tuples differ.
bool is_cross_origin(const ParsedUrl& page_final, const ParsedUrl& image);

}  // namespace beaconscan
