#include "beaconscan/domain.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

namespace beaconscan {

namespace {

std::vector<std::string_view> split_labels(std::string_view host) {
  std::vector<std::string_view> labels;
  std::size_t pos = 0;
  while (true) {
    const auto dot = host.find('.', pos);
    if (dot == std::string_view::npos) {
      labels.push_back(host.substr(pos));
      break;
    }
    labels.push_back(host.substr(pos, dot - pos));
    pos = dot + 1;
  }
  return labels;
}

std::string join_tail(const std::vector<std::string_view>& labels, std::size_t count) {
  std::string out;
  for (std::size_t i = labels.size() - count; i < labels.size(); ++i) {
    if (!out.empty()) out.push_back('.');
    out.append(labels[i]);
  }
  return out;
}

std::string_view strip_trailing_dot(std::string_view host) {
  if (host.size() > 1 && host.back() == '.') host.remove_suffix(1);
  return host;
}

}  // namespace

SuffixTable SuffixTable::parse(std::string_view text) {
  SuffixTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    // a rule is the first whitespace-delimited token of the line
    auto view = trim_ascii(line);
    if (view.empty() || view.substr(0, 2) == "//") continue;
    view = view.substr(0, std::min(view.find_first_of(" \t"), view.size()));
    auto rule = to_lower_ascii(view);
    if (rule.front() == '!') {
      table.exception_.insert(rule.substr(1));
    } else if (rule.rfind("*.", 0) == 0) {
      table.wildcard_.insert(rule.substr(2));
    } else {
      table.plain_.insert(std::move(rule));
    }
  }
  return table;
}

SuffixTable SuffixTable::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open public suffix table: " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::size_t SuffixTable::suffix_label_count(std::string_view host) const {
  const std::string lowered = to_lower_ascii(strip_trailing_dot(host));
  const auto labels = split_labels(lowered);
  const std::size_t n = labels.size();
  std::size_t best = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = n - i;
    const std::string candidate = join_tail(labels, count);
    if (exception_.contains(candidate)) return count - 1;
    if (count > best && plain_.contains(candidate)) best = count;
    if (count > best && count >= 2 && wildcard_.contains(join_tail(labels, count - 1))) best = count;
  }
  return best;
}

std::string second_level_domain(std::string_view host, const DomainMode& mode) {
  const auto trimmed = strip_trailing_dot(host);
  const std::string lowered = to_lower_ascii(trimmed);
  if (is_ip_literal(lowered)) return lowered;
  const auto labels = split_labels(lowered);
  if (labels.size() <= 1) return lowered;
  if (mode.is_naive()) return join_tail(labels, 2);
  const std::size_t suffix = mode.table()->suffix_label_count(lowered);
  if (suffix >= labels.size()) return lowered;
  return join_tail(labels, suffix + 1);
}

bool is_cross_domain(const ParsedUrl& page_final, const ParsedUrl& image, const DomainMode& mode) {
  return second_level_domain(page_final.host, mode) != second_level_domain(image.host, mode);
}

bool is_cross_origin(const ParsedUrl& page_final, const ParsedUrl& image) {
  return page_final.scheme != image.scheme || page_final.host != image.host ||
         page_final.port != image.port;
}

}  // namespace beaconscan
