#include "beaconscan/filter_engine.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace beaconscan {

namespace {

using Reason = Skipped::Reason;

const std::unordered_set<std::string_view>& content_types() {
  static const std::unordered_set<std::string_view> types = {
      "image",     "script",      "stylesheet", "object", "object-subrequest", "xmlhttprequest",
      "subdocument", "document",  "font",       "media",  "other",             "websocket",
      "ping",      "webrtc"};
  return types;
}

bool contains_element_hiding(std::string_view line) {
  for (std::string_view marker : {"##", "#@#", "#?#", "#$#", "#@?#", "#@$#"}) {
    if (line.find(marker) != std::string_view::npos) return true;
  }
  return false;
}

std::vector<std::string_view> split(std::string_view text, char delimiter) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(delimiter, pos);
    parts.push_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

std::optional<Skipped> parse_options(std::string_view text, FilterOptions& options) {
  std::unordered_set<std::string> positive;
  std::unordered_set<std::string> negative;
  for (auto raw : split(text, ',')) {
    const std::string option = to_lower_ascii(trim_ascii(raw));
    if (option.empty()) return Skipped{Reason::malformed, "empty option"};
    const bool negated = option.front() == '~';
    const std::string name = negated ? option.substr(1) : option;

    if (name == "third-party" || name == "3p") {
      options.third_party = !negated;
    } else if (name == "first-party" || name == "1p") {
      options.third_party = negated;
    } else if (name.rfind("domain=", 0) == 0) {
      if (negated) return Skipped{Reason::unsupported_option, option};
      for (auto domain : split(std::string_view(name).substr(7), '|')) {
        domain = trim_ascii(domain);
        const bool excluded = !domain.empty() && domain.front() == '~';
        if (excluded) domain.remove_prefix(1);
        if (domain.empty()) return Skipped{Reason::malformed, "empty domain in " + option};
        (excluded ? options.exclude_domains : options.include_domains).emplace_back(domain);
      }
    } else if (content_types().contains(name)) {
      (negated ? negative : positive).insert(name);
    } else {
      // popup, match-case, csp, redirect, rewrite, important, elemhide, ...
      return Skipped{Reason::unsupported_option, option};
    }
  }

  for (const auto& domain : options.include_domains) {
    if (std::find(options.exclude_domains.begin(), options.exclude_domains.end(), domain) !=
        options.exclude_domains.end()) {
      return Skipped{Reason::malformed, "domain both included and excluded: " + domain};
    }
  }

  if (!positive.empty()) {
    options.image_type = positive.contains("image");
  } else if (negative.contains("image")) {
    options.image_type = false;
  }
  return std::nullopt;
}

bool is_separator(char c) {
  const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  return !(word || c == '-' || c == '.' || c == '%');
}

char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

class PatternMatcher {
 public:
  PatternMatcher(const FilterRule& rule, std::string_view url, std::size_t host_end, bool fold_everything)
      : rule_(rule), url_(url), host_end_(host_end), fold_everything_(fold_everything) {
    const bool has_wildcard = std::any_of(rule.tokens.begin(), rule.tokens.end(), [](const PatternToken& t) {
      return t.kind == PatternToken::Kind::wildcard;
    });
    if (has_wildcard) failed_.assign((rule.tokens.size() + 1) * (url.size() + 1), 0);
  }

  bool match_from(std::size_t token, std::size_t pos) {
    if (token == rule_.tokens.size()) return !rule_.end_anchor || pos == url_.size();
    const std::size_t key = token * (url_.size() + 1) + pos;
    if (!failed_.empty() && failed_[key]) return false;
    const bool result = step(token, pos);
    if (!result && !failed_.empty()) failed_[key] = 1;
    return result;
  }

 private:
  bool step(std::size_t token, std::size_t pos) {
    const auto& t = rule_.tokens[token];
    switch (t.kind) {
      case PatternToken::Kind::literal: {
        if (pos + t.text.size() > url_.size()) return false;
        for (std::size_t k = 0; k < t.text.size(); ++k) {
          const char u = url_[pos + k];
          const char p = t.text[k];
          if (u == p) continue;
          const bool insensitive = fold_everything_ || pos + k < host_end_;
          if (!(insensitive && fold(u) == fold(p))) return false;
        }
        return match_from(token + 1, pos + t.text.size());
      }
      case PatternToken::Kind::separator:
        if (pos == url_.size()) return match_from(token + 1, pos);
        return is_separator(url_[pos]) && match_from(token + 1, pos + 1);
      case PatternToken::Kind::wildcard:
        for (std::size_t p = pos; p <= url_.size(); ++p) {
          if (match_from(token + 1, p)) return true;
        }
        return false;
    }
    return false;
  }

  const FilterRule& rule_;
  std::string_view url_;
  std::size_t host_end_;
  bool fold_everything_;
  std::vector<std::uint8_t> failed_;
};

bool domain_matches(std::string_view page, std::string_view domain) {
  if (page == domain) return true;
  return page.size() > domain.size() && page.substr(page.size() - domain.size()) == domain &&
         page[page.size() - domain.size() - 1] == '.';
}

std::string pattern_text(const FilterRule& rule) {
  std::string text;
  if (rule.start_anchor == FilterRule::Anchor::domain) text = "||";
  if (rule.start_anchor == FilterRule::Anchor::start) text = "|";
  for (const auto& token : rule.tokens) {
    switch (token.kind) {
      case PatternToken::Kind::literal:
        text += token.text;
        break;
      case PatternToken::Kind::wildcard:
        text += '*';
        break;
      case PatternToken::Kind::separator:
        text += '^';
        break;
    }
  }
  if (rule.end_anchor) text += '|';
  return text;
}

bool is_keyword_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '%'; }

std::vector<std::string> url_tokens(std::string_view url) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : url) {
    c = fold(c);
    if (is_keyword_char(c)) {
      current.push_back(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace

std::string_view to_string(Skipped::Reason reason) {
  switch (reason) {
    case Reason::empty:
      return "empty";
    case Reason::comment:
      return "comment";
    case Reason::header:
      return "header";
    case Reason::element_hiding:
      return "element_hiding";
    case Reason::regex_rule:
      return "regex_rule";
    case Reason::unsupported_option:
      return "unsupported_option";
    case Reason::malformed:
      return "malformed";
  }
  return "unknown";
}

std::string_view to_string(Decision decision) {
  switch (decision) {
    case Decision::blocked:
      return "blocked";
    case Decision::allowlisted:
      return "allowlisted";
    case Decision::no_match:
      return "no_match";
  }
  return "no_match";
}

std::variant<FilterRule, Skipped> parse_rule(std::string_view line) {
  const auto text = trim_ascii(line);
  if (text.empty()) return Skipped{Reason::empty, {}};
  if (text.front() == '!') return Skipped{Reason::comment, {}};
  if (text.front() == '[') return Skipped{Reason::header, std::string(text)};
  if (contains_element_hiding(text)) return Skipped{Reason::element_hiding, {}};

  FilterRule rule;
  rule.text = std::string(text);
  std::string_view body = text;
  if (body.substr(0, 2) == "@@") {
    rule.is_exception = true;
    body.remove_prefix(2);
  }

  std::string_view pattern = body;
  // a '$' inside a bare regex literal belongs to the expression
  const bool bare_regex = body.size() >= 2 && body.front() == '/' && body.back() == '/';
  if (const auto dollar = body.rfind('$');
      dollar != std::string_view::npos && dollar + 1 < body.size() && !bare_regex) {
    pattern = body.substr(0, dollar);
    if (auto skipped = parse_options(body.substr(dollar + 1), rule.options)) return *skipped;
  }

  if (pattern.size() >= 2 && pattern.front() == '/' && pattern.back() == '/') {
    return Skipped{Reason::regex_rule, std::string(pattern)};
  }

  if (pattern.substr(0, 2) == "||") {
    rule.start_anchor = FilterRule::Anchor::domain;
    pattern.remove_prefix(2);
    if (pattern.empty()) return Skipped{Reason::malformed, "empty domain-anchored pattern"};
  } else if (pattern.substr(0, 1) == "|") {
    rule.start_anchor = FilterRule::Anchor::start;
    pattern.remove_prefix(1);
  }
  if (!pattern.empty() && pattern.back() == '|') {
    rule.end_anchor = true;
    pattern.remove_suffix(1);
  }

  for (char c : pattern) {
    if (c == '*') {
      if (rule.tokens.empty() || rule.tokens.back().kind != PatternToken::Kind::wildcard) {
        rule.tokens.push_back({PatternToken::Kind::wildcard, {}});
      }
    } else if (c == '^') {
      rule.tokens.push_back({PatternToken::Kind::separator, {}});
    } else {
      if (rule.tokens.empty() || rule.tokens.back().kind != PatternToken::Kind::literal) {
        rule.tokens.push_back({PatternToken::Kind::literal, {}});
      }
      rule.tokens.back().text.push_back(c);
    }
  }
  return rule;
}

bool pattern_matches(const FilterRule& rule, std::string_view url, std::size_t host_begin,
                     std::size_t host_end, const MatchOptions& options) {
  PatternMatcher matcher(rule, url, host_end, options.strict_lowercase);
  switch (rule.start_anchor) {
    case FilterRule::Anchor::start:
      return matcher.match_from(0, 0);
    case FilterRule::Anchor::domain:
      if (matcher.match_from(0, host_begin)) return true;
      for (std::size_t k = host_begin; k < host_end; ++k) {
        if (url[k] == '.' && matcher.match_from(0, k + 1)) return true;
      }
      return false;
    case FilterRule::Anchor::none:
      for (std::size_t start = 0; start <= url.size(); ++start) {
        if (matcher.match_from(0, start)) return true;
      }
      return false;
  }
  return false;
}

bool options_allow(const FilterRule& rule, const MatchContext& context) {
  const auto& options = rule.options;
  if (options.third_party && *options.third_party != context.is_third_party) return false;
  if (options.image_type && !*options.image_type) return false;
  const std::string page = to_lower_ascii(context.page_host.empty() ? context.page_sld : context.page_host);
  if (!options.include_domains.empty()) {
    const bool included = std::any_of(options.include_domains.begin(), options.include_domains.end(),
                                      [&](const std::string& d) { return domain_matches(page, d); });
    if (!included) return false;
  }
  return std::none_of(options.exclude_domains.begin(), options.exclude_domains.end(),
                      [&](const std::string& d) { return domain_matches(page, d); });
}

std::vector<std::string> keyword_candidates(const FilterRule& rule) {
  // A keyword is a run of [a-z0-9%]{3,} bounded on both sides by a character
  // that is neither a keyword character nor '*'.
  const std::string text = to_lower_ascii(pattern_text(rule));
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_keyword_char(text[i])) {
      const std::size_t start = i;
      while (i < text.size() && is_keyword_char(text[i])) ++i;
      const bool bounded_left = start > 0 && text[start - 1] != '*';
      const bool bounded_right = i < text.size() && text[i] != '*';
      if (bounded_left && bounded_right && i - start >= 3) out.push_back(text.substr(start, i - start));
    } else {
      ++i;
    }
  }
  return out;
}

FilterSet FilterSet::compile(std::string_view list_text, MatchOptions options) {
  FilterSet set(options);
  std::istringstream in{std::string(list_text)};
  std::string line;
  while (std::getline(in, line)) set.add_line(line);
  set.source_digest_ = to_hex(content_digest(as_bytes(list_text)));
  return set;
}

FilterSet FilterSet::load(const std::filesystem::path& file, MatchOptions options) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read filter list: " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return compile(buffer.str(), options);
}

void FilterSet::add_line(std::string_view line) {
  auto parsed = parse_rule(line);
  if (auto* skipped = std::get_if<Skipped>(&parsed)) {
    ++skipped_;
    ++skipped_by_reason_[skipped->reason];
    return;
  }
  add_rule(std::get<FilterRule>(std::move(parsed)));
}

void FilterSet::add_rule(FilterRule rule) {
  auto& rules = rule.is_exception ? exceptions_ : blocking_;
  auto& index = rule.is_exception ? exception_index_ : blocking_index_;
  const auto candidates = keyword_candidates(rule);
  const std::size_t position = rules.size();
  if (candidates.empty()) {
    index.unkeyed.push_back(position);
  } else {
    // least-used keyword keeps buckets short; longer wins ties
    const std::string* best = nullptr;
    std::size_t best_load = 0;
    for (const auto& keyword : candidates) {
      const auto it = index.by_keyword.find(keyword);
      const std::size_t load = it == index.by_keyword.end() ? 0 : it->second.size();
      if (best == nullptr || load < best_load || (load == best_load && keyword.size() > best->size())) {
        best = &keyword;
        best_load = load;
      }
    }
    index.by_keyword[*best].push_back(position);
  }
  rules.push_back(std::move(rule));
}

bool FilterSet::any_match(const std::vector<FilterRule>& rules, const Index& index, const MatchContext& context,
                          const std::string& url, std::size_t host_begin, std::size_t host_end,
                          const std::vector<std::string>& tokens) const {
  auto test = [&](std::size_t i) {
    const auto& rule = rules[i];
    return options_allow(rule, context) && pattern_matches(rule, url, host_begin, host_end, match_options_);
  };
  for (std::size_t i : index.unkeyed) {
    if (test(i)) return true;
  }
  for (const auto& token : tokens) {
    const auto it = index.by_keyword.find(token);
    if (it == index.by_keyword.end()) continue;
    for (std::size_t i : it->second) {
      if (test(i)) return true;
    }
  }
  return false;
}

Decision FilterSet::matches(const MatchContext& context) const {
  const std::string url = context.request_url.serialize();
  const std::size_t host_begin = context.request_url.scheme.size() + 3;
  const std::size_t host_end = host_begin + context.request_url.host.size();
  const auto tokens = url_tokens(url);
  if (any_match(exceptions_, exception_index_, context, url, host_begin, host_end, tokens)) {
    return Decision::allowlisted;
  }
  if (any_match(blocking_, blocking_index_, context, url, host_begin, host_end, tokens)) {
    return Decision::blocked;
  }
  return Decision::no_match;
}

bool blck_feature(const FilterSet& filters, const ImageRecord& image, const PageRecord& page,
                  const DomainMode& mode) {
  MatchContext context;
  context.request_url = image.resolved_url;
  context.page_sld = second_level_domain(page.final_url.host, mode);
  context.page_host = page.final_url.host;
  context.is_third_party = is_cross_domain(page.final_url, image.resolved_url, mode);
  context.resource_type = ResourceType::image;
  return filters.matches(context) == Decision::blocked;
}

}  // namespace beaconscan
