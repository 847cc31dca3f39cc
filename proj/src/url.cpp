#include "beaconscan/url.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <vector>

namespace beaconscan {

namespace {

bool is_special_scheme(std::string_view scheme) {
  return scheme == "http" || scheme == "https" || scheme == "ws" || scheme == "wss" ||
         scheme == "ftp";
}

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Drops tab/CR/LF anywhere and leading/trailing C0 controls and spaces.
std::string clean_input(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '\t' || c == '\n' || c == '\r') continue;
    out.push_back(c);
  }
  auto is_c0_or_space = [](char c) { return static_cast<unsigned char>(c) <= 0x20; };
  auto first = std::find_if_not(out.begin(), out.end(), is_c0_or_space);
  auto last = std::find_if_not(out.rbegin(), out.rend(), is_c0_or_space).base();
  if (first >= last) return {};
  return std::string(first, last);
}

std::optional<std::string> leading_scheme(std::string_view s) {
  if (s.empty() || !is_alpha(s[0])) return std::nullopt;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const char c = s[i];
    if (c == ':') return to_lower_ascii(s.substr(0, i));
    if (!(is_alpha(c) || is_digit(c) || c == '+' || c == '-' || c == '.')) return std::nullopt;
  }
  return std::nullopt;
}

void append_escaped(std::string& out, unsigned char c) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  out.push_back('%');
  out.push_back(kHex[c >> 4]);
  out.push_back(kHex[c & 0xF]);
}

std::string encode_component(std::string_view text, bool is_query) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool escape = c <= 0x20 || c >= 0x7F || c == '"' || c == '<' || c == '>' ||
                        (!is_query && c == '`');
    if (escape) {
      append_escaped(out, c);
    } else {
      out.push_back(ch);
    }
  }
  return out;
}

std::string remove_dot_segments(std::string_view path) {
  std::vector<std::string_view> segments;
  std::size_t pos = 0;
  // path always starts with '/'
  const bool trailing_slash_needed = [&] {
    const auto last = path.rfind('/');
    const auto tail = path.substr(last + 1);
    return tail == "." || tail == "..";
  }();
  while (pos < path.size()) {
    const std::size_t start = pos + 1;
    std::size_t end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    const auto segment = path.substr(start, end - start);
    if (segment == ".") {
      // skip
    } else if (segment == "..") {
      if (!segments.empty()) segments.pop_back();
    } else {
      segments.push_back(segment);
    }
    pos = end;
  }
  std::string out;
  for (const auto& segment : segments) {
    out.push_back('/');
    out.append(segment);
  }
  if (out.empty() || trailing_slash_needed) out.push_back('/');
  return out;
}

struct Reference {
  std::string path;
  std::optional<std::string> query;
};

Reference split_reference(std::string_view rest, bool special) {
  Reference ref;
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    ref.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  ref.path = std::string(rest);
  if (special) std::replace(ref.path.begin(), ref.path.end(), '\\', '/');
  return ref;
}

void validate_host(const std::string& host, std::string_view raw) {
  if (host.empty()) throw MalformedUrl("no host in URL: " + std::string(raw));
  for (char c : host) {
    const auto u = static_cast<unsigned char>(c);
    if (u <= 0x20 || c == '<' || c == '>' || c == '^' || c == '|' || c == '%' || c == '"' ||
        c == '{' || c == '}' || c == '`' || u == 0x7F) {
      throw MalformedUrl("invalid host in URL: " + std::string(raw));
    }
  }
}

ParsedUrl parse_authority_form(const std::string& scheme, std::string_view s, std::string_view raw) {
  const bool special = is_special_scheme(scheme);
  const std::string_view delimiters = special ? "/?#\\" : "/?#";
  const auto auth_end = std::min(s.find_first_of(delimiters), s.size());
  std::string_view authority = s.substr(0, auth_end);
  const std::string_view rest = s.substr(auth_end);

  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority = authority.substr(at + 1);
  }

  std::string_view host_part = authority;
  std::string_view port_part;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw MalformedUrl("unterminated IPv6 host: " + std::string(raw));
    host_part = authority.substr(0, close + 1);
    const auto after = authority.substr(close + 1);
    if (!after.empty()) {
      if (after.front() != ':') throw MalformedUrl("garbage after IPv6 host: " + std::string(raw));
      port_part = after.substr(1);
    }
  } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host_part = authority.substr(0, colon);
    port_part = authority.substr(colon + 1);
  }

  ParsedUrl url;
  url.scheme = scheme;
  url.host = to_lower_ascii(host_part);
  validate_host(url.host, raw);

  url.port = default_port(scheme);
  if (!port_part.empty()) {
    int port = 0;
    const auto* first = port_part.data();
    const auto* last = first + port_part.size();
    const auto [ptr, ec] = std::from_chars(first, last, port);
    if (ec != std::errc() || ptr != last || port < 0 || port > 65535) {
      throw MalformedUrl("invalid port in URL: " + std::string(raw));
    }
    url.port = port;
  }

  auto ref = split_reference(rest, special);
  url.path = ref.path.empty() ? std::string("/") : remove_dot_segments(encode_component(ref.path, false));
  if (ref.query) url.query = encode_component(*ref.query, true);
  return url;
}

ParsedUrl resolve_relative(std::string_view s, const ParsedUrl& base) {
  auto ref = split_reference(s, is_special_scheme(base.scheme));
  ParsedUrl url = base;
  if (ref.path.empty()) {
    if (ref.query) url.query = encode_component(*ref.query, true);
    return url;
  }
  const auto encoded = encode_component(ref.path, false);
  if (encoded.front() == '/') {
    url.path = remove_dot_segments(encoded);
  } else {
    const auto last_slash = base.path.rfind('/');
    const std::string dir =
        last_slash == std::string::npos ? std::string("/") : base.path.substr(0, last_slash + 1);
    url.path = remove_dot_segments(dir + encoded);
  }
  url.query = ref.query ? std::optional<std::string>(encode_component(*ref.query, true)) : std::nullopt;
  return url;
}

}  // namespace

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim_ascii(std::string_view text) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

int default_port(std::string_view scheme) {
  if (scheme == "http" || scheme == "ws") return 80;
  if (scheme == "https" || scheme == "wss") return 443;
  if (scheme == "ftp") return 21;
  return 0;
}

bool is_ip_literal(std::string_view host) {
  if (host.empty()) return false;
  if (host.front() == '[') return true;
  int parts = 0;
  std::size_t pos = 0;
  while (pos <= host.size()) {
    auto dot = host.find('.', pos);
    if (dot == std::string_view::npos) dot = host.size();
    const auto label = host.substr(pos, dot - pos);
    if (label.empty() || label.size() > 3 ||
        !std::all_of(label.begin(), label.end(), [](char c) { return is_digit(c); })) {
      return false;
    }
    if (std::stoi(std::string(label)) > 255) return false;
    ++parts;
    pos = dot + 1;
  }
  return parts == 4;
}

std::string ParsedUrl::serialize() const {
  std::string out = scheme + "://" + host;
  if (port != default_port(scheme)) out += ":" + std::to_string(port);
  out += request_target();
  return out;
}

std::string ParsedUrl::request_target() const {
  std::string out = path;
  if (query) out += "?" + *query;
  return out;
}

ParsedUrl parse_url(std::string_view raw, const std::optional<ParsedUrl>& base) {
  const std::string input = clean_input(raw);
  if (input.empty()) throw MalformedUrl("empty URL");

  if (auto scheme = leading_scheme(input)) {
    std::string_view rest = std::string_view(input).substr(scheme->size() + 1);
    if (is_special_scheme(*scheme)) {
      const bool has_slash = !rest.empty() && (rest.front() == '/' || rest.front() == '\\');
      if (!has_slash && base && base->scheme == *scheme) return resolve_relative(rest, *base);
      while (!rest.empty() && (rest.front() == '/' || rest.front() == '\\')) rest.remove_prefix(1);
      return parse_authority_form(*scheme, rest, raw);
    }
    if (rest.substr(0, 2) == "//") return parse_authority_form(*scheme, rest.substr(2), raw);
    throw MalformedUrl("URL has no host: " + std::string(raw));
  }

  const std::string_view view(input);
  const bool protocol_relative =
      view.substr(0, 2) == "//" ||
      (base && is_special_scheme(base->scheme) && (view.substr(0, 2) == "\\\\" || view.substr(0, 2) == "/\\"));
  if (protocol_relative) {
    if (!base) throw MalformedUrl("protocol-relative URL without base: " + std::string(raw));
    return parse_authority_form(base->scheme, view.substr(2), raw);
  }
  if (!base) throw MalformedUrl("relative URL without base: " + std::string(raw));
  return resolve_relative(view, *base);
}

std::string percent_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      const int hi = hex_value(text[i + 1]);
      const int lo = hex_value(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

}  // namespace beaconscan
