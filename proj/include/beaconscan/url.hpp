#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace beaconscan {

class MalformedUrl : public std::runtime_error {
 public:
  explicit MalformedUrl(const std::string& what) : std::runtime_error(what) {}
};

/// An absolute URL reduced to the parts that matter for origin and domain
/// comparisons. Userinfo and fragments are dropped at parse time.
struct ParsedUrl {
  std::string scheme;  // lowercase
  std::string host;    // lowercase; IPv6 literals keep their brackets
  int port = 0;        // scheme default when the URL had none
  std::string path = "/";
  std::optional<std::string> query;  // text after '?', before '#'

  bool operator==(const ParsedUrl&) const = default;

  /// Canonical text form; the port is omitted when it equals the scheme default.
  std::string serialize() const;
  /// Path plus "?query" when present, suitable as an HTTP request target.
  std::string request_target() const;
};

/// Default port for well-known schemes, 0 when unknown.
int default_port(std::string_view scheme);

/// True for dotted-quad IPv4 hosts and bracketed IPv6 hosts.
bool is_ip_literal(std::string_view host);

/// Parses `raw` as an absolute URL, resolving it against `base` when it is
/// relative (including protocol-relative "//host/..." references).
/// Throws MalformedUrl when no host can be recovered.
ParsedUrl parse_url(std::string_view raw, const std::optional<ParsedUrl>& base = std::nullopt);

/// Decodes %XX escapes once; malformed escapes are copied through.
std::string percent_decode(std::string_view text);

std::string to_lower_ascii(std::string_view text);
std::string_view trim_ascii(std::string_view text);

}  // namespace beaconscan
