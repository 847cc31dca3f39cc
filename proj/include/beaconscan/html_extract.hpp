#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "beaconscan/corpus.hpp"
#include "beaconscan/domain.hpp"
#include "beaconscan/url.hpp"

namespace beaconscan {

struct ExtractionResult {
  std::vector<ImgTagRef> img_refs;
  std::vector<std::string> anchor_hrefs;
  std::vector<std::string> frame_srcs;  // <frame> and <iframe>
};

/// Error-recovering scan of an HTML document. Accepts arbitrary bytes; tags
/// cut off by the end of input are still reported. Attribute values are
/// entity-decoded. Charset: `charset_hint`, else a <meta> declaration, else
/// UTF-8 with invalid sequences replaced.
ExtractionResult extract(std::string_view html, std::optional<std::string_view> charset_hint = std::nullopt);

/// Absolute http(s) URLs from hrefs and frame sources that share the page's
/// second-level domain; deduplicated, first-seen order.
std::vector<ParsedUrl> frontier(const ExtractionResult& result, const ParsedUrl& page_final,
                                const DomainMode& mode);

/// HTML character-reference decoding as applied to attribute values.
std::string decode_entities(std::string_view text);

/// Converts `bytes` from `charset` to UTF-8. Understands UTF-8 and the
/// ISO-8859-1 / windows-1252 family; anything else is read as UTF-8.
std::string to_utf8(std::string_view bytes, std::string_view charset);

}  // namespace beaconscan
