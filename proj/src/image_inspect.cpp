#include "beaconscan/image_inspect.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "beaconscan/url.hpp"

namespace beaconscan {

namespace {

using Kind = MimeType::Kind;
using ErrorKind = ImageParseError::Kind;

bool has_prefix(Bytes bytes, std::string_view magic) {
  if (bytes.size() < magic.size()) return false;
  for (std::size_t i = 0; i < magic.size(); ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(magic[i])) return false;
  }
  return true;
}

bool has_at(Bytes bytes, std::size_t offset, std::string_view magic) {
  return bytes.size() >= offset && has_prefix(bytes.subspan(offset), magic);
}

std::uint32_t le16(Bytes b, std::size_t at) { return b[at] | (b[at + 1] << 8); }
std::uint32_t le24(Bytes b, std::size_t at) { return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16); }
std::uint32_t le32(Bytes b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint32_t be16(Bytes b, std::size_t at) { return (b[at] << 8) | b[at + 1]; }
std::uint32_t be32(Bytes b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void require(Bytes bytes, std::size_t size, std::string_view format) {
  if (bytes.size() < size) {
    throw ImageParseError(ErrorKind::truncated, std::string(format) + " header truncated");
  }
}

[[noreturn]] void unsupported(std::string_view what) {
  throw ImageParseError(ErrorKind::unsupported_variant, std::string(what));
}

Dimensions checked(std::uint64_t width, std::uint64_t height, std::string_view format) {
  if (width == 0 || height == 0) {
    throw ImageParseError(ErrorKind::zero_dimension, std::string(format) + " declares a zero dimension");
  }
  return {static_cast<double>(width), static_cast<double>(height)};
}

Dimensions gif_dimensions(Bytes b) {
  if (!has_prefix(b, "GIF87a") && !has_prefix(b, "GIF89a")) unsupported("not a GIF");
  require(b, 10, "GIF");
  return checked(le16(b, 6), le16(b, 8), "GIF");
}

Dimensions png_dimensions(Bytes b) {
  if (!has_prefix(b, "\x89PNG\r\n\x1a\n")) unsupported("not a PNG");
  require(b, 24, "PNG");
  if (!has_at(b, 12, "IHDR")) unsupported("PNG without leading IHDR chunk");
  return checked(be32(b, 16), be32(b, 20), "PNG");
}

bool is_sof_marker(std::uint8_t marker) {
  switch (marker) {
    case 0xC0: case 0xC1: case 0xC2: case 0xC3:
    case 0xC5: case 0xC6: case 0xC7:
    case 0xC9: case 0xCA: case 0xCB:
    case 0xCD: case 0xCE: case 0xCF:
      return true;
    default:
      return false;
  }
}

Dimensions jpeg_dimensions(Bytes b) {
  if (b.size() < 2 || b[0] != 0xFF || b[1] != 0xD8) unsupported("not a JPEG");
  std::size_t pos = 2;
  while (true) {
    require(b, pos + 1, "JPEG");
    if (b[pos] != 0xFF) unsupported("JPEG marker expected");
    while (pos < b.size() && b[pos] == 0xFF) ++pos;
    require(b, pos + 1, "JPEG");
    const std::uint8_t marker = b[pos++];
    if (marker == 0x01 || marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7)) continue;
    if (marker == 0xD9 || marker == 0xDA) unsupported("JPEG without SOF before scan data");
    if (is_sof_marker(marker)) {
      require(b, pos + 7, "JPEG");
      return checked(be16(b, pos + 5), be16(b, pos + 3), "JPEG");
    }
    require(b, pos + 2, "JPEG");
    const std::size_t length = be16(b, pos);
    if (length < 2) unsupported("JPEG segment length below 2");
    pos += length;
  }
}

Dimensions webp_dimensions(Bytes b) {
  if (!has_prefix(b, "RIFF") || !has_at(b, 8, "WEBP")) unsupported("not a WebP");
  require(b, 20, "WebP");
  if (has_at(b, 12, "VP8 ")) {
    require(b, 30, "WebP VP8");
    if (b[23] != 0x9D || b[24] != 0x01 || b[25] != 0x2A) unsupported("VP8 start code missing");
    return checked(le16(b, 26) & 0x3FFF, le16(b, 28) & 0x3FFF, "WebP");
  }
  if (has_at(b, 12, "VP8L")) {
    require(b, 25, "WebP VP8L");
    if (b[20] != 0x2F) unsupported("VP8L signature missing");
    const std::uint32_t bits = le32(b, 21);
    return checked((bits & 0x3FFF) + 1, ((bits >> 14) & 0x3FFF) + 1, "WebP");
  }
  if (has_at(b, 12, "VP8X")) {
    require(b, 30, "WebP VP8X");
    return checked(le24(b, 24) + 1, le24(b, 27) + 1, "WebP");
  }
  unsupported("unknown WebP chunk");
}

Dimensions other_dimensions(Bytes b, const MimeType& mime) {
  if (mime.raw == "image/bmp") {
    require(b, 18, "BMP");
    if (le32(b, 14) == 12) {
      require(b, 22, "BMP");
      return checked(le16(b, 18), le16(b, 20), "BMP");
    }
    require(b, 26, "BMP");
    const auto width = static_cast<std::int32_t>(le32(b, 18));
    const auto height = static_cast<std::int32_t>(le32(b, 22));
    return checked(static_cast<std::uint64_t>(std::llabs(width)),
                   static_cast<std::uint64_t>(std::llabs(height)), "BMP");
  }
  if (mime.raw == "image/x-icon") {
    require(b, 8, "ICO");
    if (le16(b, 4) == 0) unsupported("ICO without images");
    return checked(b[6] == 0 ? 256 : b[6], b[7] == 0 ? 256 : b[7], "ICO");
  }
  unsupported("no dimension reader for " + mime.raw);
}

std::string media_type_of(std::string_view content_type) {
  const auto semicolon = content_type.find(';');
  return to_lower_ascii(trim_ascii(content_type.substr(0, semicolon)));
}

bool is_xml_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Position of the root element's '<' in an XML document, skipping the
// prolog (declaration, comments, processing instructions, doctype).
std::optional<std::size_t> xml_root_start(std::string_view text) {
  std::size_t pos = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (true) {
    while (pos < text.size() && is_xml_space(text[pos])) ++pos;
    if (pos >= text.size() || text[pos] != '<') return std::nullopt;
    const auto rest = text.substr(pos);
    std::size_t end = std::string_view::npos;
    if (rest.substr(0, 2) == "<?") {
      end = text.find("?>", pos);
      if (end != std::string_view::npos) end += 2;
    } else if (rest.substr(0, 4) == "<!--") {
      end = text.find("-->", pos + 4);
      if (end != std::string_view::npos) end += 3;
    } else if (rest.substr(0, 2) == "<!") {
      int depth = 0;
      for (std::size_t i = pos + 2; i < text.size(); ++i) {
        if (text[i] == '[') ++depth;
        if (text[i] == ']') --depth;
        if (text[i] == '>' && depth <= 0) {
          end = i + 1;
          break;
        }
      }
    } else {
      return pos;
    }
    if (end == std::string_view::npos) return std::nullopt;
    pos = end;
  }
}

std::string_view element_name_at(std::string_view text, std::size_t lt) {
  std::size_t end = lt + 1;
  while (end < text.size() && !is_xml_space(text[end]) && text[end] != '/' && text[end] != '>') ++end;
  return text.substr(lt + 1, end - lt - 1);
}

bool is_svg_root(std::string_view text) {
  const auto lt = xml_root_start(text);
  if (!lt) return false;
  auto name = element_name_at(text, *lt);
  if (const auto colon = name.find(':'); colon != std::string_view::npos) name = name.substr(colon + 1);
  return name == "svg";
}

std::optional<std::string> root_attribute(std::string_view text, std::string_view wanted) {
  const auto lt = xml_root_start(text);
  if (!lt) return std::nullopt;
  std::size_t pos = *lt + 1 + element_name_at(text, *lt).size();
  while (pos < text.size()) {
    while (pos < text.size() && is_xml_space(text[pos])) ++pos;
    if (pos >= text.size() || text[pos] == '>' || text[pos] == '/') return std::nullopt;
    const std::size_t name_start = pos;
    while (pos < text.size() && !is_xml_space(text[pos]) && text[pos] != '=' && text[pos] != '>' &&
           text[pos] != '/') {
      ++pos;
    }
    const auto name = text.substr(name_start, pos - name_start);
    while (pos < text.size() && is_xml_space(text[pos])) ++pos;
    if (pos >= text.size() || text[pos] != '=') continue;
    ++pos;
    while (pos < text.size() && is_xml_space(text[pos])) ++pos;
    if (pos >= text.size()) return std::nullopt;
    std::string_view value;
    if (text[pos] == '"' || text[pos] == '\'') {
      const char quote = text[pos];
      const auto close = text.find(quote, pos + 1);
      if (close == std::string_view::npos) return std::nullopt;
      value = text.substr(pos + 1, close - pos - 1);
      pos = close + 1;
    } else {
      const std::size_t value_start = pos;
      while (pos < text.size() && !is_xml_space(text[pos]) && text[pos] != '>') ++pos;
      value = text.substr(value_start, pos - value_start);
    }
    if (name == wanted) return std::string(value);
  }
  return std::nullopt;
}

std::optional<double> svg_length_px(std::string_view value) {
  value = trim_ascii(value);
  if (value.size() >= 2) {
    const auto unit = to_lower_ascii(value.substr(value.size() - 2));
    if (unit == "px") value = trim_ascii(value.substr(0, value.size() - 2));
  }
  if (value.empty()) return std::nullopt;
  if (value.front() == '+') value.remove_prefix(1);
  double number = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), number);
  if (ec != std::errc() || ptr != value.data() + value.size()) return std::nullopt;
  if (!std::isfinite(number) || number <= 0) return std::nullopt;
  return number;
}

}  // namespace

std::string_view to_string(ImageParseError::Kind kind) {
  switch (kind) {
    case ErrorKind::truncated:
      return "truncated";
    case ErrorKind::unsupported_variant:
      return "unsupported_variant";
    case ErrorKind::zero_dimension:
      return "zero_dimension";
  }
  return "unknown";
}

std::string MimeType::name() const {
  switch (kind) {
    case Kind::gif:
      return "image/gif";
    case Kind::jpeg:
      return "image/jpeg";
    case Kind::png:
      return "image/png";
    case Kind::svg:
      return "image/svg+xml";
    case Kind::webp:
      return "image/webp";
    case Kind::other:
      return raw.empty() ? "application/octet-stream" : raw;
  }
  return raw;
}

MimeType MimeType::from_name(std::string_view name) {
  const auto lowered = to_lower_ascii(name);
  if (lowered == "image/gif" || lowered == "gif") return of(Kind::gif);
  if (lowered == "image/jpeg" || lowered == "jpeg") return of(Kind::jpeg);
  if (lowered == "image/png" || lowered == "png") return of(Kind::png);
  if (lowered == "image/svg+xml" || lowered == "image/svg" || lowered == "svg") return of(Kind::svg);
  if (lowered == "image/webp" || lowered == "webp") return of(Kind::webp);
  return other(std::string(name));
}

MimeType sniff_mime(Bytes bytes, std::optional<std::string_view> content_type) {
  if (has_prefix(bytes, "GIF87a") || has_prefix(bytes, "GIF89a")) return MimeType::of(Kind::gif);
  if (has_prefix(bytes, "\x89PNG\r\n\x1a\n")) return MimeType::of(Kind::png);
  if (has_prefix(bytes, "\xFF\xD8\xFF")) return MimeType::of(Kind::jpeg);
  if (has_prefix(bytes, "RIFF") && has_at(bytes, 8, "WEBP")) return MimeType::of(Kind::webp);

  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const std::string media_type = content_type ? media_type_of(*content_type) : std::string();
  if (is_svg_root(text) || media_type == "image/svg" || media_type == "image/svg+xml") {
    return MimeType::of(Kind::svg);
  }

  if (has_prefix(bytes, "BM")) return MimeType::other("image/bmp");
  if (has_prefix(bytes, std::string_view("\x00\x00\x01\x00", 4))) return MimeType::other("image/x-icon");
  if (has_prefix(bytes, "II*") || has_prefix(bytes, std::string_view("MM\x00*", 4))) {
    return MimeType::other("image/tiff");
  }
  return MimeType::other(media_type.empty() ? "application/octet-stream" : media_type);
}

Dimensions raster_dimensions(Bytes bytes, const MimeType& mime) {
  switch (mime.kind) {
    case Kind::gif:
      return gif_dimensions(bytes);
    case Kind::png:
      return png_dimensions(bytes);
    case Kind::jpeg:
      return jpeg_dimensions(bytes);
    case Kind::webp:
      return webp_dimensions(bytes);
    case Kind::other:
      return other_dimensions(bytes, mime);
    case Kind::svg:
      break;
  }
  unsupported("SVG has no raster header");
}

std::optional<Dimensions> svg_dimensions(std::string_view text) {
  const auto width = root_attribute(text, "width");
  const auto height = root_attribute(text, "height");
  if (!width || !height) return std::nullopt;
  const auto w = svg_length_px(*width);
  const auto h = svg_length_px(*height);
  if (!w || !h) return std::nullopt;
  return Dimensions{*w, *h};
}

bool is_invisible(const MimeType& mime, const std::optional<Dimensions>& dims) {
  if (!dims) return false;
  if (mime.kind == Kind::svg) return dims->width <= 1.0 && dims->height <= 1.0;
  return dims->width == 1.0 && dims->height == 1.0;
}

Digest content_digest(Bytes bytes) {
  Digest digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1 ||
      length != digest.size()) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return digest;
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto byte : digest) {
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0xF]);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw std::invalid_argument("digest must be 64 hex digits");
  Digest digest{};
  for (std::size_t i = 0; i < digest.size(); ++i) {
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, value, 16);
    if (ec != std::errc() || ptr != hex.data() + 2 * i + 2) {
      throw std::invalid_argument("invalid hex digest");
    }
    digest[i] = static_cast<std::uint8_t>(value);
  }
  return digest;
}

InspectResult inspect_image(Bytes bytes, std::optional<std::string_view> content_type) {
  InspectResult result;
  result.mime = sniff_mime(bytes, content_type);
  if (result.mime.kind == Kind::svg) {
    result.dimensions = svg_dimensions(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } else {
    try {
      result.dimensions = raster_dimensions(bytes, result.mime);
    } catch (const ImageParseError& error) {
      result.error = error.kind();
      result.error_detail = error.what();
    }
  }
  result.invisible = is_invisible(result.mime, result.dimensions);
  return result;
}

}  // namespace beaconscan
