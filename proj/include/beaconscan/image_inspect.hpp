#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace beaconscan {

using Bytes = std::span<const std::uint8_t>;

inline Bytes as_bytes(std::string_view text) {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

struct MimeType {
  enum class Kind { gif, jpeg, png, svg, webp, other };

  Kind kind = Kind::other;
  std::string raw;  // only meaningful for `other`, e.g. "image/bmp"

  static MimeType of(Kind kind) { return {kind, {}}; }
  static MimeType other(std::string raw) { return {Kind::other, std::move(raw)}; }

  bool is_raster() const { return kind != Kind::svg; }
  /// "image/gif", ..., or the raw string for `other`.
  std::string name() const;
  /// Parses the output of name(); unknown strings become `other`.
  static MimeType from_name(std::string_view name);

  bool operator==(const MimeType&) const = default;
};

struct Dimensions {
  double width = 0;
  double height = 0;
  bool operator==(const Dimensions&) const = default;
};

class ImageParseError : public std::runtime_error {
 public:
  enum class Kind { truncated, unsupported_variant, zero_dimension };
  ImageParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(ImageParseError::Kind kind);

/// Magic-number sniffing. SVG is recognised from the markup itself or from
/// an `image/svg` / `image/svg+xml` Content-Type.
MimeType sniff_mime(Bytes bytes, std::optional<std::string_view> content_type = std::nullopt);

/// Declared pixel size from the format header. Supports gif, png, jpeg and
/// webp, plus BMP and ICO under `other`. Throws ImageParseError.
Dimensions raster_dimensions(Bytes bytes, const MimeType& mime);

/// Root `<svg>` width/height in pixels; nullopt for missing attributes,
/// non-pixel units, percentages and non-positive values.
std::optional<Dimensions> svg_dimensions(std::string_view text);

/// Raster: exactly 1x1. SVG: both sides <= 1. Unknown size: never invisible.
bool is_invisible(const MimeType& mime, const std::optional<Dimensions>& dims);

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of the exact bytes.
Digest content_digest(Bytes bytes);
std::string to_hex(const Digest& digest);
/// Throws std::invalid_argument unless `hex` is 64 hex digits.
Digest digest_from_hex(std::string_view hex);

struct InspectResult {
  MimeType mime;
  std::optional<Dimensions> dimensions;
  std::optional<ImageParseError::Kind> error;  // set when a raster header failed to parse
  std::string error_detail;
  bool invisible = false;

  /// Recognised by the inspector and therefore part of the image statistics.
  bool qualified() const { return !error.has_value(); }
};

/// Sniff, measure and classify in one step; never throws.
InspectResult inspect_image(Bytes bytes, std::optional<std::string_view> content_type = std::nullopt);

}  // namespace beaconscan
