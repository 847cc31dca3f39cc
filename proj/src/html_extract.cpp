#include "beaconscan/html_extract.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace beaconscan {

namespace {

struct StartTag {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;  // raw values

  const std::string* attribute(std::string_view wanted) const {
    for (const auto& [name, value] : attributes) {
      if (name == wanted) return &value;
    }
    return nullptr;
  }
};

bool is_html_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }
bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_alnum(char c) { return is_ascii_alpha(c) || (c >= '0' && c <= '9'); }

bool is_raw_text_element(std::string_view name) {
  return name == "script" || name == "style" || name == "textarea" || name == "title" ||
         name == "xmp" || name == "iframe" || name == "noembed" || name == "noframes";
}

// Walks start tags in document order. Comments, end tags and the content of
// raw-text elements are skipped.
void for_each_start_tag(std::string_view text, const std::function<void(const StartTag&)>& visit) {
  const std::string lowered = to_lower_ascii(text);
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const std::size_t lt = text.find('<', i);
    if (lt == std::string_view::npos) return;
    i = lt;
    const auto rest = text.substr(lt);
    if (rest.substr(0, 4) == "<!--") {
      const auto end = text.find("-->", lt + 4);
      i = end == std::string_view::npos ? n : end + 3;
      continue;
    }
    if (rest.substr(0, 2) == "<!" || rest.substr(0, 2) == "<?" ||
        (rest.substr(0, 2) == "</" && (rest.size() < 3 || !is_ascii_alpha(rest[2])))) {
      const auto end = text.find('>', lt + 2);
      i = end == std::string_view::npos ? n : end + 1;
      continue;
    }
    if (rest.substr(0, 2) == "</") {
      const auto end = text.find('>', lt + 2);
      i = end == std::string_view::npos ? n : end + 1;
      continue;
    }
    if (rest.size() < 2 || !is_ascii_alpha(rest[1])) {
      i = lt + 1;
      continue;
    }

    StartTag tag;
    std::size_t j = lt + 1;
    while (j < n && !is_html_space(text[j]) && text[j] != '/' && text[j] != '>') ++j;
    tag.name = lowered.substr(lt + 1, j - lt - 1);

    while (j < n) {
      while (j < n && (is_html_space(text[j]) || text[j] == '/')) ++j;
      if (j >= n) break;
      if (text[j] == '>') {
        ++j;
        break;
      }
      const std::size_t name_start = j;
      ++j;  // first character may be '='
      while (j < n && !is_html_space(text[j]) && text[j] != '/' && text[j] != '>' && text[j] != '=') ++j;
      std::string name = lowered.substr(name_start, j - name_start);
      while (j < n && is_html_space(text[j])) ++j;
      std::string value;
      if (j < n && text[j] == '=') {
        ++j;
        while (j < n && is_html_space(text[j])) ++j;
        if (j < n && (text[j] == '"' || text[j] == '\'')) {
          const char quote = text[j];
          const auto close = text.find(quote, j + 1);
          const std::size_t end = close == std::string_view::npos ? n : close;
          value = std::string(text.substr(j + 1, end - j - 1));
          j = close == std::string_view::npos ? n : close + 1;
        } else {
          const std::size_t value_start = j;
          while (j < n && !is_html_space(text[j]) && text[j] != '>') ++j;
          value = std::string(text.substr(value_start, j - value_start));
        }
      }
      if (tag.attribute(name) == nullptr) tag.attributes.emplace_back(std::move(name), std::move(value));
    }
    visit(tag);
    i = j;

    if (is_raw_text_element(tag.name)) {
      const auto close = lowered.find("</" + tag.name, i);
      i = close == std::string::npos ? n : close;
    }
  }
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

constexpr std::uint32_t kReplacement = 0xFFFD;

// windows-1252 code points for bytes 0x80..0x9F; 0 marks undefined slots
constexpr std::array<std::uint16_t, 32> kWindows1252High = {
    0x20AC, 0,      0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160,
    0x2039, 0x0152, 0,      0x017D, 0,      0,      0x2018, 0x2019, 0x201C, 0x201D, 0x2022,
    0x2013, 0x2014, 0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0,      0x017E, 0x0178};

const std::unordered_map<std::string_view, std::uint32_t>& named_entities() {
  static const std::unordered_map<std::string_view, std::uint32_t> table = {
      {"amp", '&'},       {"lt", '<'},          {"gt", '>'},         {"quot", '"'},
      {"apos", '\''},     {"nbsp", 0xA0},       {"copy", 0xA9},      {"reg", 0xAE},
      {"trade", 0x2122},  {"hellip", 0x2026},   {"mdash", 0x2014},   {"ndash", 0x2013},
      {"lsquo", 0x2018},  {"rsquo", 0x2019},    {"ldquo", 0x201C},   {"rdquo", 0x201D},
      {"laquo", 0xAB},    {"raquo", 0xBB},      {"middot", 0xB7},    {"bull", 0x2022},
      {"euro", 0x20AC},   {"pound", 0xA3},      {"yen", 0xA5},       {"cent", 0xA2},
      {"sect", 0xA7},     {"deg", 0xB0},        {"plusmn", 0xB1},    {"times", 0xD7},
      {"divide", 0xF7},   {"frac12", 0xBD},     {"auml", 0xE4},      {"ouml", 0xF6},
      {"uuml", 0xFC},     {"Auml", 0xC4},       {"Ouml", 0xD6},      {"Uuml", 0xDC},
      {"szlig", 0xDF},    {"eacute", 0xE9},     {"egrave", 0xE8},    {"aacute", 0xE1},
      {"agrave", 0xE0},   {"ccedil", 0xE7},     {"iexcl", 0xA1},     {"iquest", 0xBF},
      {"para", 0xB6},     {"shy", 0xAD},        {"sol", '/'},        {"colon", ':'},
      {"quest", '?'},     {"equals", '='},      {"num", '#'},        {"percnt", '%'},
      {"period", '.'},    {"comma", ','},       {"lowbar", '_'},     {"hyphen", 0x2010}};
  return table;
}

// References that browsers honour without a trailing semicolon.
bool is_legacy_entity(std::string_view name) {
  return name == "amp" || name == "lt" || name == "gt" || name == "quot" || name == "nbsp" ||
         name == "copy" || name == "reg" || name == "AMP" || name == "LT" || name == "GT" ||
         name == "QUOT";
}

std::uint32_t sanitize_code_point(std::uint64_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return kReplacement;
  if (cp >= 0x80 && cp <= 0x9F && kWindows1252High[cp - 0x80] != 0) return kWindows1252High[cp - 0x80];
  return static_cast<std::uint32_t>(cp);
}

std::optional<std::string> meta_charset(std::string_view raw) {
  std::optional<std::string> found;
  for_each_start_tag(raw, [&](const StartTag& tag) {
    if (found || tag.name != "meta") return;
    if (const auto* charset = tag.attribute("charset")) {
      found = to_lower_ascii(trim_ascii(*charset));
      return;
    }
    if (const auto* content = tag.attribute("content")) {
      const auto lowered = to_lower_ascii(*content);
      const auto at = lowered.find("charset=");
      if (at == std::string::npos) return;
      auto value = std::string_view(lowered).substr(at + 8);
      value = value.substr(0, std::min(value.find_first_of("; \t\"'"), value.size()));
      found = std::string(value);
    }
  });
  return found;
}

bool is_single_byte_western(std::string_view charset) {
  static const std::unordered_set<std::string_view> names = {
      "iso-8859-1", "iso8859-1", "latin1", "latin-1", "l1", "windows-1252", "cp1252",
      "us-ascii",   "ascii",     "iso_8859-1", "x-cp1252"};
  return names.contains(charset);
}

}  // namespace

std::string to_utf8(std::string_view bytes, std::string_view charset) {
  std::string out;
  out.reserve(bytes.size());
  if (is_single_byte_western(to_lower_ascii(trim_ascii(charset)))) {
    for (char ch : bytes) {
      const auto b = static_cast<unsigned char>(ch);
      if (b >= 0x80 && b <= 0x9F && kWindows1252High[b - 0x80] != 0) {
        append_utf8(out, kWindows1252High[b - 0x80]);
      } else {
        append_utf8(out, b);
      }
    }
    return out;
  }

  const std::size_t n = bytes.size();
  std::size_t i = 0;
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      out.push_back(static_cast<char>(b0));
      ++i;
      continue;
    }
    std::size_t length = 0;
    std::uint32_t cp = 0;
    std::uint32_t minimum = 0;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
      length = 2, cp = b0 & 0x1F, minimum = 0x80;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
      length = 3, cp = b0 & 0x0F, minimum = 0x800;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
      length = 4, cp = b0 & 0x07, minimum = 0x10000;
    }
    bool valid = length > 0 && i + length <= n;
    for (std::size_t k = 1; valid && k < length; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (valid && (cp < minimum || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) valid = false;
    if (valid) {
      out.append(bytes.substr(i, length));
      i += length;
    } else {
      append_utf8(out, kReplacement);
      ++i;
    }
  }
  return out;
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (text[i] != '&') {
      out.push_back(text[i++]);
      continue;
    }
    std::size_t j = i + 1;
    if (j < n && text[j] == '#') {
      ++j;
      const bool hex = j < n && (text[j] == 'x' || text[j] == 'X');
      if (hex) ++j;
      const std::size_t digits_start = j;
      std::uint64_t value = 0;
      while (j < n) {
        const char c = text[j];
        int digit = -1;
        if (c >= '0' && c <= '9') digit = c - '0';
        if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        if (digit < 0) break;
        value = std::min<std::uint64_t>(value * (hex ? 16 : 10) + digit, 0x110000);
        ++j;
      }
      if (j == digits_start) {
        out.push_back(text[i++]);
        continue;
      }
      if (j < n && text[j] == ';') ++j;
      append_utf8(out, sanitize_code_point(value));
      i = j;
      continue;
    }
    while (j < n && is_ascii_alnum(text[j])) ++j;
    const auto name = text.substr(i + 1, j - i - 1);
    const auto& table = named_entities();
    if (j < n && text[j] == ';') {
      if (const auto it = table.find(name); it != table.end()) {
        append_utf8(out, it->second);
        i = j + 1;
        continue;
      }
    } else if (is_legacy_entity(name) && !(j < n && text[j] == '=')) {
      const std::string lowered = to_lower_ascii(name);
      append_utf8(out, table.at(std::string_view(lowered)));
      i = j;
      continue;
    }
    out.push_back(text[i++]);
  }
  return out;
}

ExtractionResult extract(std::string_view html, std::optional<std::string_view> charset_hint) {
  std::string charset;
  if (charset_hint && !trim_ascii(*charset_hint).empty()) {
    charset = to_lower_ascii(trim_ascii(*charset_hint));
  } else if (auto declared = meta_charset(html)) {
    charset = *declared;
  } else {
    charset = "utf-8";
  }
  const std::string text = to_utf8(html, charset);

  ExtractionResult result;
  for_each_start_tag(text, [&](const StartTag& tag) {
    if (tag.name == "img") {
      ImgTagRef ref;
      if (const auto* src = tag.attribute("src")) ref.src = decode_entities(*src);
      ref.alt_present = tag.attribute("alt") != nullptr;
      if (const auto* style = tag.attribute("style")) ref.style_value = decode_entities(*style);
      result.img_refs.push_back(std::move(ref));
    } else if (tag.name == "a") {
      if (const auto* href = tag.attribute("href")) result.anchor_hrefs.push_back(decode_entities(*href));
    } else if (tag.name == "frame" || tag.name == "iframe") {
      if (const auto* src = tag.attribute("src")) result.frame_srcs.push_back(decode_entities(*src));
    }
  });
  return result;
}

std::vector<ParsedUrl> frontier(const ExtractionResult& result, const ParsedUrl& page_final,
                                const DomainMode& mode) {
  std::vector<ParsedUrl> out;
  std::unordered_set<std::string> seen;
  auto consider = [&](const std::string& raw) {
    if (trim_ascii(raw).empty()) return;
    ParsedUrl url;
    try {
      url = parse_url(raw, page_final);
    } catch (const MalformedUrl&) {
      return;
    }
    if (url.scheme != "http" && url.scheme != "https") return;
    if (is_cross_domain(page_final, url, mode)) return;
    if (seen.insert(url.serialize()).second) out.push_back(std::move(url));
  };
  for (const auto& href : result.anchor_hrefs) consider(href);
  for (const auto& src : result.frame_srcs) consider(src);
  return out;
}

}  // namespace beaconscan
