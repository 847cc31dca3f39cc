#include "beaconscan/corpus.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace beaconscan {

using nlohmann::json;

void classify_image(ImageRecord& image, const PageRecord& page, const DomainMode& mode) {
  image.is_invisible = image.qualified() && is_invisible(image.mime, image.dimensions);
  image.is_cross_domain = is_cross_domain(page.final_url, image.resolved_url, mode);
  image.is_cross_origin = is_cross_origin(page.final_url, image.resolved_url);
}

void Corpus::reclassify(const DomainMode& mode) {
  for (auto& image : images) classify_image(image, pages.at(image.page), mode);
  domain_mode = std::string(mode.name());
}

std::size_t Corpus::sites_sampled_ok() const {
  std::set<std::string> ok;
  for (const auto& page : pages) {
    if (page.fetch_status.ok()) ok.insert(page.site_domain);
  }
  return ok.size();
}

namespace corpus_io {

namespace {

std::string_view state_name(FetchStatus::State state) {
  switch (state) {
    case FetchStatus::State::ok:
      return "ok";
    case FetchStatus::State::timeout:
      return "timeout";
    case FetchStatus::State::error:
      return "error";
  }
  return "error";
}

FetchStatus::State parse_state(const std::string& name) {
  if (name == "ok") return FetchStatus::State::ok;
  if (name == "timeout") return FetchStatus::State::timeout;
  if (name == "error") return FetchStatus::State::error;
  throw CorruptCorpus("unknown fetch status: " + name);
}

std::optional<ImageParseError::Kind> parse_error_kind(const json& value) {
  if (value.is_null()) return std::nullopt;
  const auto name = value.get<std::string>();
  if (name == "truncated") return ImageParseError::Kind::truncated;
  if (name == "unsupported_variant") return ImageParseError::Kind::unsupported_variant;
  if (name == "zero_dimension") return ImageParseError::Kind::zero_dimension;
  throw CorruptCorpus("unknown parse error kind: " + name);
}

json optional_string(const std::optional<std::string>& value) {
  return value ? json(*value) : json(nullptr);
}

std::optional<std::string> read_optional_string(const json& value) {
  if (value.is_null()) return std::nullopt;
  return value.get<std::string>();
}

json tag_to_json(const ImgTagRef& tag) {
  return {{"src", tag.src}, {"alt", tag.alt_present}, {"style", optional_string(tag.style_value)}};
}

ImgTagRef tag_from_json(const json& j) {
  return {j.at("src").get<std::string>(), j.at("alt").get<bool>(), read_optional_string(j.at("style"))};
}

json page_to_json(const PageRecord& page, std::size_t id) {
  json refs = json::array();
  for (const auto& ref : page.image_refs) refs.push_back(tag_to_json(ref));
  return {{"id", id},
          {"site", page.site_domain},
          {"category", page.category},
          {"requested_url", page.requested_url.serialize()},
          {"final_url", page.final_url.serialize()},
          {"status", state_name(page.fetch_status.state)},
          {"status_code", page.fetch_status.code},
          {"status_detail", page.fetch_status.detail},
          {"pass", page.pass_index},
          {"body_digest", page.body_digest},
          {"images", refs}};
}

PageRecord page_from_json(const json& j) {
  PageRecord page;
  page.site_domain = j.at("site").get<std::string>();
  page.category = j.value("category", "");
  page.requested_url = parse_url(j.at("requested_url").get<std::string>());
  page.final_url = parse_url(j.at("final_url").get<std::string>());
  page.fetch_status.state = parse_state(j.at("status").get<std::string>());
  page.fetch_status.code = j.value("status_code", 0);
  page.fetch_status.detail = j.value("status_detail", "");
  page.pass_index = j.at("pass").get<int>();
  page.body_digest = j.value("body_digest", "");
  for (const auto& ref : j.at("images")) page.image_refs.push_back(tag_from_json(ref));
  if (!page.fetch_status.ok() && !page.image_refs.empty()) {
    throw CorruptCorpus("failed page carries image references: " + page.requested_url.serialize());
  }
  return page;
}

json optional_number(const std::optional<Dimensions>& dims, double Dimensions::*member) {
  return dims ? json((*dims).*member) : json(nullptr);
}

json image_to_json(const ImageRecord& image) {
  const auto& meta = image.response_meta;
  return {{"page", image.page},
          {"src", image.tag.src},
          {"alt", image.tag.alt_present},
          {"style", optional_string(image.tag.style_value)},
          {"url", image.resolved_url.serialize()},
          {"fetched_url", image.fetched_url.serialize()},
          {"digest", to_hex(image.content_digest)},
          {"mime", image.mime.name()},
          {"width", optional_number(image.dimensions, &Dimensions::width)},
          {"height", optional_number(image.dimensions, &Dimensions::height)},
          {"parse_error", image.parse_error ? json(to_string(*image.parse_error)) : json(nullptr)},
          {"http",
           {{"status", meta.status},
            {"etag", meta.etag_present},
            {"set_cookie", meta.set_cookie_present},
            {"cache_control", optional_string(meta.cache_control)},
            {"content_type", optional_string(meta.content_type)}}},
          {"invisible", image.is_invisible},
          {"cross_domain", image.is_cross_domain},
          {"cross_origin", image.is_cross_origin}};
}

ImageRecord image_from_json(const json& j) {
  ImageRecord image;
  image.page = j.at("page").get<std::size_t>();
  image.tag = tag_from_json(j);
  image.resolved_url = parse_url(j.at("url").get<std::string>());
  image.fetched_url = parse_url(j.value("fetched_url", j.at("url").get<std::string>()));
  image.content_digest = digest_from_hex(j.at("digest").get<std::string>());
  image.mime = MimeType::from_name(j.at("mime").get<std::string>());
  const auto& width = j.at("width");
  const auto& height = j.at("height");
  if (width.is_null() != height.is_null()) throw CorruptCorpus("image with only one dimension");
  if (!width.is_null()) image.dimensions = Dimensions{width.get<double>(), height.get<double>()};
  image.parse_error = parse_error_kind(j.at("parse_error"));
  const auto& http = j.at("http");
  image.response_meta.status = http.at("status").get<int>();
  image.response_meta.etag_present = http.at("etag").get<bool>();
  image.response_meta.set_cookie_present = http.at("set_cookie").get<bool>();
  image.response_meta.cache_control = read_optional_string(http.at("cache_control"));
  image.response_meta.content_type = read_optional_string(http.at("content_type"));
  image.is_invisible = j.at("invisible").get<bool>();
  image.is_cross_domain = j.at("cross_domain").get<bool>();
  image.is_cross_origin = j.at("cross_origin").get<bool>();
  return image;
}

json sites_to_json(const Corpus& corpus) {
  json sites = json::array();
  for (const auto& site : corpus.sites) {
    sites.push_back({{"domain", site.domain},
                     {"category", site.category},
                     {"sampled_ok", site.sampled_ok},
                     {"passes", site.pass_results}});
  }
  const auto& t = corpus.tally;
  return {{"domain_mode", corpus.domain_mode},
          {"sites", sites},
          {"tally",
           {{"skipped_empty", t.skipped_empty},
            {"skipped_data_uri", t.skipped_data_uri},
            {"skipped_unresolvable", t.skipped_unresolvable},
            {"image_fetch_errors", t.image_fetch_errors},
            {"duplicate_images", t.duplicate_images},
            {"robots_blocked", t.robots_blocked}}}};
}

void sites_from_json(const json& j, Corpus& corpus) {
  corpus.domain_mode = j.value("domain_mode", "naive");
  for (const auto& site : j.at("sites")) {
    SiteOutcome outcome;
    outcome.domain = site.at("domain").get<std::string>();
    outcome.category = site.value("category", "");
    outcome.sampled_ok = site.at("sampled_ok").get<bool>();
    outcome.pass_results = site.value("passes", std::vector<std::string>{});
    corpus.sites.push_back(std::move(outcome));
  }
  const auto& t = j.at("tally");
  corpus.tally.skipped_empty = t.value("skipped_empty", std::size_t{0});
  corpus.tally.skipped_data_uri = t.value("skipped_data_uri", std::size_t{0});
  corpus.tally.skipped_unresolvable = t.value("skipped_unresolvable", std::size_t{0});
  corpus.tally.image_fetch_errors = t.value("image_fetch_errors", std::size_t{0});
  corpus.tally.duplicate_images = t.value("duplicate_images", std::size_t{0});
  corpus.tally.robots_blocked = t.value("robots_blocked", std::size_t{0});
}

void write_atomically(const std::filesystem::path& target, const std::string& content) {
  auto temp = target;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + temp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("failed writing " + temp.string());
  }
  std::filesystem::rename(temp, target);
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CorruptCorpus("missing corpus file: " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <typename Fn>
void for_each_line(const std::filesystem::path& file, Fn&& fn) {
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim_ascii(line).empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const CorruptCorpus&) {
      throw;
    } catch (const std::exception& error) {
      throw CorruptCorpus(file.filename().string() + ":" + std::to_string(number) + ": " + error.what());
    }
  }
}

}  // namespace

void write_blob(const std::filesystem::path& dir, const Digest& digest, Bytes bytes) {
  const auto blob_dir = dir / kBlobDir;
  std::filesystem::create_directories(blob_dir);
  const auto target = blob_dir / to_hex(digest);
  if (std::filesystem::exists(target)) return;
  // unique temp name per writer thread; content-addressed so a lost race is harmless
  auto temp = target;
  temp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write blob " + temp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(temp, target);
}

std::string read_blob(const std::filesystem::path& dir, std::string_view hex_digest) {
  return read_file(dir / kBlobDir / std::string(hex_digest));
}

void save(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string pages;
  for (std::size_t i = 0; i < corpus.pages.size(); ++i) pages += page_to_json(corpus.pages[i], i).dump() + "\n";
  std::string images;
  for (const auto& image : corpus.images) images += image_to_json(image).dump() + "\n";
  write_atomically(dir / kPagesFile, pages);
  write_atomically(dir / kImagesFile, images);
  write_atomically(dir / kSitesFile, sites_to_json(corpus).dump(2) + "\n");
}

Corpus load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CorruptCorpus("not a corpus directory: " + dir.string());
  Corpus corpus;
  for_each_line(dir / kPagesFile, [&](const json& j) { corpus.pages.push_back(page_from_json(j)); });
  std::set<std::pair<std::string, Digest>> seen;
  for_each_line(dir / kImagesFile, [&](const json& j) {
    auto image = image_from_json(j);
    if (image.page >= corpus.pages.size()) throw CorruptCorpus("image references unknown page");
    const auto& site = corpus.pages[image.page].site_domain;
    if (!seen.emplace(site, image.content_digest).second) {
      throw CorruptCorpus("duplicate image digest for site " + site);
    }
    corpus.images.push_back(std::move(image));
  });
  if (std::filesystem::exists(dir / kSitesFile)) {
    try {
      sites_from_json(json::parse(read_file(dir / kSitesFile)), corpus);
    } catch (const CorruptCorpus&) {
      throw;
    } catch (const std::exception& error) {
      throw CorruptCorpus(std::string("sites.json: ") + error.what());
    }
  }
  return corpus;
}

std::string digest_of(const std::filesystem::path& dir) {
  std::string content;
  for (const char* name : {kPagesFile, kImagesFile, kSitesFile}) {
    if (std::filesystem::exists(dir / name)) content += read_file(dir / name);
  }
  return to_hex(content_digest(as_bytes(content)));
}

}  // namespace corpus_io

}  // namespace beaconscan
