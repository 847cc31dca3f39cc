#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "beaconscan/corpus.hpp"
#include "beaconscan/domain.hpp"

namespace beaconscan {

struct CategoryRow {
  std::string category;
  std::size_t domains_ok = 0;
  std::size_t images = 0;
  std::size_t one_by_one_cross_domain = 0;
};

struct MimeRow {
  std::string mime;
  std::size_t images = 0;
  std::size_t one_by_one_cross_domain = 0;
};

struct DomainCount {
  std::string domain;
  std::size_t count = 0;
};

/// Counts over qualified images (those whose headers parsed).
struct SampleSummary {
  std::size_t domains_sampled_ok = 0;
  std::size_t domains_listed = 0;
  std::size_t images_total = 0;
  std::size_t cross_domain_images = 0;
  std::size_t one_by_one_images = 0;
  std::size_t one_by_one_cross_domain = 0;
  std::size_t parse_failures = 0;
  std::size_t domains_with_one_by_one = 0;
  std::vector<CategoryRow> categories;       // sorted by category name
  std::vector<MimeRow> mimes;                // gif, jpeg, png, svg, other
  std::vector<DomainCount> top_referencing;  // sampled sites by 1x1 cross-domain images
  std::vector<DomainCount> top_referenced;   // image SLDs by 1x1 cross-domain images
  CrawlTally tally;
};

SampleSummary summarize(const Corpus& corpus, const DomainMode& mode, std::size_t top_n = 15);

/// `part` as a percentage of `whole` with one decimal; "0.0" when whole is 0.
std::string percent(std::size_t part, std::size_t whole);

std::string format_summary(const SampleSummary& summary);
nlohmann::json to_json(const SampleSummary& summary);

/// summary.txt, summary.json, summary.csv, categories.csv, mime.csv,
/// top_referencing.csv and top_referenced.csv under `dir`.
void write_report_files(const SampleSummary& summary, const std::filesystem::path& dir);

}  // namespace beaconscan
