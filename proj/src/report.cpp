#include "beaconscan/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "beaconscan/features.hpp"

namespace beaconscan {

namespace {

std::vector<DomainCount> ranked(const std::map<std::string, std::size_t>& counts, std::size_t top_n) {
  std::vector<DomainCount> rows;
  for (const auto& [domain, count] : counts) rows.push_back({domain, count});
  std::stable_sort(rows.begin(), rows.end(), [](const DomainCount& a, const DomainCount& b) { return a.count > b.count; });
  if (rows.size() > top_n) rows.resize(top_n);
  return rows;
}

constexpr const char* kMimeNames[] = {"gif", "jpeg", "png", "svg", "other"};

}  // namespace

SampleSummary summarize(const Corpus& corpus, const DomainMode& mode, std::size_t top_n) {
  SampleSummary s;
  s.tally = corpus.tally;

  std::set<std::string> ok_sites;
  std::map<std::string, std::string> category_of;
  if (!corpus.sites.empty()) {
    s.domains_listed = corpus.sites.size();
    for (const auto& site : corpus.sites) {
      category_of[site.domain] = site.category;
      if (site.sampled_ok) ok_sites.insert(site.domain);
    }
  } else {
    std::set<std::string> listed;
    for (const auto& page : corpus.pages) {
      listed.insert(page.site_domain);
      category_of.emplace(page.site_domain, page.category);
      if (page.fetch_status.ok()) ok_sites.insert(page.site_domain);
    }
    s.domains_listed = listed.size();
  }
  s.domains_sampled_ok = ok_sites.size();

  std::map<std::string, CategoryRow> categories;
  for (const auto& domain : ok_sites) {
    const auto& name = category_of[domain];
    auto& row = categories[name];
    row.category = name;
    ++row.domains_ok;
  }

  s.mimes.resize(std::size(kMimeNames));
  for (std::size_t i = 0; i < s.mimes.size(); ++i) s.mimes[i].mime = kMimeNames[i];

  std::set<std::string> sites_with_one_by_one;
  std::map<std::string, std::size_t> referencing, referenced;
  for (const auto& image : corpus.images) {
    if (!image.qualified()) {
      ++s.parse_failures;
      continue;
    }
    const auto& page = corpus.page_of(image);
    const bool cross = is_cross_domain(page.final_url, image.resolved_url, mode);
    const bool beacon = image.is_invisible && cross;
    ++s.images_total;
    if (cross) ++s.cross_domain_images;
    if (image.is_invisible) {
      ++s.one_by_one_images;
      sites_with_one_by_one.insert(page.site_domain);
    }
    auto& mime_row = s.mimes[static_cast<std::size_t>(mime_class(image.mime))];
    ++mime_row.images;
    auto& category = categories[page.category];
    category.category = page.category;
    ++category.images;
    if (beacon) {
      ++s.one_by_one_cross_domain;
      ++mime_row.one_by_one_cross_domain;
      ++category.one_by_one_cross_domain;
      ++referencing[second_level_domain(page.site_domain, mode)];
      ++referenced[second_level_domain(image.resolved_url.host, mode)];
    }
  }
  s.domains_with_one_by_one = sites_with_one_by_one.size();
  for (auto& [name, row] : categories) s.categories.push_back(row);
  s.top_referencing = ranked(referencing, top_n);
  s.top_referenced = ranked(referenced, top_n);
  return s;
}

std::string percent(std::size_t part, std::size_t whole) {
  if (whole == 0) return "0.0";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.1f", 100.0 * double(part) / double(whole));
  return buffer;
}

std::string format_summary(const SampleSummary& s) {
  std::ostringstream out;
  auto line = [&](const std::string& label, std::size_t value, const std::string& note = "") {
    char buffer[128];
    std::snprintf(buffer, sizeof buffer, "%-46s %8zu", label.c_str(), value);
    out << buffer;
    if (!note.empty()) out << "  " << note;
    out << '\n';
  };
  out << "Sample characteristics\n";
  line("Domains sampled successfully", s.domains_sampled_ok,
       "(" + percent(s.domains_sampled_ok, s.domains_listed) + "% of " + std::to_string(s.domains_listed) + ")");
  line("All images from <img> tags", s.images_total);
  line("  From which cross-domain images", s.cross_domain_images, "(" + percent(s.cross_domain_images, s.images_total) + "%)");
  line("  From which 1x1 images", s.one_by_one_images, "(" + percent(s.one_by_one_images, s.images_total) + "%)");
  line("  From which 1x1 cross-domain images", s.one_by_one_cross_domain,
       "(" + percent(s.one_by_one_cross_domain, s.one_by_one_images) + "% of 1x1)");
  line("1x1 images that are not cross-domain", s.one_by_one_images - s.one_by_one_cross_domain,
       "(" + percent(s.one_by_one_images - s.one_by_one_cross_domain, s.one_by_one_images) + "% of 1x1)");
  line("Domains with at least one 1x1 image", s.domains_with_one_by_one,
       "(" + percent(s.domains_with_one_by_one, s.domains_sampled_ok) + "%)");
  line("Images failing header parsing (excluded)", s.parse_failures);

  char buffer[160];
  out << "\nMIME types\n";
  std::snprintf(buffer, sizeof buffer, "%-10s %8s %7s %10s %7s\n", "mime", "images", "%", "1x1 cross", "%");
  out << buffer;
  for (const auto& row : s.mimes) {
    std::snprintf(buffer, sizeof buffer, "%-10s %8zu %7s %10zu %7s\n", row.mime.c_str(), row.images,
                  percent(row.images, s.images_total).c_str(), row.one_by_one_cross_domain,
                  percent(row.one_by_one_cross_domain, s.one_by_one_cross_domain).c_str());
    out << buffer;
  }

  if (!(s.categories.size() == 1 && s.categories.front().category.empty())) {
    out << "\nCategories\n";
    std::snprintf(buffer, sizeof buffer, "%-16s %7s %8s %7s %10s %7s\n", "category", "domains", "images", "%",
                  "1x1 cross", "%");
    out << buffer;
    for (const auto& row : s.categories) {
      const std::string name = row.category.empty() ? "(none)" : row.category;
      std::snprintf(buffer, sizeof buffer, "%-16s %7zu %8zu %7s %10zu %7s\n", name.c_str(), row.domains_ok,
                    row.images, percent(row.images, s.images_total).c_str(), row.one_by_one_cross_domain,
                    percent(row.one_by_one_cross_domain, row.images).c_str());
      out << buffer;
    }
  }

  auto table = [&](const char* title, const std::vector<DomainCount>& rows) {
    out << '\n' << title << '\n';
    for (const auto& row : rows) {
      std::snprintf(buffer, sizeof buffer, "%-40s %6zu\n", row.domain.c_str(), row.count);
      out << buffer;
    }
  };
  table("Top referencing domains (1x1 cross-domain images)", s.top_referencing);
  table("Top referenced second-level domains (1x1 cross-domain images)", s.top_referenced);
  return out.str();
}

nlohmann::json to_json(const SampleSummary& s) {
  using nlohmann::json;
  json categories = json::array();
  for (const auto& row : s.categories) {
    categories.push_back({{"category", row.category},
                          {"domains_ok", row.domains_ok},
                          {"images", row.images},
                          {"one_by_one_cross_domain", row.one_by_one_cross_domain}});
  }
  json mimes = json::array();
  for (const auto& row : s.mimes) {
    mimes.push_back({{"mime", row.mime}, {"images", row.images}, {"one_by_one_cross_domain", row.one_by_one_cross_domain}});
  }
  auto domains = [](const std::vector<DomainCount>& rows) {
    json out = json::array();
    for (const auto& row : rows) out.push_back({{"domain", row.domain}, {"count", row.count}});
    return out;
  };
  return {{"domains_listed", s.domains_listed},
          {"domains_sampled_ok", s.domains_sampled_ok},
          {"images_total", s.images_total},
          {"cross_domain_images", s.cross_domain_images},
          {"one_by_one_images", s.one_by_one_images},
          {"one_by_one_cross_domain", s.one_by_one_cross_domain},
          {"parse_failures", s.parse_failures},
          {"domains_with_one_by_one", s.domains_with_one_by_one},
          {"categories", categories},
          {"mime", mimes},
          {"top_referencing", domains(s.top_referencing)},
          {"top_referenced", domains(s.top_referenced)},
          {"tally",
           {{"skipped_empty", s.tally.skipped_empty},
            {"skipped_data_uri", s.tally.skipped_data_uri},
            {"skipped_unresolvable", s.tally.skipped_unresolvable},
            {"image_fetch_errors", s.tally.image_fetch_errors},
            {"duplicate_images", s.tally.duplicate_images},
            {"robots_blocked", s.tally.robots_blocked}}}};
}

namespace {

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

}  // namespace

void write_report_files(const SampleSummary& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "summary.txt", format_summary(s));
  write_text(dir / "summary.json", to_json(s).dump(2) + "\n");

  std::ostringstream summary;
  summary << "metric,value\n"
          << "domains_sampled_ok," << s.domains_sampled_ok << '\n'
          << "images_total," << s.images_total << '\n'
          << "cross_domain_images," << s.cross_domain_images << '\n'
          << "one_by_one_images," << s.one_by_one_images << '\n'
          << "one_by_one_cross_domain," << s.one_by_one_cross_domain << '\n'
          << "parse_failures," << s.parse_failures << '\n';
  write_text(dir / "summary.csv", summary.str());

  std::ostringstream categories;
  categories << "category,domains_ok,images,images_pct,one_by_one_cross_domain,one_by_one_cross_domain_pct\n";
  for (const auto& row : s.categories) {
    categories << row.category << ',' << row.domains_ok << ',' << row.images << ',' << percent(row.images, s.images_total)
               << ',' << row.one_by_one_cross_domain << ',' << percent(row.one_by_one_cross_domain, row.images) << '\n';
  }
  write_text(dir / "categories.csv", categories.str());

  std::ostringstream mime;
  mime << "mime,images,images_pct,one_by_one_cross_domain,one_by_one_cross_domain_pct\n";
  for (const auto& row : s.mimes) {
    mime << row.mime << ',' << row.images << ',' << percent(row.images, s.images_total) << ','
         << row.one_by_one_cross_domain << ',' << percent(row.one_by_one_cross_domain, s.one_by_one_cross_domain)
         << '\n';
  }
  write_text(dir / "mime.csv", mime.str());

  auto domains = [&](const char* name, const std::vector<DomainCount>& rows) {
    std::ostringstream out;
    out << "domain,count\n";
    for (const auto& row : rows) out << row.domain << ',' << row.count << '\n';
    write_text(dir / name, out.str());
  };
  domains("top_referencing.csv", s.top_referencing);
  domains("top_referenced.csv", s.top_referenced);
}

}  // namespace beaconscan
