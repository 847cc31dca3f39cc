// beaconscan: crawl sites, summarize their images, featurize and classify beacons.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "beaconscan/classifier.hpp"
#include "beaconscan/corpus.hpp"
#include "beaconscan/crawler.hpp"
#include "beaconscan/domain.hpp"
#include "beaconscan/features.hpp"
#include "beaconscan/filter_engine.hpp"
#include "beaconscan/report.hpp"

namespace fs = std::filesystem;
using namespace beaconscan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCorrupt = 2;

struct Globals {
  std::uint64_t seed = 0;
  std::string mode = "naive";
  std::string psl_file = std::string(BEACONSCAN_DATA_DIR) + "/public_suffix_list.dat";
  std::string filter_list;
  std::optional<int> depth;
  std::optional<double> timeout;
  std::optional<int> passes;
  bool mode_given = false;
};

DomainMode resolve_mode(const std::string& name, const std::string& psl_file) {
  if (name == "naive") return DomainMode::naive();
  if (name == "psl") {
    return DomainMode::suffix_list(std::make_shared<const SuffixTable>(SuffixTable::load(psl_file)));
  }
  throw ConfigError("unknown --mode " + name + " (expected naive or psl)");
}

void apply_overrides(CrawlConfig& config, const Globals& g) {
  if (g.depth) config.depth = *g.depth;
  if (g.timeout) config.timeout_seconds = *g.timeout;
  if (g.passes) config.passes = *g.passes;
  config.validate();
}

CrawlConfig load_crawl_config(const std::string& file, const Globals& g) {
  ConfigFile parsed = read_config_file(file);
  const std::string mode = g.mode_given ? g.mode : parsed.mode.value_or(g.mode);
  const std::string psl = parsed.psl_file && !g.mode_given ? *parsed.psl_file : g.psl_file;
  parsed.config.mode = resolve_mode(mode, psl);
  apply_overrides(parsed.config, g);
  return parsed.config;
}

void print_crawl_outcome(const Corpus& corpus, const DomainMode& mode) {
  for (const auto& site : corpus.sites) {
    if (site.sampled_ok) continue;
    std::cerr << "not sampled: " << site.domain << " [";
    for (std::size_t i = 0; i < site.pass_results.size(); ++i) std::cerr << (i ? " " : "") << site.pass_results[i];
    std::cerr << "]\n";
  }
  std::cout << format_summary(summarize(corpus, mode));
}

int run_crawl(const std::string& config_file, const std::string& out_dir, const Globals& g) {
  const CrawlConfig config = load_crawl_config(config_file, g);
  Crawler crawler(config);
  const Corpus corpus = crawler.run(out_dir);
  print_crawl_outcome(corpus, config.mode);
  return kExitOk;
}

int run_ingest(const std::string& snapshot_dir, const std::string& out_dir, const std::string& config_file,
               const Globals& g) {
  CrawlConfig config;
  if (!config_file.empty()) {
    config = load_crawl_config(config_file, g);
  } else {
    config.mode = resolve_mode(g.mode, g.psl_file);
    apply_overrides(config, g);
  }
  Crawler crawler(config);
  const Corpus corpus = crawler.ingest(snapshot_dir, out_dir);
  print_crawl_outcome(corpus, config.mode);
  return kExitOk;
}

int run_report(const std::string& corpus_dir, const std::string& out_dir, const Globals& g) {
  const DomainMode mode = resolve_mode(g.mode, g.psl_file);
  Corpus corpus = corpus_io::load(corpus_dir);
  corpus.reclassify(mode);
  const SampleSummary summary = summarize(corpus, mode);
  std::cout << format_summary(summary);
  const fs::path target = out_dir.empty() ? fs::path(corpus_dir) / "report" : fs::path(out_dir);
  write_report_files(summary, target);
  std::cout << "\nreport files written to " << target.string() << '\n';
  return kExitOk;
}

struct FeaturizeFlags {
  bool digit_tokens = false;
  bool qdom_raw = false;
  bool qdom_full_hosts = false;
  bool strict_lowercase = false;
};

int run_featurize(const std::string& corpus_dir, const std::string& out_csv, const Globals& g,
                  const FeaturizeFlags& flags) {
  if (g.filter_list.empty()) throw ConfigError("featurize needs --filter-list");
  const DomainMode mode = resolve_mode(g.mode, g.psl_file);
  Corpus corpus = corpus_io::load(corpus_dir);
  corpus.reclassify(mode);
  const FilterSet filters = FilterSet::load(g.filter_list, MatchOptions{flags.strict_lowercase});

  FeatureOptions options;
  options.digit_count = flags.digit_tokens ? DigitCount::tokens : DigitCount::characters;
  options.qdom_percent_decode = !flags.qdom_raw;
  options.qdom_full_hosts = flags.qdom_full_hosts;
  FeatureMatrix matrix = featurize_corpus(corpus, filters, mode, options);
  matrix.corpus_digest = corpus_io::digest_of(corpus_dir);

  const fs::path csv(out_csv);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + out_csv);
  write_feature_csv(out, matrix.vectors);
  out.close();
  write_feature_manifest(out_csv + ".manifest.json", matrix);

  std::size_t positives = 0;
  for (const auto& v : matrix.vectors) positives += v.label;
  std::cout << "rows " << matrix.vectors.size() << ", beacons " << positives << ", top domains:";
  for (const auto& entry : matrix.top.entries) std::cout << ' ' << entry.domain << '(' << entry.count << ')';
  std::cout << "\nfilter rules " << filters.blocking().size() << " blocking, " << filters.exceptions().size()
            << " exceptions, " << filters.skipped() << " skipped\n";
  return kExitOk;
}

struct ExperimentFlags {
  std::size_t resamples = 250;
  std::size_t k = 10;
  std::string panel = "both";
  std::string aggregation = "pooled";
  bool non_stratified = false;
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_leaf = 1;
  std::size_t threads = 0;
  std::string out_dir;
};

int run_experiment(const std::string& features_csv, const Globals& g, const ExperimentFlags& flags) {
  std::ifstream in(features_csv);
  if (!in) throw ConfigError("cannot read " + features_csv);
  const Dataset full = Dataset::from_csv(in);

  ExperimentConfig config;
  config.resamples = flags.resamples;
  config.cv.k = flags.k;
  config.cv.stratified = !flags.non_stratified;
  config.cv.tree.max_depth = flags.max_depth;
  config.cv.tree.min_samples_leaf = flags.min_samples_leaf;
  config.cv.tree.seed = g.seed;
  config.seed = g.seed;
  config.threads = flags.threads;
  if (flags.aggregation == "pooled") {
    config.aggregation = Aggregation::pooled;
  } else if (flags.aggregation == "per-resample") {
    config.aggregation = Aggregation::per_resample_mean;
  } else {
    throw ConfigError("unknown --aggregation " + flags.aggregation);
  }
  std::ifstream manifest_in(features_csv + ".manifest.json");
  if (manifest_in) {
    const auto manifest = nlohmann::json::parse(manifest_in, nullptr, false);
    if (manifest.is_object()) {
      config.filter_digest = manifest.value("filter_digest", "");
      config.corpus_digest = manifest.value("corpus_digest", "");
    }
  }

  std::vector<std::string> subsets;
  if (flags.panel == "both") subsets = {"blck_dtop", "all"};
  else subsets = {flags.panel};

  std::vector<ExperimentReport> reports;
  for (const auto& subset : subsets) {
    ExperimentConfig panel = config;
    panel.subset_name = subset;
    reports.push_back(experiment(full.select_columns(subset_columns(subset, full.feature_names)), panel));
  }

  std::vector<std::pair<std::string, const ExperimentReport*>> panels;
  nlohmann::json json = {{"seed", g.seed}, {"panels", nlohmann::json::object()}};
  for (const auto& report : reports) {
    const std::string title = report.config.subset_name == "all" ? "All features" : "BLCK and DTOP only";
    panels.emplace_back(title, &report);
    json["panels"][report.config.subset_name] = to_json(report);
  }
  const std::string table = format_results_table(panels);
  std::cout << table;

  const fs::path out_dir = flags.out_dir.empty() ? fs::path(features_csv).parent_path() : fs::path(flags.out_dir);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  std::ofstream json_out(out_dir / "experiment.json", std::ios::binary | std::ios::trunc);
  std::ofstream table_out(out_dir / "experiment.txt", std::ios::binary | std::ios::trunc);
  if (!json_out || !table_out) throw ConfigError("cannot write experiment report to " + out_dir.string());
  json_out << json.dump(2) << '\n';
  table_out << table;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survey image beacons on web sites and classify them"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--mode", g.mode, "Domain comparison: naive (last two labels) or psl")
      ->check(CLI::IsMember({"naive", "psl"}))
      ->each([&](const std::string&) { g.mode_given = true; });
  app.add_option("--psl-file", g.psl_file, "Public suffix list for --mode psl");
  app.add_option("--filter-list", g.filter_list, "Adblock Plus filter list for BLCK");
  app.add_option("--depth", g.depth, "Frontier depth below the primary page");
  app.add_option("--timeout", g.timeout, "Per-request time budget in seconds");
  app.add_option("--passes", g.passes, "Crawl passes");

  std::string config_file, out_dir, corpus_dir, snapshot_dir, out_csv, features_csv, report_out;

  auto* crawl = app.add_subcommand("crawl", "Crawl the configured sites into a corpus directory");
  crawl->add_option("config", config_file, "JSON crawl config")->required();
  crawl->add_option("out-dir", out_dir, "Corpus output directory")->envname("BEACONSCAN_OUT_DIR")->required();

  std::string ingest_config;
  auto* ingest = app.add_subcommand("ingest", "Build a corpus from rendered page snapshots");
  ingest->add_option("snapshots", snapshot_dir, "Directory of <site>/<page-id>.html plus meta.json")->required();
  ingest->add_option("out-dir", out_dir, "Corpus output directory")->envname("BEACONSCAN_OUT_DIR")->required();
  ingest->add_option("--config", ingest_config, "Crawl config for categories and fetch settings");

  auto* report = app.add_subcommand("report", "Summarize a corpus");
  report->add_option("corpus", corpus_dir, "Corpus directory")->required();
  report->add_option("--out", report_out, "Directory for CSV/JSON tables (default <corpus>/report)")
      ->envname("BEACONSCAN_OUT_DIR");

  FeaturizeFlags featurize_flags;
  auto* featurize = app.add_subcommand("featurize", "Write the feature matrix of a corpus");
  featurize->add_option("corpus", corpus_dir, "Corpus directory")->required();
  featurize->add_option("out-csv", out_csv, "Feature CSV path")->required();
  featurize->add_flag("--digit-tokens", featurize_flags.digit_tokens, "UNUM counts digit runs, not digits");
  featurize->add_flag("--qdom-raw", featurize_flags.qdom_raw, "Do not percent-decode queries for QDOM");
  featurize->add_flag("--qdom-full-hosts", featurize_flags.qdom_full_hosts, "QDOM matches full page hosts");
  featurize->add_flag("--strict-lowercase", featurize_flags.strict_lowercase, "Match filter paths case-insensitively");

  ExperimentFlags experiment_flags;
  auto* exp = app.add_subcommand("experiment", "Under-sampled cross-validated decision-tree experiment");
  exp->add_option("features", features_csv, "Feature CSV from featurize")->required();
  exp->add_option("--resamples", experiment_flags.resamples, "Balanced resamples")->capture_default_str();
  exp->add_option("-k,--folds", experiment_flags.k, "Cross-validation folds")->capture_default_str();
  exp->add_option("--panel,--subset", experiment_flags.panel, "all, blck_dtop or both")
      ->check(CLI::IsMember({"all", "blck_dtop", "both"}))
      ->capture_default_str();
  exp->add_option("--aggregation", experiment_flags.aggregation, "pooled or per-resample")
      ->check(CLI::IsMember({"pooled", "per-resample"}))
      ->capture_default_str();
  exp->add_flag("--non-stratified", experiment_flags.non_stratified, "Plain shuffled folds");
  exp->add_option("--max-depth", experiment_flags.max_depth, "Tree depth limit");
  exp->add_option("--min-samples-leaf", experiment_flags.min_samples_leaf, "Minimum rows per leaf");
  exp->add_option("--threads", experiment_flags.threads, "Worker threads (0: all cores)");
  exp->add_option("--out", experiment_flags.out_dir, "Directory for experiment.json and experiment.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    const int code = app.exit(error);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*crawl) return run_crawl(config_file, out_dir, g);
    if (*ingest) return run_ingest(snapshot_dir, out_dir, ingest_config, g);
    if (*report) return run_report(corpus_dir, report_out, g);
    if (*featurize) return run_featurize(corpus_dir, out_csv, g, featurize_flags);
    if (*exp) return run_experiment(features_csv, g, experiment_flags);
  } catch (const CorruptCorpus& error) {
    std::cerr << "corrupt corpus: " << error.what() << '\n';
    return kExitCorrupt;
  } catch (const SingleClass& error) {
    std::cerr << "error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
