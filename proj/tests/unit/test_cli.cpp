#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "fixture_server.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

fs::path workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "beaconscan_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::string& args, const std::string& env = "") {
  const auto log = workdir() / "last.log";
  const std::string command = env + " \"" BEACONSCAN_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(command.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::string q(const fs::path& path) { return "\"" + path.string() + "\""; }

fixture::FixtureServer& server() {
  static fixture::FixtureServer instance;
  return instance;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("--help").code == 0);
  CHECK(cli("report").code == 1);
  CHECK(cli("crawl " + q(workdir() / "missing.json") + " " + q(workdir() / "out")).code == 1);
  CHECK(cli("--mode bogus report " + q(workdir())).code != 0);
}

TEST_CASE("empty domain list gives an empty corpus") {
  const auto dir = workdir() / "empty";
  fs::create_directories(dir);
  std::ofstream(dir / "sites.csv") << "domain,category\n";
  std::ofstream(dir / "config.json") << R"({"domains": "sites.csv"})";
  const auto run = cli("crawl " + q(dir / "config.json") + " " + q(dir / "corpus"));
  CHECK(run.code == 0);
  CHECK(fs::exists(dir / "corpus" / "pages.jsonl"));
  const auto report = cli("report " + q(dir / "corpus"));
  CHECK(report.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "corpus" / "report" / "summary.json"));
  CHECK(summary["images_total"] == 0);
  CHECK(summary["domains_listed"] == 0);
}

TEST_CASE("unwritable output directory exits 1 with a diagnostic") {
  const auto dir = workdir() / "unwritable";
  fs::create_directories(dir);
  std::ofstream(dir / "sites.csv") << "domain\n";
  std::ofstream(dir / "config.json") << R"({"domains": "sites.csv"})";
  std::ofstream(dir / "plain-file") << "x";
  const auto run = cli("crawl " + q(dir / "config.json") + " " + q(dir / "plain-file" / "corpus"));
  CHECK(run.code == 1);
  CHECK(run.output.find("error") != std::string::npos);
}

TEST_CASE("corrupt corpus exits 2") {
  const auto dir = workdir() / "corrupt";
  fs::create_directories(dir);
  std::ofstream(dir / "pages.jsonl") << "{\"broken\": \n";
  std::ofstream(dir / "images.jsonl") << "";
  const auto run = cli("report " + q(dir));
  CHECK(run.code == 2);
  CHECK(run.output.find("corrupt") != std::string::npos);
}

TEST_CASE("crawl, report, featurize and experiment against the fixture sites") {
  server().reset();
  const auto dir = workdir() / "pipeline";
  const auto config = server().write_config(dir);
  const auto corpus = dir / "corpus";

  // The output directory may come from the environment.
  const auto crawl = cli("crawl " + q(config), "BEACONSCAN_OUT_DIR=" + q(corpus));
  REQUIRE_MESSAGE(crawl.code == 0, crawl.output);
  const auto report = cli("report " + q(corpus) + " --out " + q(dir / "tables"));
  REQUIRE(report.code == 0);
  CHECK(report.output.find("Sample characteristics") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(dir / "tables" / "summary.json"));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(BEACONSCAN_FIXTURES) / "fixture_sites" / "manifest.json"));
  CHECK(summary["images_total"] == manifest["images_total"]);
  CHECK(summary["one_by_one_cross_domain"] == manifest["one_by_one_cross_domain"]);

  const auto psl = cli("--mode psl report " + q(corpus) + " --out " + q(dir / "psl"));
  CHECK(psl.code == 0);

  const std::string filters = BEACONSCAN_FIXTURES "/filters/easylist_snapshot.txt";
  CHECK(cli("featurize " + q(corpus) + " " + q(dir / "f.csv")).code == 1);  // --filter-list is required
  const auto featurize = cli("--filter-list " + q(filters) + " featurize " + q(corpus) + " " + q(dir / "f.csv"));
  REQUIRE_MESSAGE(featurize.code == 0, featurize.output);
  const auto features = slurp(dir / "f.csv");
  CHECK(features.rfind("qurl,qdom,unum,", 0) == 0);
  CHECK(std::count(features.begin(), features.end(), '\n') == 601);
  const auto feature_manifest = nlohmann::json::parse(slurp(dir / "f.csv.manifest.json"));
  CHECK(feature_manifest["positives"] == 30);

  const std::string experiment = "--seed 7 experiment " + q(dir / "f.csv") + " --resamples 12 --threads 4 --out ";
  REQUIRE(cli(experiment + q(dir / "e1")).code == 0);
  REQUIRE(cli(experiment + q(dir / "e2")).code == 0);
  CHECK(slurp(dir / "e1" / "experiment.json") == slurp(dir / "e2" / "experiment.json"));
  CHECK(slurp(dir / "e1" / "experiment.txt") == slurp(dir / "e2" / "experiment.txt"));
  const auto text = slurp(dir / "e1" / "experiment.txt");
  CHECK(text.find("Recall") != std::string::npos);
  CHECK(text.find("Accuracy") != std::string::npos);

  const auto other_seed = cli("--seed 8 experiment " + q(dir / "f.csv") + " --resamples 12 --out " + q(dir / "e3"));
  CHECK(other_seed.code == 0);
}

TEST_CASE("experiment on a single-class matrix exits 1") {
  const auto csv = workdir() / "single.csv";
  std::ofstream(csv) << "qurl,blck,label\n1,0,0\n0,1,0\n1,1,0\n";
  const auto run = cli("experiment " + q(csv) + " --panel all --out " + q(workdir() / "single"));
  CHECK(run.code == 1);
  CHECK(run.output.find("error") != std::string::npos);
}

TEST_CASE("ingest builds a corpus from snapshots") {
  server().reset();
  const auto dir = workdir() / "ingest";
  const auto config = server().write_config(dir);
  const auto run = cli("ingest " + q(fs::path(BEACONSCAN_FIXTURES) / "snapshots") + " " + q(dir / "corpus") +
                       " --config " + q(config));
  REQUIRE_MESSAGE(run.code == 0, run.output);
  CHECK(cli("report " + q(dir / "corpus")).code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "corpus" / "report" / "summary.json"));
  CHECK(summary["images_total"] == 3);
  CHECK(summary["one_by_one_cross_domain"] == 2);
}
