#include "beaconscan/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace beaconscan {

ClassCounts Dataset::counts() const {
  ClassCounts c;
  for (bool label : labels) (label ? c.positive : c.negative)++;
  return c;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.rows.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.rows.push_back(rows.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset Dataset::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> columns;
  for (const auto& name : names) {
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw std::invalid_argument("unknown feature column: " + name);
    columns.push_back(static_cast<std::size_t>(it - feature_names.begin()));
  }
  Dataset out;
  out.feature_names = names;
  out.labels = labels;
  out.rows.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<double> picked;
    picked.reserve(columns.size());
    for (std::size_t c : columns) picked.push_back(row.at(c));
    out.rows.push_back(std::move(picked));
  }
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  while (true) {
    const auto comma = line.find(',');
    cells.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return cells;
}

double parse_number(std::string_view cell, std::size_t line_no) {
  double value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": not a number: " + std::string(cell));
  }
  return value;
}

}  // namespace

Dataset Dataset::from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("feature CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header.back() != "label") {
    throw std::invalid_argument("feature CSV header must end with a label column");
  }
  Dataset data;
  for (std::size_t i = 0; i + 1 < header.size(); ++i) data.feature_names.emplace_back(header[i]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " cells");
    }
    std::vector<double> row;
    row.reserve(cells.size() - 1);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) row.push_back(parse_number(cells[i], line_no));
    const double label = parse_number(cells.back(), line_no);
    if (label != 0 && label != 1) throw std::invalid_argument("line " + std::to_string(line_no) + ": label not 0/1");
    data.rows.push_back(std::move(row));
    data.labels.push_back(label == 1);
  }
  return data;
}

void Dataset::validate() const {
  if (rows.size() != labels.size()) throw std::invalid_argument("rows and labels differ in length");
  for (const auto& row : rows) {
    if (row.size() != arity()) throw std::invalid_argument("ragged dataset row");
  }
}

double gini(ClassCounts counts) {
  const double n = static_cast<double>(counts.total());
  if (n == 0) return 0;
  const double p = counts.positive / n;
  const double q = counts.negative / n;
  return 1.0 - (p * p + q * q);
}

namespace {

using i128 = __int128;

// Split quality as the exact fraction num/den, where
//   num/den = (pL^2 + qL^2) / nL + (pR^2 + qR^2) / nR.
// Weighted child Gini is 1 - (num/den) / n, so a larger fraction is a
// larger impurity decrease.
struct Score {
  i128 num = 0;
  i128 den = 1;
  bool beats(const Score& other) const { return num * other.den > other.num * den; }
};

i128 square_sum(ClassCounts c) {
  return static_cast<i128>(c.positive) * c.positive + static_cast<i128>(c.negative) * c.negative;
}

Score split_score(ClassCounts left, ClassCounts right) {
  const i128 nl = left.total();
  const i128 nr = right.total();
  return {square_sum(left) * nr + square_sum(right) * nl, nl * nr};
}

double weighted_child_gini(ClassCounts left, ClassCounts right) {
  const double n = static_cast<double>(left.total() + right.total());
  return (left.total() / n) * gini(left) + (right.total() / n) * gini(right);
}

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2;
  return mid < hi ? mid : lo;
}

}  // namespace

std::optional<Split> best_split(const Dataset& data, const std::vector<std::size_t>& rows,
                                const std::vector<std::size_t>& features, std::size_t min_samples_leaf) {
  if (rows.size() < 2) return std::nullopt;
  const std::size_t leaf_min = std::max<std::size_t>(1, min_samples_leaf);

  ClassCounts parent;
  for (std::size_t r : rows) (data.labels[r] ? parent.positive : parent.negative)++;
  const Score parent_score{square_sum(parent), static_cast<i128>(parent.total())};

  std::vector<std::size_t> order = features;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  std::optional<Split> best;
  std::optional<ClassCounts> best_left;
  Score best_score = parent_score;
  std::vector<std::pair<double, bool>> column(rows.size());

  for (std::size_t f : order) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {data.rows[rows[i]][f], data.labels[rows[i]]};
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ClassCounts left;
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      (column[i].second ? left.positive : left.negative)++;
      if (!(column[i].first < column[i + 1].first)) continue;
      const ClassCounts right{parent.negative - left.negative, parent.positive - left.positive};
      if (left.total() < leaf_min || right.total() < leaf_min) continue;
      const Score score = split_score(left, right);
      if (score.beats(best_score)) {
        best_score = score;
        best = Split{f, midpoint(column[i].first, column[i + 1].first), 0};
        best_left = left;
      }
    }
  }
  if (best) {
    const ClassCounts right{parent.negative - best_left->negative, parent.positive - best_left->positive};
    best->impurity_decrease = gini(parent) - weighted_child_gini(*best_left, right);
  }
  return best;
}

bool Tree::predict(const std::vector<double>& row) const {
  std::size_t at = 0;
  while (!nodes_[at].is_leaf()) {
    const auto& node = nodes_[at];
    at = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[at].predicted;
}

std::size_t Tree::depth() const {
  std::size_t deepest = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack = {{0, 0}};
  while (!stack.empty()) {
    const auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes_[at].is_leaf()) {
      stack.push_back({nodes_[at].left, d + 1});
      stack.push_back({nodes_[at].right, d + 1});
    }
  }
  return deepest;
}

namespace {

struct Builder {
  const Dataset& data;
  const TreeConfig& config;
  std::vector<std::size_t> features;
  std::vector<Tree::Node>& nodes;

  std::size_t build(const std::vector<std::size_t>& rows, std::size_t depth) {
    const std::size_t index = nodes.size();
    nodes.emplace_back();
    ClassCounts counts;
    for (std::size_t r : rows) (data.labels[r] ? counts.positive : counts.negative)++;
    nodes[index].counts = counts;
    nodes[index].predicted = counts.positive > counts.negative;

    const bool pure = counts.positive == 0 || counts.negative == 0;
    const bool depth_capped = config.max_depth && depth >= *config.max_depth;
    if (pure || depth_capped || rows.size() < 2 * std::max<std::size_t>(1, config.min_samples_leaf)) return index;

    const auto split = best_split(data, rows, features, config.min_samples_leaf);
    if (!split) return index;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (data.rows[r][split->feature] <= split->threshold ? left_rows : right_rows).push_back(r);
    }
    const std::size_t left = build(left_rows, depth + 1);
    const std::size_t right = build(right_rows, depth + 1);
    nodes[index].feature = split->feature;
    nodes[index].threshold = split->threshold;
    nodes[index].left = left;
    nodes[index].right = right;
    return index;
  }
};

}  // namespace

Tree fit(const Dataset& data, const TreeConfig& config) {
  if (data.size() == 0) throw EmptyDataset("cannot fit a tree on an empty dataset");
  data.validate();
  Tree tree;
  std::vector<std::size_t> features(data.arity());
  std::iota(features.begin(), features.end(), 0);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  Builder{data, config, features, tree.nodes_}.build(rows, 0);
  return tree;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::next() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

std::uint64_t CounterRng::below(std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

Dataset under_sample(const Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < data.size(); ++i) (data.labels[i] ? positives : negatives).push_back(i);
  if (positives.empty() || negatives.empty()) throw SingleClass("under-sampling needs both classes present");

  const bool positive_minority = positives.size() <= negatives.size();
  std::vector<std::size_t> chosen = positive_minority ? positives : negatives;
  std::vector<std::size_t> majority = positive_minority ? negatives : positives;
  CounterRng rng(seed);
  rng.shuffle(majority);
  chosen.insert(chosen.end(), majority.begin(), majority.begin() + static_cast<std::ptrdiff_t>(chosen.size()));
  rng.shuffle(chosen);
  return data.subset(chosen);
}

double FoldMetrics::recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
double FoldMetrics::precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
double FoldMetrics::accuracy() const {
  const std::size_t total = tp + fp + tn + fn;
  return total == 0 ? 0.0 : double(tp + tn) / double(total);
}

std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k, bool stratified, std::uint64_t seed) {
  if (k < 2) throw TooFewRows("cross-validation needs k >= 2");
  const auto counts = data.counts();
  if (stratified && (counts.positive < k || counts.negative < k)) {
    throw TooFewRows("stratified " + std::to_string(k) + "-fold split needs at least " + std::to_string(k) +
                     " rows per class");
  }
  if (!stratified && data.size() < k) {
    throw TooFewRows(std::to_string(k) + "-fold split needs at least " + std::to_string(k) + " rows");
  }
  CounterRng rng(seed);
  std::vector<std::size_t> folds(data.size());
  auto deal = [&](std::vector<std::size_t> members) {
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) folds[members[j]] = j % k;
  };
  if (stratified) {
    std::vector<std::size_t> positives, negatives;
    for (std::size_t i = 0; i < data.size(); ++i) (data.labels[i] ? positives : negatives).push_back(i);
    deal(std::move(negatives));
    deal(std::move(positives));
  } else {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    deal(std::move(all));
  }
  return folds;
}

std::vector<FoldMetrics> cross_validate(const Dataset& data, std::uint64_t seed, const CvOptions& options,
                                        const Learner& learner) {
  const auto folds = assign_folds(data, options.k, options.stratified, seed);
  std::vector<FoldMetrics> metrics(options.k);
  for (std::size_t f = 0; f < options.k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < data.size(); ++i) (folds[i] == f ? test : train).push_back(i);
    const Predictor predict = learner(data.subset(train));
    auto& m = metrics[f];
    for (std::size_t i : test) {
      const bool guess = predict(data.rows[i]);
      if (data.labels[i]) {
        (guess ? m.tp : m.fn)++;
      } else {
        (guess ? m.fp : m.tn)++;
      }
    }
  }
  return metrics;
}

std::vector<FoldMetrics> cross_validate(const Dataset& data, std::uint64_t seed, const CvOptions& options) {
  const TreeConfig tree = options.tree;
  return cross_validate(data, seed, options, [tree](const Dataset& train) -> Predictor {
    auto model = std::make_shared<const Tree>(fit(train, tree));
    return [model](const std::vector<double>& row) { return model->predict(row); };
  });
}

MeanStd aggregate(const std::vector<std::vector<FoldMetrics>>& resamples, Aggregation mode,
                  double (FoldMetrics::*metric)() const) {
  std::vector<double> values;
  for (const auto& folds : resamples) {
    if (mode == Aggregation::pooled) {
      for (const auto& m : folds) values.push_back((m.*metric)());
    } else if (!folds.empty()) {
      double sum = 0;
      for (const auto& m : folds) sum += (m.*metric)();
      values.push_back(sum / double(folds.size()));
    }
  }
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0;
  for (double v : values) sum += v;
  out.mean = sum / double(values.size());
  double squares = 0;
  for (double v : values) squares += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(squares / double(values.size()));
  return out;
}

ExperimentReport experiment(const Dataset& data, const ExperimentConfig& config) {
  data.validate();
  const auto counts = data.counts();
  if (counts.positive == 0 || counts.negative == 0) throw SingleClass("experiment needs both classes present");

  ExperimentReport report;
  report.config = config;
  report.feature_names = data.feature_names;
  report.rows = data.size();
  report.class_counts = counts;
  report.resamples.resize(config.resamples);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t r = next.fetch_add(1);
      if (r >= config.resamples) return;
      try {
        const std::uint64_t seed = config.seed + r + 1;
        const Dataset balanced = under_sample(data, seed);
        report.resamples[r] = cross_validate(balanced, splitmix64(seed), config.cv);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.resamples;
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, config.resamples));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  report.recall = aggregate(report.resamples, config.aggregation, &FoldMetrics::recall);
  report.precision = aggregate(report.resamples, config.aggregation, &FoldMetrics::precision);
  report.accuracy = aggregate(report.resamples, config.aggregation, &FoldMetrics::accuracy);
  return report;
}

nlohmann::json to_json(const ExperimentReport& report) {
  using nlohmann::json;
  const auto& c = report.config;
  json config = {{"seed", c.seed},
                 {"resamples", c.resamples},
                 {"k", c.cv.k},
                 {"stratified", c.cv.stratified},
                 {"aggregation", c.aggregation == Aggregation::pooled ? "pooled" : "per_resample_mean"},
                 {"subset", c.subset_name},
                 {"max_depth", c.cv.tree.max_depth ? json(*c.cv.tree.max_depth) : json(nullptr)},
                 {"min_samples_leaf", c.cv.tree.min_samples_leaf},
                 {"filter_digest", c.filter_digest},
                 {"corpus_digest", c.corpus_digest}};
  auto pair = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json resamples = json::array();
  for (const auto& folds : report.resamples) {
    json row = json::array();
    for (const auto& m : folds) {
      row.push_back({{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}});
    }
    resamples.push_back(std::move(row));
  }
  return {{"config", config},
          {"features", report.feature_names},
          {"rows", report.rows},
          {"positives", report.class_counts.positive},
          {"negatives", report.class_counts.negative},
          {"recall", pair(report.recall)},
          {"precision", pair(report.precision)},
          {"accuracy", pair(report.accuracy)},
          {"folds", resamples}};
}

std::string format_results_table(const std::vector<std::pair<std::string, const ExperimentReport*>>& panels) {
  constexpr int kLabel = 12;
  constexpr int kCell = 11;
  std::ostringstream out;
  out << std::left << std::setw(kLabel) << "";
  for (const auto& [name, report] : panels) out << std::setw(2 * kCell) << name;
  out << '\n' << std::setw(kLabel) << "";
  for (std::size_t i = 0; i < panels.size(); ++i) out << std::setw(kCell) << "Mean" << std::setw(kCell) << "Std. dev.";
  out << '\n';
  const std::pair<const char*, MeanStd ExperimentReport::*> rows[] = {
      {"Recall", &ExperimentReport::recall},
      {"Precision", &ExperimentReport::precision},
      {"Accuracy", &ExperimentReport::accuracy}};
  out << std::fixed << std::setprecision(3);
  for (const auto& [label, member] : rows) {
    out << std::setw(kLabel) << label;
    for (const auto& [name, report] : panels) {
      const MeanStd& m = report->*member;
      out << std::setw(kCell) << m.mean << std::setw(kCell) << m.std;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> subset_columns(const std::string& subset, const std::vector<std::string>& all_columns) {
  if (subset == "all") return all_columns;
  if (subset == "blck_dtop") {
    std::vector<std::string> picked;
    for (const auto& name : all_columns) {
      if (name == "blck" || name.rfind("dtop_", 0) == 0) picked.push_back(name);
    }
    return picked;
  }
  throw std::invalid_argument("unknown feature subset: " + subset + " (expected all or blck_dtop)");
}

}  // namespace beaconscan
