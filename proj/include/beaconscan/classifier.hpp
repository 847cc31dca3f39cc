#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace beaconscan {

class EmptyDataset : public std::runtime_error {
 public:
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

class SingleClass : public std::runtime_error {
 public:
  explicit SingleClass(const std::string& what) : std::runtime_error(what) {}
};

class TooFewRows : public std::runtime_error {
 public:
  explicit TooFewRows(const std::string& what) : std::runtime_error(what) {}
};

struct ClassCounts {
  std::size_t negative = 0;
  std::size_t positive = 0;
  std::size_t total() const { return negative + positive; }
  bool operator==(const ClassCounts&) const = default;
};

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;
  std::vector<bool> labels;

  std::size_t size() const { return rows.size(); }
  std::size_t arity() const { return feature_names.size(); }
  ClassCounts counts() const;

  /// Rows at `indices`, in that order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// Keeps the named columns in the given order; throws std::invalid_argument
  /// on unknown names.
  Dataset select_columns(const std::vector<std::string>& names) const;

  /// Header row of feature names with a trailing `label` column.
  static Dataset from_csv(std::istream& in);
  /// Throws std::invalid_argument on ragged rows or non-binary labels.
  void validate() const;
};

double gini(ClassCounts counts);

struct Split {
  std::size_t feature = 0;
  double threshold = 0;
  double impurity_decrease = 0;
};

/// Exhaustive CART split search over `rows` of `data`. Candidate thresholds
/// are midpoints of consecutive distinct values; rows with value <= threshold
/// go left. Scores are compared exactly, so ties resolve to the lowest
/// feature index and then the lowest threshold.
std::optional<Split> best_split(const Dataset& data, const std::vector<std::size_t>& rows,
                                const std::vector<std::size_t>& features, std::size_t min_samples_leaf = 1);

struct TreeConfig {
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_leaf = 1;
  /// Recorded for the manifest; split search has no random component.
  std::uint64_t seed = 0;
};

class Tree {
 public:
  struct Node {
    ClassCounts counts;
    bool predicted = false;
    // Split nodes only; leaves keep left == right == 0.
    std::size_t feature = 0;
    double threshold = 0;
    std::size_t left = 0;
    std::size_t right = 0;
    bool is_leaf() const { return left == 0; }
  };

  bool predict(const std::vector<double>& row) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  std::size_t depth() const;

 private:
  friend Tree fit(const Dataset& data, const TreeConfig& config);
  std::vector<Node> nodes_;
};

/// Greedy recursive CART with Gini impurity. Leaves predict the majority
/// class; an even count predicts false.
Tree fit(const Dataset& data, const TreeConfig& config = {});

/// splitmix64 keyed by seed; the i-th output depends only on (seed, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, bound) by rejection; bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Keeps every minority row and an equal-sized uniform sample of the majority,
/// shuffled. Balanced inputs come back permuted.
Dataset under_sample(const Dataset& data, std::uint64_t seed);

struct FoldMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double recall() const;
  double precision() const;
  double accuracy() const;
};

using Predictor = std::function<bool(const std::vector<double>&)>;
using Learner = std::function<Predictor(const Dataset& train)>;

struct CvOptions {
  std::size_t k = 10;
  bool stratified = true;
  TreeConfig tree;
};

/// Fold index per row. Stratified assignment deals each shuffled class
/// round-robin from fold 0, so balanced data gives balanced folds.
std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k, bool stratified, std::uint64_t seed);

std::vector<FoldMetrics> cross_validate(const Dataset& data, std::uint64_t seed, const CvOptions& options = {});
std::vector<FoldMetrics> cross_validate(const Dataset& data, std::uint64_t seed, const CvOptions& options,
                                        const Learner& learner);

enum class Aggregation { pooled, per_resample_mean };

struct ExperimentConfig {
  std::size_t resamples = 250;
  CvOptions cv;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::pooled;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::string subset_name = "all";
  std::string filter_digest;
  std::string corpus_digest;
};

struct MeanStd {
  double mean = 0;
  double std = 0;  // population standard deviation
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> feature_names;
  std::size_t rows = 0;
  ClassCounts class_counts;
  std::vector<std::vector<FoldMetrics>> resamples;  // [resample][fold]
  MeanStd recall, precision, accuracy;
};

ExperimentReport experiment(const Dataset& data, const ExperimentConfig& config);

/// Mean and population std of one metric under the report's aggregation mode.
MeanStd aggregate(const std::vector<std::vector<FoldMetrics>>& resamples, Aggregation mode,
                  double (FoldMetrics::*metric)() const);

nlohmann::json to_json(const ExperimentReport& report);

/// Fixed-width Recall/Precision/Accuracy table with one mean/std column pair
/// per panel.
std::string format_results_table(const std::vector<std::pair<std::string, const ExperimentReport*>>& panels);

/// Column subsets understood by the experiment command.
std::vector<std::string> subset_columns(const std::string& subset, const std::vector<std::string>& all_columns);

}  // namespace beaconscan
