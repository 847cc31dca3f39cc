#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "beaconscan/classifier.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace beaconscan;

namespace {

Dataset table(std::vector<std::vector<double>> rows, std::vector<bool> labels) {
  Dataset data;
  for (std::size_t f = 0; f < rows.front().size(); ++f) data.feature_names.push_back("f" + std::to_string(f));
  data.rows = std::move(rows);
  data.labels = std::move(labels);
  return data;
}

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<std::size_t> all_features(const Dataset& data) {
  std::vector<std::size_t> features(data.arity());
  std::iota(features.begin(), features.end(), 0);
  return features;
}

Dataset imbalanced(std::size_t positives, std::size_t negatives) {
  Dataset data;
  data.feature_names = {"id"};
  for (std::size_t i = 0; i < positives + negatives; ++i) {
    data.rows.push_back({static_cast<double>(i)});
    data.labels.push_back(i < positives);
  }
  return data;
}

Learner constant(bool answer) {
  return [answer](const Dataset&) -> Predictor { return [answer](const std::vector<double>&) { return answer; }; };
}

}  // namespace

TEST_CASE("gini") {
  CHECK(gini({10, 0}) == 0.0);
  CHECK(gini({5, 5}) == 0.5);
  CHECK(gini({3, 1}) == doctest::Approx(0.375));
  CHECK(gini({0, 0}) == 0.0);
}

TEST_CASE("best split examples") {
  const auto separable = table({{0, 5}, {0, 1}, {1, 5}, {1, 2}}, {false, false, true, true});
  const auto split = best_split(separable, all_rows(separable), all_features(separable));
  REQUIRE(split.has_value());
  CHECK(split->feature == 0);
  CHECK(split->threshold == 0.5);
  CHECK(split->impurity_decrease == doctest::Approx(0.5));

  const auto identical = table({{1, 1}, {1, 1}, {1, 1}}, {true, false, true});
  CHECK_FALSE(best_split(identical, all_rows(identical), all_features(identical)).has_value());

  const auto toy = table({{1, 3}, {2, 1}, {3, 2}, {4, 4}}, {false, true, true, false});
  const auto fast = best_split(toy, all_rows(toy), all_features(toy));
  const auto slow = fixture::brute_force_split(toy);
  REQUIRE(fast.has_value());
  REQUIRE(slow.has_value());
  CHECK(fast->feature == slow->feature);
  CHECK(fast->threshold == slow->threshold);
  CHECK(fast->impurity_decrease == doctest::Approx(slow->gain));

  // A leaf-size floor rules out the only pure split.
  const auto edge = table({{0}, {1}, {1}, {1}}, {true, false, false, false});
  CHECK(best_split(edge, all_rows(edge), {0}, 1).has_value());
  CHECK_FALSE(best_split(edge, all_rows(edge), {0}, 2).has_value());

  // Only the listed rows and features take part.
  CHECK_FALSE(best_split(separable, {0, 1}, {0, 1}).has_value());
  const auto restricted = best_split(separable, all_rows(separable), {1});
  REQUIRE(restricted.has_value());
  CHECK(restricted->feature == 1);
}

TEST_CASE("best split agrees with brute force on generated tables") {
  const auto result = fixture::best_split_matches_brute_force(99, 1000);
  INFO(result.first_failure);
  CHECK(result.ok());
}

TEST_CASE("fit") {
  const auto separable = table({{0.1, 3}, {0.4, 1}, {0.35, 7}, {0.8, 2}, {0.9, 9}, {0.7, 0}},
                               {false, false, false, true, true, true});
  CHECK(fixture::training_accuracy(separable) == 1.0);

  const auto single = table({{4, 2}}, {true});
  const auto leaf = fit(single);
  CHECK(leaf.nodes().size() == 1);
  CHECK(leaf.predict({0, 0}));
  CHECK(leaf.depth() == 0);

  // Balanced XOR has no first split that lowers impurity, so greedy CART stops at the root.
  const auto xor_table = table({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {false, true, true, false});
  CHECK(fit(xor_table).depth() == 0);
  const auto nested = table({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 0}, {0, 1}}, {false, false, true, false, false, false});
  CHECK(fit(nested).depth() == 2);
  CHECK(fixture::training_accuracy(nested) == 1.0);
  CHECK(fit(nested, TreeConfig{1, 1, 0}).depth() == 1);

  const auto tie = table({{1}, {1}}, {true, false});
  CHECK_FALSE(fit(tie).predict({1}));

  CHECK_THROWS_AS(fit(Dataset{}), EmptyDataset);
}

TEST_CASE("fit agrees with a naive CART on 20-row tables") {
  const auto result = fixture::fit_matches_naive_cart(31, 300);
  INFO(result.first_failure);
  CHECK(result.ok());
}

TEST_CASE("counter RNG") {
  CounterRng a(42), b(42), c(43);
  const auto first = a.next();
  CHECK(first == b.next());
  CHECK(first != c.next());
  CounterRng bounded(1);
  for (int i = 0; i < 1000; ++i) CHECK(bounded.below(7) < 7);
  std::vector<int> items = {1, 2, 3, 4, 5};
  CounterRng shuffler(9);
  shuffler.shuffle(items);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("under-sampling") {
  const auto data = imbalanced(235, 30337);
  const auto balanced = under_sample(data, 1);
  CHECK(balanced.size() == 470);
  CHECK(balanced.counts() == ClassCounts{235, 235});

  auto ids = [](const Dataset& d, bool label) {
    std::set<double> out;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.labels[i] == label) out.insert(d.rows[i][0]);
    }
    return out;
  };
  const auto other = under_sample(data, 2);
  CHECK(ids(balanced, true) == ids(other, true));
  CHECK(ids(balanced, false) != ids(other, false));
  CHECK(ids(balanced, true) == ids(data, true));

  const auto even = imbalanced(20, 20);
  const auto permuted = under_sample(even, 3);
  CHECK(permuted.size() == 40);
  CHECK(ids(permuted, true) == ids(even, true));
  CHECK(ids(permuted, false) == ids(even, false));
  CHECK(permuted.rows != even.rows);

  CHECK(under_sample(data, 1).rows == balanced.rows);
  CHECK_THROWS_AS(under_sample(imbalanced(0, 10), 1), SingleClass);
}

TEST_CASE("fold assignment") {
  const auto data = imbalanced(30, 50);
  const auto folds = assign_folds(data, 10, true, 5);
  std::vector<ClassCounts> per_fold(10);
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data.labels[i] ? per_fold[folds[i]].positive : per_fold[folds[i]].negative)++;
  }
  for (const auto& counts : per_fold) {
    CHECK(counts.positive == 3);
    CHECK(counts.negative == 5);
  }
  CHECK(assign_folds(data, 10, true, 5) == folds);
  CHECK_THROWS_AS(assign_folds(imbalanced(5, 50), 10, true, 1), TooFewRows);
  CHECK_NOTHROW(assign_folds(imbalanced(5, 50), 10, false, 1));
  CHECK_THROWS_AS(assign_folds(imbalanced(2, 3), 10, false, 1), TooFewRows);
  CHECK_THROWS_AS(assign_folds(data, 1, true, 1), TooFewRows);
}

TEST_CASE("cross-validation") {
  const auto data = fixture::planted_matrix(100, 100, 4);
  const auto folds = cross_validate(data, 8);
  REQUIRE(folds.size() == 10);
  for (const auto& fold : folds) {
    CHECK(fold.accuracy() == 1.0);
    CHECK(fold.recall() == 1.0);
    CHECK(fold.precision() == 1.0);
  }

  const auto never = cross_validate(data, 8, CvOptions{}, constant(false));
  for (const auto& fold : never) {
    CHECK(fold.accuracy() == 0.5);
    CHECK(fold.recall() == 0.0);
    CHECK(fold.precision() == 0.0);
  }

  const auto noisy = fixture::permute_labels(data, 1);
  const auto once = cross_validate(noisy, 8);
  const auto twice = cross_validate(noisy, 8);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i].tp == twice[i].tp);
    CHECK(once[i].fp == twice[i].fp);
    CHECK(once[i].tn == twice[i].tn);
    CHECK(once[i].fn == twice[i].fn);
  }
}

TEST_CASE("experiment") {
  const auto data = fixture::planted_matrix(60, 400, 12);
  ExperimentConfig config;
  config.resamples = 20;
  config.seed = 7;
  config.threads = 1;
  const auto serial = experiment(data, config);
  config.threads = 8;
  const auto parallel = experiment(data, config);
  CHECK(to_json(serial).dump() == to_json(parallel).dump());
  CHECK(serial.resamples.size() == 20);
  CHECK(serial.rows == 460);
  CHECK(serial.class_counts == ClassCounts{400, 60});
  CHECK(serial.accuracy.mean >= 0.95);

  config.aggregation = Aggregation::per_resample_mean;
  const auto averaged = experiment(data, config);
  CHECK(averaged.accuracy.mean == doctest::Approx(serial.accuracy.mean));
  CHECK(averaged.accuracy.std <= serial.accuracy.std + 1e-12);

  const auto json = to_json(serial);
  for (const char* key : {"config", "features", "rows", "recall", "precision", "accuracy", "folds"}) {
    CHECK_MESSAGE(json.contains(key), key);
  }
  CHECK(json["folds"].size() == 20);

  const auto text = format_results_table({{"BLCK+DTOP", &serial}, {"All features", &parallel}});
  CHECK(text.find("Recall") != std::string::npos);
  CHECK(text.find("Std. dev.") != std::string::npos);
  CHECK(text.find("Accuracy") != std::string::npos);

  CHECK_THROWS_AS(experiment(imbalanced(0, 30), config), SingleClass);
}

TEST_CASE("label-permuted data scores like a coin") {
  const auto data = fixture::permute_labels(fixture::planted_matrix(235, 1000, 3), 3);
  ExperimentConfig config;
  config.resamples = 40;
  config.seed = 11;
  const auto report = experiment(data, config);
  CHECK(std::abs(report.accuracy.mean - 0.5) <= 0.05);
}

TEST_CASE("aggregation arithmetic") {
  std::vector<std::vector<FoldMetrics>> resamples = {{{1, 0, 1, 0}, {0, 0, 1, 1}}, {{1, 1, 0, 0}, {1, 0, 1, 0}}};
  const auto pooled = aggregate(resamples, Aggregation::pooled, &FoldMetrics::accuracy);
  CHECK(pooled.mean == doctest::Approx(0.75));
  CHECK(pooled.std == doctest::Approx(std::sqrt(0.0625)));
  const auto per = aggregate(resamples, Aggregation::per_resample_mean, &FoldMetrics::accuracy);
  CHECK(per.mean == doctest::Approx(0.75));
  CHECK(per.std == doctest::Approx(0.0));
}

TEST_CASE("dataset plumbing") {
  std::istringstream csv("a,b,label\n1,2.5,1\r\n0,-1,0\n\n");
  const auto data = Dataset::from_csv(csv);
  CHECK(data.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(data.rows == std::vector<std::vector<double>>{{1, 2.5}, {0, -1}});
  CHECK(data.labels == std::vector<bool>{true, false});
  CHECK(data.select_columns({"b"}).rows == std::vector<std::vector<double>>{{2.5}, {-1}});
  CHECK_THROWS_AS(data.select_columns({"c"}), std::invalid_argument);
  CHECK(data.subset({1}).labels == std::vector<bool>{false});

  std::istringstream no_label("a,b\n1,2\n");
  CHECK_THROWS_AS(Dataset::from_csv(no_label), std::invalid_argument);
  std::istringstream ragged("a,label\n1\n");
  CHECK_THROWS_AS(Dataset::from_csv(ragged), std::invalid_argument);
  std::istringstream bad_label("a,label\n1,2\n");
  CHECK_THROWS_AS(Dataset::from_csv(bad_label), std::invalid_argument);
  std::istringstream bad_cell("a,label\nx,1\n");
  CHECK_THROWS_AS(Dataset::from_csv(bad_cell), std::invalid_argument);

  const std::vector<std::string> columns = {"qurl", "blck", "mage", "dtop_1", "dtop_5"};
  CHECK(subset_columns("blck_dtop", columns) == std::vector<std::string>{"blck", "dtop_1", "dtop_5"});
  CHECK(subset_columns("all", columns) == columns);
}
