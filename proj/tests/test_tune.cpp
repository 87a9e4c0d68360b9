#include <doctest.h>

#include <fstream>
#include <set>

#include "hepml/common.hpp"
#include "hepml/tune.hpp"

using namespace hepml;
using doctest::Approx;

namespace {

/// Linearly separable three-class HLF examples.
std::vector<Example> separable_dataset(int n, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    int label = int(uniform_index(rng, 3));
    Example e;
    e.label[label] = 1.0f;
    for (int c = 0; c < kHlfSize; ++c) e.hlf[c] = float(noise(rng));
    e.hlf[0] += float(label);  // class signal
    e.hlf[1] += float(label == 1 ? 1.5 : 0.0);
    out.push_back(e);
  }
  return out;
}

bool results_equal(const TuneResult& a, const TuneResult& b) {
  if (a.ranked.size() != b.ranked.size()) return false;
  for (size_t i = 0; i < a.ranked.size(); ++i) {
    const auto& x = a.ranked[i];
    const auto& y = b.ranked[i];
    if (x.config != y.config || x.fold_aucs != y.fold_aucs ||
        x.mean_auc != y.mean_auc || x.rank != y.rank ||
        x.diverged != y.diverged)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("grid_expand enumerates the product in lexicographic order") {
  GridSpace space;
  space.axes = {{"a", {"1", "2"}}, {"b", {"x", "y"}}};
  auto candidates = grid_expand(space);
  REQUIRE(candidates.size() == 4);
  auto value = [&](size_t i, size_t axis) { return candidates[i][axis].second; };
  CHECK(value(0, 0) == "1");
  CHECK(value(0, 1) == "x");
  CHECK(value(1, 0) == "1");
  CHECK(value(1, 1) == "y");
  CHECK(value(2, 0) == "2");
  CHECK(value(2, 1) == "x");
  CHECK(value(3, 0) == "2");
  CHECK(value(3, 1) == "y");
}

TEST_CASE("single axis expands to its values") {
  GridSpace space;
  space.axes = {{"lr", {"a", "b", "c"}}};
  CHECK(grid_expand(space).size() == 3);
}

TEST_CASE("the stock grid has 200 candidates") {
  CHECK(grid_expand(default_grid()).size() == 200);
}

TEST_CASE("empty axes are rejected") {
  GridSpace space;
  space.axes = {{"a", {}}};
  CHECK_THROWS_AS(grid_expand(space), ConfigError);
}

TEST_CASE("grid file parsing") {
  auto space = parse_grid_text("# comment\nlr = 0.1, 0.2\nbatch = 8\n");
  REQUIRE(space.axes.size() == 2);
  CHECK(space.axes[0].first == "lr");
  CHECK(space.axes[0].second == std::vector<std::string>{"0.1", "0.2"});
  CHECK(space.axes[1].second == std::vector<std::string>{"8"});
  CHECK_THROWS_AS(parse_grid_text("garbage line"), ConfigError);
  CHECK_THROWS_AS(parse_grid_text(""), ConfigError);
}

TEST_CASE("kfold_split shapes and partition") {
  auto folds = kfold_split(8, 8, 3);
  REQUIRE(folds.size() == 8);
  for (const auto& f : folds) {
    CHECK(f.val.size() == 1);
    CHECK(f.train.size() == 7);
  }

  folds = kfold_split(10, 3, 3);
  REQUIRE(folds.size() == 3);
  std::multiset<size_t> sizes;
  for (const auto& f : folds) sizes.insert(f.val.size());
  CHECK(sizes == std::multiset<size_t>{3, 3, 4});

  std::set<size_t> all;
  for (const auto& f : folds) {
    for (size_t i : f.val) CHECK(all.insert(i).second);  // disjoint
    CHECK(f.train.size() == 10 - f.val.size());
  }
  CHECK(all.size() == 10);  // exhaustive

  CHECK_THROWS_AS(kfold_split(3, 4, 1), ConfigError);
  CHECK_THROWS_AS(kfold_split(10, 1, 1), ConfigError);
}

TEST_CASE("grid search results are independent of parallelism") {
  auto dataset = separable_dataset(120, 5);
  GridSpace space = parse_grid_text(
      "hidden = 8, 12-6\n"
      "lr = 0.005, 0.02\n");
  TuneConfig config{.folds = 3, .parallelism = 1, .seed = 9, .epochs = 2};
  TuneResult serial = grid_search(space, dataset, config);
  config.parallelism = 4;
  TuneResult parallel = grid_search(space, dataset, config);
  CHECK(results_equal(serial, parallel));

  // ranks are a permutation 1..n and the mean is the fold mean
  std::set<int> ranks;
  for (const auto& r : serial.ranked) {
    ranks.insert(r.rank);
    double sum = 0;
    for (double a : r.fold_aucs) sum += a;
    CHECK(r.mean_auc == Approx(sum / 3.0).epsilon(1e-12));
  }
  CHECK(ranks == std::set<int>{1, 2, 3, 4});
}

TEST_CASE("a single candidate ranks first") {
  auto dataset = separable_dataset(60, 6);
  GridSpace space = parse_grid_text("lr = 0.01\n");
  TuneConfig config{.folds = 2, .parallelism = 1, .seed = 1, .epochs = 1};
  TuneResult result = grid_search(space, dataset, config);
  REQUIRE(result.ranked.size() == 1);
  CHECK(result.ranked[0].rank == 1);
}

TEST_CASE("diverging candidates score zero without failing the sweep") {
  auto dataset = separable_dataset(90, 7);
  GridSpace space = parse_grid_text("lr = 0.01, 1e18\n");
  TuneConfig config{.folds = 2, .parallelism = 2, .seed = 2, .epochs = 2};
  TuneResult result = grid_search(space, dataset, config);
  REQUIRE(result.ranked.size() == 2);
  const auto& worst = result.ranked.back();
  CHECK(worst.config[0].second == "1e18");
  CHECK(worst.diverged);
  CHECK(worst.mean_auc == 0.0);
  CHECK_FALSE(result.ranked.front().diverged);
  CHECK(result.ranked.front().mean_auc > 0.6);
}

TEST_CASE("unknown axes fail the sweep up front") {
  auto dataset = separable_dataset(30, 8);
  GridSpace space = parse_grid_text("warp = 9\n");
  TuneConfig config{.folds = 2, .parallelism = 1, .seed = 1, .epochs = 1};
  CHECK_THROWS_AS(grid_search(space, dataset, config), ConfigError);
}

TEST_CASE("tune csv excludes wall time") {
  auto dataset = separable_dataset(60, 9);
  GridSpace space = parse_grid_text("lr = 0.01, 0.02\n");
  TuneConfig config{.folds = 2, .parallelism = 1, .seed = 3, .epochs = 1};
  TuneResult result = grid_search(space, dataset, config);
  write_tune_csv("/tmp/hepml_tune.csv", space, result);
  std::ifstream in("/tmp/hepml_tune.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "lr,fold0_auc,fold1_auc,mean_auc,rank,diverged");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}
