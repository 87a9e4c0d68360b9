#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hepml/common.hpp"
#include "hepml/eval.hpp"
#include "hepml/record_file.hpp"

using namespace hepml;
using doctest::Approx;

namespace {

/// Pair-counting oracle: fraction of (positive, negative) pairs ordered
/// correctly, ties counted half. Exact integer arithmetic.
double auc_brute_force(const std::vector<double>& scores,
                       const std::vector<uint8_t>& labels) {
  uint64_t wins = 0, ties = 0, np = 0, nn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++np;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j])
        ++wins;
      else if (scores[i] == scores[j])
        ++ties;
    }
  }
  for (uint8_t l : labels) nn += l ? 0 : 1;
  return double(2 * wins + ties) / (2.0 * double(np) * double(nn));
}

}  // namespace

TEST_CASE("perfectly separated scores pass through (0,1)") {
  std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
  std::vector<uint8_t> labels = {1, 1, 0, 0};
  auto roc = roc_curve(scores, labels);
  bool hit = false;
  for (const auto& p : roc)
    if (p.fpr == 0.0 && p.tpr == 1.0) hit = true;
  CHECK(hit);
  CHECK(auc(scores, labels) == 1.0);
}

TEST_CASE("constant scores collapse to the chance diagonal") {
  std::vector<double> scores = {0.5, 0.5, 0.5, 0.5, 0.5};
  std::vector<uint8_t> labels = {1, 0, 1, 0, 1};
  auto roc = roc_curve(scores, labels);
  REQUIRE(roc.size() == 2);
  CHECK(roc[0].fpr == 0.0);
  CHECK(roc[0].tpr == 0.0);
  CHECK(roc[1].fpr == 1.0);
  CHECK(roc[1].tpr == 1.0);
  CHECK(auc(scores, labels) == 0.5);
}

TEST_CASE("the worked four-point example scores 0.75") {
  std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  std::vector<uint8_t> labels = {0, 0, 1, 1};
  CHECK(auc(scores, labels) == 0.75);  // 3 of 4 pairs ordered correctly
  CHECK(auc_brute_force(scores, labels) == 0.75);
}

TEST_CASE("random labels give AUC near one half") {
  Rng rng(2);
  const size_t n = 10000;
  std::vector<double> scores(n);
  std::vector<uint8_t> labels(n);
  std::uniform_real_distribution<double> unit(0, 1);
  for (size_t i = 0; i < n; ++i) {
    scores[i] = unit(rng);
    labels[i] = rng() & 1;
  }
  CHECK(auc(scores, labels) == Approx(0.5).epsilon(0.04));
  CHECK(std::fabs(auc(scores, labels) - 0.5) < 0.02);
}

TEST_CASE("negating scores reflects the AUC") {
  Rng rng(3);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<double> scores(500), neg(500);
  std::vector<uint8_t> labels(500);
  for (size_t i = 0; i < 500; ++i) {
    scores[i] = unit(rng);
    neg[i] = -scores[i];
    labels[i] = rng() % 3 == 0;
  }
  CHECK(auc(neg, labels) == Approx(1.0 - auc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("rank AUC equals brute-force pair counting exactly") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 2 + uniform_index(rng, 999);
    std::vector<double> scores(n);
    std::vector<uint8_t> labels(n);
    // Coarse score grid to force plenty of ties.
    for (size_t i = 0; i < n; ++i) {
      scores[i] = double(uniform_index(rng, 12)) / 11.0;
      labels[i] = rng() & 1;
    }
    labels[0] = 0;  // both classes present
    labels[1] = 1;
    CHECK(auc(scores, labels) == auc_brute_force(scores, labels));
  }
}

TEST_CASE("rank AUC equals the trapezoidal ROC area") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 10 + uniform_index(rng, 9990);
    std::vector<double> scores(n);
    std::vector<uint8_t> labels(n);
    std::normal_distribution<double> dist(0, 1);
    for (size_t i = 0; i < n; ++i) {
      labels[i] = rng() & 1;
      scores[i] = dist(rng) + (labels[i] ? 0.5 : 0.0);
    }
    labels[0] = 0;
    labels[1] = 1;
    double by_rank = auc(scores, labels);
    double by_area = trapezoid_area(roc_curve(scores, labels));
    CHECK(std::fabs(by_rank - by_area) < 1e-12);
  }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
  Rng rng(11);
  std::vector<double> scores(400), mapped(400);
  std::vector<uint8_t> labels(400);
  for (size_t i = 0; i < 400; ++i) {
    scores[i] = double(uniform_index(rng, 50)) / 10.0;
    mapped[i] = std::exp(scores[i]) * 3.0 + 1.0;
    labels[i] = rng() & 1;
  }
  labels[0] = 0;
  labels[1] = 1;
  CHECK(auc(scores, labels) == auc(mapped, labels));
}

TEST_CASE("ROC points are monotone from (0,0) to (1,1)") {
  Rng rng(13);
  std::vector<double> scores(300);
  std::vector<uint8_t> labels(300);
  for (size_t i = 0; i < 300; ++i) {
    scores[i] = double(uniform_index(rng, 40));
    labels[i] = rng() & 1;
  }
  labels[0] = 0;
  labels[1] = 1;
  auto roc = roc_curve(scores, labels);
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
  for (size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].fpr >= roc[i - 1].fpr);
    CHECK(roc[i].tpr >= roc[i - 1].tpr);
    CHECK(roc[i].threshold < roc[i - 1].threshold);  // descending distinct
  }
}

TEST_CASE("single-class labels are rejected") {
  std::vector<double> scores = {0.1, 0.2};
  std::vector<uint8_t> ones = {1, 1};
  CHECK_THROWS_AS(roc_curve(scores, ones), Error);
  CHECK_THROWS_AS(auc(scores, ones), Error);
}

TEST_CASE("a uniform model yields chance AUCs and one confusion column") {
  std::vector<std::array<double, kNumClasses>> scores;
  std::vector<uint8_t> labels;
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    scores.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    labels.push_back(uint8_t(uniform_index(rng, 3)));
  }
  EvalReport report = evaluate_scores(scores, labels);
  uint64_t total = 0;
  std::array<uint64_t, kNumClasses> per_class{};
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) {
      total += report.confusion[t][p];
      per_class[t] += report.confusion[t][p];
      if (p != 0) CHECK(report.confusion[t][p] == 0);  // tie-break: class 0
    }
  CHECK(total == 300);
  for (int c = 0; c < kNumClasses; ++c) {
    CHECK(report.auc[c] == 0.5);
    uint64_t count = 0;
    for (uint8_t l : labels) count += l == c;
    CHECK(per_class[c] == count);  // rows sum to class totals
  }
}

TEST_CASE("report AUC matches auc() on the extracted scores") {
  Rng rng(19);
  std::vector<std::array<double, kNumClasses>> scores;
  std::vector<uint8_t> labels;
  std::normal_distribution<double> dist(0, 1);
  for (int i = 0; i < 500; ++i) {
    uint8_t label = uint8_t(uniform_index(rng, 3));
    std::array<double, kNumClasses> row{};
    double sum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      row[c] = std::exp(dist(rng) + (c == label ? 1.0 : 0.0));
      sum += row[c];
    }
    for (int c = 0; c < kNumClasses; ++c) row[c] /= sum;
    scores.push_back(row);
    labels.push_back(label);
  }
  EvalReport report = evaluate_scores(scores, labels);
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> s(scores.size());
    std::vector<uint8_t> y(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      y[i] = labels[i] == c;
    }
    CHECK(report.auc[c] == auc(s, y));
    CHECK(report.auc[c] > 0.5);  // informative by construction
  }
}

TEST_CASE("report and csv writers produce parseable output") {
  std::vector<std::array<double, kNumClasses>> scores = {
      {0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.2, 0.2, 0.6}, {0.5, 0.3, 0.2},
      {0.3, 0.5, 0.2}, {0.1, 0.3, 0.6}};
  std::vector<uint8_t> labels = {0, 1, 2, 0, 1, 2};
  EvalReport report = evaluate_scores(scores, labels);
  report.loss_series = {{0, 1.0, 1.1}, {1, 0.8, 0.9}};
  write_report_json("/tmp/hepml_report.json", report);
  write_roc_csv("/tmp/hepml_roc.csv", report.roc[0]);
  write_loss_csv("/tmp/hepml_loss.csv", report.loss_series);

  std::ifstream json("/tmp/hepml_report.json");
  std::string text((std::istreambuf_iterator<char>(json)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"auc\"") != std::string::npos);
  CHECK(text.find("\"confusion\"") != std::string::npos);

  std::ifstream csv("/tmp/hepml_loss.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,train_loss,val_loss");
}
