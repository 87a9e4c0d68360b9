#include "hepml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hepml/common.hpp"

namespace hepml {
namespace {

std::pair<uint64_t, uint64_t> class_counts(std::span<const uint8_t> labels) {
  uint64_t pos = 0;
  for (uint8_t l : labels) pos += l ? 1 : 0;
  return {pos, labels.size() - pos};
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("eval", "scores and labels differ in length");
  auto [np, nn] = class_counts(labels);
  if (np == 0 || nn == 0)
    throw ConfigError("eval", "ROC undefined: only one class present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc;
  roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  uint64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]])
        ++tp;
      else
        ++fp;
      ++i;
    }
    roc.push_back({s, double(fp) / double(nn), double(tp) / double(np)});
  }
  return roc;
}

double auc(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("eval", "scores and labels differ in length");
  auto [np, nn] = class_counts(labels);
  if (np == 0 || nn == 0)
    throw ConfigError("eval", "AUC undefined: only one class present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Sum of doubled average ranks over positives: a tie group spanning
  // 1-based ranks [lo, hi] contributes lo + hi per member. Keeping the
  // arithmetic integral makes the result exactly equal to pair counting.
  uint64_t doubled_rank_sum = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    uint64_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += labels[order[j]] ? 1 : 0;
      ++j;
    }
    uint64_t lo = i + 1, hi = j;  // 1-based rank range of the group
    doubled_rank_sum += group_pos * (lo + hi);
    i = j;
  }
  int64_t numerator = int64_t(doubled_rank_sum) - int64_t(np * (np + 1));
  return double(numerator) / (2.0 * double(np) * double(nn));
}

double trapezoid_area(const std::vector<RocPoint>& roc) {
  double area = 0;
  for (size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
  return area;
}

EvalReport evaluate_scores(
    const std::vector<std::array<double, kNumClasses>>& scores,
    const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("eval", "scores and labels differ in length");
  if (scores.empty()) throw ConfigError("eval", "empty test stream");

  EvalReport report;
  report.examples = scores.size();
  for (size_t i = 0; i < scores.size(); ++i) {
    int pred = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (scores[i][c] > scores[i][pred]) pred = c;
    report.confusion[labels[i]][pred] += 1;
  }
  std::vector<double> s(scores.size());
  std::vector<uint8_t> y(scores.size());
  for (int c = 0; c < kNumClasses; ++c) {
    for (size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      y[i] = labels[i] == c ? 1 : 0;
    }
    report.roc[c] = roc_curve(s, y);
    report.auc[c] = auc(s, y);
  }
  return report;
}

EvalReport evaluate(nn::Model<float>& model, Pipeline& pipe) {
  std::vector<std::array<double, kNumClasses>> scores;
  std::vector<uint8_t> labels;
  pipe.begin_epoch(0);
  while (auto batch = pipe.next_batch()) {
    auto b = nn::make_batch(*batch, model.spec().kind);
    nn::Mat<float> probs = model.forward(b);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      std::array<double, kNumClasses> row;
      for (int c = 0; c < kNumClasses; ++c) row[c] = probs(i, c);
      scores.push_back(row);
      int label = (*batch)[size_t(i)].label_index();
      if (label < 0) throw ShapeError("eval", "record label not one-hot");
      labels.push_back(uint8_t(label));
    }
  }
  return evaluate_scores(scores, labels);
}

void write_roc_csv(const std::string& path,
                   const std::vector<RocPoint>& roc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("eval", "cannot open " + path);
  out << "threshold,fpr,tpr\n";
  out.precision(10);
  for (const RocPoint& p : roc)
    out << p.threshold << "," << p.fpr << "," << p.tpr << "\n";
  if (!out) throw IoError("eval", "write failed for " + path);
}

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["examples"] = report.examples;
  for (int c = 0; c < kNumClasses; ++c)
    j["auc"][kClassNames[c]] = report.auc[c];
  for (int t = 0; t < kNumClasses; ++t)
    j["confusion"].push_back(std::vector<uint64_t>(
        report.confusion[t].begin(), report.confusion[t].end()));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("eval", "cannot open " + path);
  out << j.dump(2) << "\n";
}

void write_loss_csv(const std::string& path,
                    const std::vector<LossPoint>& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("eval", "cannot open " + path);
  out << "epoch,train_loss,val_loss\n";
  out.precision(10);
  for (const LossPoint& p : series) {
    out << p.epoch << "," << p.train_loss << ",";
    if (std::isnan(p.val_loss))
      out << "";
    else
      out << p.val_loss;
    out << "\n";
  }
  if (!out) throw IoError("eval", "write failed for " + path);
}

}  // namespace hepml
