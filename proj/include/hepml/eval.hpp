#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "hepml/event.hpp"
#include "hepml/nn/model.hpp"
#include "hepml/pipeline.hpp"

namespace hepml {

struct RocPoint {
  double threshold;  // +inf sentinel on the leading (0,0) point
  double fpr;
  double tpr;
};

/// One-vs-rest ROC. Thresholds are the descending distinct scores; tied
/// scores collapse into a single step. Points run from (0,0) to (1,1) and
/// are nondecreasing in both coordinates. Throws when only one class is
/// present.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const uint8_t> labels);

/// AUC by the tie-corrected Mann-Whitney rank statistic (ties count 1/2).
/// Equals the trapezoidal area under roc_curve exactly.
double auc(std::span<const double> scores, std::span<const uint8_t> labels);

double trapezoid_area(const std::vector<RocPoint>& roc);

struct LossPoint {
  int epoch;
  double train_loss;
  double val_loss;  // NaN when no validation stream was supplied
};

struct EvalReport {
  uint64_t examples = 0;
  std::array<double, kNumClasses> auc{};
  std::array<std::vector<RocPoint>, kNumClasses> roc;
  // confusion[true][predicted]; argmax ties resolve to the lowest index
  std::array<std::array<uint64_t, kNumClasses>, kNumClasses> confusion{};
  std::vector<LossPoint> loss_series;
};

/// Runs the model over a test stream (one epoch) and builds the
/// one-vs-rest ROC/AUC per class plus the argmax confusion matrix.
EvalReport evaluate(nn::Model<float>& model, Pipeline& pipe);

/// Same, over per-event scores already collected: scores[i] = 3 class
/// probabilities, labels[i] = true class index.
EvalReport evaluate_scores(
    const std::vector<std::array<double, kNumClasses>>& scores,
    const std::vector<uint8_t>& labels);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc);
void write_report_json(const std::string& path, const EvalReport& report);
void write_loss_csv(const std::string& path,
                    const std::vector<LossPoint>& series);

}  // namespace hepml
