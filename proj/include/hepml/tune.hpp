#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hepml/event.hpp"

namespace hepml {

/// Named axes in declaration order; the candidate set is the cartesian
/// product. Axis values stay strings until a candidate is materialized.
struct GridSpace {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

/// Text format: one `name = v1, v2, ...` line per axis; '#' comments.
GridSpace parse_grid_file(const std::string& path);
GridSpace parse_grid_text(const std::string& text);

/// The stock HLF-classifier search space (5 x 2 x 4 x 5 = 200 candidates):
/// hidden widths, activation, learning rate, batch size.
GridSpace default_grid();

using Candidate = std::vector<std::pair<std::string, std::string>>;

/// Deterministic lexicographic enumeration of the cartesian product (first
/// axis most significant). Throws ConfigError on an empty axis.
std::vector<Candidate> grid_expand(const GridSpace& space);

struct Fold {
  std::vector<size_t> train;
  std::vector<size_t> val;
};

/// Seeded permutation split into k folds of size floor(n/k) or ceil(n/k);
/// the validation folds partition [0, n).
std::vector<Fold> kfold_split(size_t n, int k, uint64_t seed);

struct CandidateResult {
  Candidate config;
  std::vector<double> fold_aucs;
  double mean_auc = 0;
  bool diverged = false;
  int rank = 0;  // 1-based, by mean AUC descending, ties in lex order
  double wall_ms = 0;
};

struct TuneResult {
  std::vector<CandidateResult> ranked;
  double wall_seconds = 0;
};

struct TuneConfig {
  int folds = 8;
  int parallelism = 1;
  uint64_t seed = 0;
  int epochs = 3;  // training epochs per (candidate, fold) task
};

/// Grid search with k-fold cross validation over in-memory examples
/// (HLF features only). (candidate, fold) tasks run on a local thread
/// pool; results are independent of parallelism. A diverging candidate
/// scores 0 with a flag instead of failing the sweep.
TuneResult grid_search(const GridSpace& space,
                       const std::vector<Example>& dataset,
                       const TuneConfig& config);

/// CSV: axis columns, per-fold AUCs, mean, rank, diverged. Wall time is
/// reported separately so result files compare equal across parallelism.
void write_tune_csv(const std::string& path, const GridSpace& space,
                    const TuneResult& result);

}  // namespace hepml
