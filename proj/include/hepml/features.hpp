#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hepml/event.hpp"
#include "hepml/kinematics.hpp"

namespace hepml {

// LLF column layout. One-hot category occupies columns 12..16.
namespace llf {
constexpr int kPx = 0, kPy = 1, kPz = 2, kE = 3, kPt = 4, kEta = 5, kPhi = 6,
              kCharge = 7, kD0 = 8, kDz = 9, kIso = 10, kDeltaR = 11,
              kCategoryOneHot = 12, kIsPadding = 17, kLeptonFlag = 18;
}  // namespace llf

// Per-event retention quotas, applied in pT-rank order.
constexpr int kMaxCharged = 450;
constexpr int kMaxPhotons = 150;
constexpr int kMaxNeutral = 200;

constexpr double kDefaultTriggerPt = 23.0;
constexpr double kDefaultIsoMax = 0.45;

/// Charged bucket groups everything carrying unit charge; the quota
/// buckets and the HLF multiplicity counters use the same grouping.
bool is_charged_category(ParticleCategory c);
bool is_lepton_category(ParticleCategory c);
bool is_hadron_category(ParticleCategory c);

/// Index of the highest-pT electron or muon with pT >= pt_threshold
/// (inclusive) and iso <= iso_max, or nullopt when the event fails the
/// trigger. Rejection is a value, not an error.
std::optional<size_t> trigger_select(const RawEvent& event,
                                     double pt_threshold = kDefaultTriggerPt,
                                     double iso_max = kDefaultIsoMax);

/// Sorts particles by decreasing pT, stable. Events are ranked this way
/// before LLF assembly.
void rank_by_pt(RawEvent& event);

/// Builds the 801x19 matrix: row 0 is the isolated lepton, category quotas
/// are applied by pT rank, retained particles are then ordered by
/// decreasing delta-R from the lepton (ties keep the pT ranking), and
/// remaining rows are zero except is_padding = 1.
/// Precondition: particles ranked by decreasing pT, lepton_index valid.
std::vector<float> build_llf(const RawEvent& event, size_t lepton_index);

/// The 14 high-level features:
///   0 lepton pT          7 HT (scalar pT sum, hadrons)
///   1 lepton eta         8 n_charged (excl. trigger lepton)
///   2 lepton iso         9 n_photons
///   3 MET magnitude     10 n_neutral
///   4 MET phi           11 leading non-lepton pT
///   5 transverse mass   12 mean delta-R, charged to lepton
///   6 ST (scalar pT sum, all)  13 pT-weighted mean delta-R
/// MET and ST include the trigger lepton; HT sums hadrons only.
std::array<float, kHlfSize> compute_hlf(const RawEvent& event,
                                        size_t lepton_index);

/// Full per-event feature extraction (label one-hot + HLF + LLF), unscaled.
Example make_example(const RawEvent& ranked_event, size_t lepton_index);

// ---------------------------------------------------------------------------
// Scaling

enum class ScalerKind { MinMax, Standard };

/// Fitted per-feature statistics: (a, b) = (min, max) for MinMax or
/// (mean, std) for Standard. LLF statistics are per column and exclude
/// padding rows. Fitted on the training split only.
struct ScalerParams {
  ScalerKind kind = ScalerKind::MinMax;
  std::array<double, kHlfSize> hlf_a{}, hlf_b{};
  std::array<double, kLlfCols> llf_a{}, llf_b{};
};

ScalerParams fit_scaler(const std::vector<Example>& train, ScalerKind kind);

/// MinMax: x' = (x - min) / (max - min), clamped to [0, 1]; a constant
/// feature maps to 0. Standard: x' = (x - mean) / std, std = 0 maps to 0.
/// LLF padding rows pass through untouched.
void apply_scaler(const ScalerParams& params, Example& e);

std::string scaler_kind_name(ScalerKind kind);
ScalerKind parse_scaler_kind(const std::string& name);

// ---------------------------------------------------------------------------
// Dataset operations. All are seeded and deterministic.

/// Downsamples every class uniformly at random to the minimum class count,
/// preserving dataset order otherwise. Throws ConfigError when a class is
/// empty, naming the class.
std::vector<Example> undersample(std::vector<Example> dataset, uint64_t seed);

/// Seeded uniform permutation.
void shuffle_examples(std::vector<Example>& dataset, uint64_t seed);

/// Shuffles, then takes the first floor(train_fraction * n) as train.
std::pair<std::vector<Example>, std::vector<Example>> split_examples(
    std::vector<Example> dataset, double train_fraction, uint64_t seed);

// ---------------------------------------------------------------------------
// Preparation driver: .hep files -> train/test .rec shards + sidecar.

struct PrepareConfig {
  double trigger_pt = kDefaultTriggerPt;
  double iso_max = kDefaultIsoMax;
  ScalerKind scaler = ScalerKind::MinMax;
  bool balance = true;
  double train_fraction = 0.8;
  uint64_t seed = 0;
  int shards = 4;
};

struct PrepareStats {
  uint64_t events_read = 0;
  uint64_t events_triggered = 0;
  std::array<uint64_t, kNumClasses> triggered_counts{};
  std::array<uint64_t, kNumClasses> balanced_counts{};
  uint64_t train_examples = 0;
  uint64_t test_examples = 0;
  ScalerParams scaler;
};

/// Runs trigger -> features -> undersample -> shuffle -> split -> scale and
/// writes train_%04d.rec / test_%04d.rec (round-robin sharding by example
/// index) plus meta.txt under out_dir.
PrepareStats prepare_dataset(const std::vector<std::string>& hep_files,
                             const std::string& out_dir,
                             const PrepareConfig& config);

/// Shard file lists written by prepare_dataset, in index order.
std::vector<std::string> list_shards(const std::string& dir,
                                     const std::string& split_tag);

void write_prepare_meta(const std::string& path, const PrepareConfig& config,
                        const PrepareStats& stats);

}  // namespace hepml
