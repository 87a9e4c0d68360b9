#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hepml/common.hpp"
#include "hepml/event.hpp"

namespace hepml {

/// Synthetic generator configuration. `separability` interpolates the
/// per-class distribution parameters between a single shared archetype (0)
/// and three maximally distinct ones (1). Class archetypes:
///   W     - one hard isolated lepton, moderate hadronic activity
///   QCD   - rarely a hard lepton, many hadrons, softer pT spectrum
///   TTbar - one hard lepton, high multiplicity and large scalar pT sum
/// At separability >= 0.85 the hard-lepton rate is >= 0.9 for W and TTbar
/// and <= 0.3 for QCD, so the trigger cut filters meaningfully.
struct GenConfig {
  uint64_t seed = 0;
  uint64_t n_events = 0;
  std::array<double, kNumClasses> class_fractions = {1.0 / 3, 1.0 / 3,
                                                     1.0 / 3};
  double separability = 1.0;
  // Base mean multiplicities: charged hadrons, photons, neutral hadrons.
  std::array<double, 3> mean_particles = {60.0, 25.0, 30.0};
};

/// Throws ConfigError on invalid fractions or separability.
void validate(const GenConfig& config);

/// Streaming generator; a pure function of the config. Shard-parallel use
/// derives per-shard configs with seed + shard index.
class EventGenerator {
public:
  explicit EventGenerator(const GenConfig& config);

  RawEvent next();
  uint64_t generated() const { return generated_; }

private:
  GenConfig config_;
  Rng rng_;
  uint64_t generated_ = 0;
};

std::vector<RawEvent> generate(const GenConfig& config);

/// Generates straight to a .hep file; returns events written.
uint64_t generate_to_file(const GenConfig& config, const std::string& path);

}  // namespace hepml
