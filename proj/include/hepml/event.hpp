#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace hepml {

enum class ParticleCategory : uint8_t {
  ChargedHadron = 0,
  NeutralHadron = 1,
  Photon = 2,
  Electron = 3,
  Muon = 4,
};

enum class EventLabel : uint8_t {
  W = 0,
  Qcd = 1,
  TTbar = 2,
};

constexpr int kNumClasses = 3;
constexpr const char* kClassNames[kNumClasses] = {"w", "qcd", "ttbar"};

/// One reconstructed particle. Momenta and energy in GeV, impact
/// parameters in mm, isolation dimensionless.
struct Particle {
  ParticleCategory category = ParticleCategory::ChargedHadron;
  float px = 0, py = 0, pz = 0, e = 0;
  float charge = 0;
  float d0 = 0, dz = 0;
  float iso = 0;

  bool operator==(const Particle&) const = default;
};

/// E >= 0, |charge| in {0,1}, photons and neutral hadrons carry no charge.
bool particle_valid(const Particle& p);

struct RawEvent {
  EventLabel label = EventLabel::W;
  std::vector<Particle> particles;

  bool operator==(const RawEvent&) const = default;
};

constexpr int kLlfRows = 801;
constexpr int kLlfCols = 19;
constexpr int kHlfSize = 14;

/// One training record: one-hot label, 14 high-level features and the
/// 801x19 per-particle matrix (row-major, zero-padded).
struct Example {
  std::array<float, kNumClasses> label{};
  std::array<float, kHlfSize> hlf{};
  std::vector<float> llf;  // kLlfRows * kLlfCols, row-major; may be left
                           // empty by readers configured to skip it

  bool has_llf() const { return !llf.empty(); }
  int label_index() const {
    for (int i = 0; i < kNumClasses; ++i)
      if (label[i] == 1.0f) return i;
    return -1;
  }

  bool operator==(const Example&) const = default;
};

}  // namespace hepml
