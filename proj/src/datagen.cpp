#include "hepml/datagen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "hepml/hep_file.hpp"

namespace hepml {
namespace {

struct ClassParams {
  double mult_charged, mult_photon, mult_neutral;  // multiplicity multipliers
  double pt_scale;                                 // hadronic pT scale
  double hard_lepton_prob;
  double lepton_pt_median;
};

// Targets at separability 1. At separability 0 every class collapses to
// the shared base row.
constexpr ClassParams kBase = {1.0, 1.0, 1.0, 1.0, 0.625, 35.0};
constexpr ClassParams kTargets[kNumClasses] = {
    /* W     */ {0.55, 0.70, 0.70, 1.00, 0.95, 38.0},
    /* QCD   */ {1.70, 1.40, 1.50, 0.75, 0.15, 30.0},
    /* TTbar */ {2.40, 1.90, 2.10, 1.50, 0.95, 45.0},
};

ClassParams class_params(EventLabel label, double s) {
  const ClassParams& t = kTargets[int(label)];
  auto lerp = [s](double base, double target) {
    return base + s * (target - base);
  };
  return {lerp(kBase.mult_charged, t.mult_charged),
          lerp(kBase.mult_photon, t.mult_photon),
          lerp(kBase.mult_neutral, t.mult_neutral),
          lerp(kBase.pt_scale, t.pt_scale),
          lerp(kBase.hard_lepton_prob, t.hard_lepton_prob),
          lerp(kBase.lepton_pt_median, t.lepton_pt_median)};
}

constexpr double kHadronPtMedian = 8.0;

}  // namespace

void validate(const GenConfig& config) {
  double sum = 0;
  for (double f : config.class_fractions) {
    if (f < 0)
      throw ConfigError("datagen", "class fractions must be nonnegative");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("datagen", "class fractions must sum to 1, got " +
                                     std::to_string(sum));
  if (!(config.separability >= 0.0 && config.separability <= 1.0))
    throw ConfigError("datagen", "separability must lie in [0,1]");
}

EventGenerator::EventGenerator(const GenConfig& config)
    : config_(config), rng_(config.seed) {
  validate(config);
}

RawEvent EventGenerator::next() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto make_particle = [&](ParticleCategory cat, double pt, double eta,
                           double phi, double charge, double d0_sigma,
                           double iso) {
    Particle p;
    p.category = cat;
    double px = pt * std::cos(phi), py = pt * std::sin(phi);
    double pz = pt * std::sinh(eta);
    p.px = float(px);
    p.py = float(py);
    p.pz = float(pz);
    p.e = float(std::sqrt(px * px + py * py + pz * pz));  // massless
    p.charge = float(charge);
    p.d0 = float(gauss(rng_) * d0_sigma);
    p.dz = float(gauss(rng_) * d0_sigma);
    p.iso = float(iso);
    return p;
  };
  auto uniform_phi = [&] {
    return unit(rng_) * 2.0 * std::numbers::pi - std::numbers::pi;
  };

  // Label from the fraction partition of [0,1).
  double u = unit(rng_);
  int label = kNumClasses - 1;
  double acc = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    acc += config_.class_fractions[c];
    if (u < acc) {
      label = c;
      break;
    }
  }

  ClassParams params = class_params(EventLabel(label), config_.separability);
  RawEvent event;
  event.label = EventLabel(label);

  // Hard isolated lepton: pT >= 23 and iso below the trigger default
  // whenever the branch fires, so the branch probability is the trigger
  // pass rate up to a sub-percent soft-lepton leak.
  if (unit(rng_) < params.hard_lepton_prob) {
    std::lognormal_distribution<double> lep_pt(
        std::log(params.lepton_pt_median - 23.0), 0.45);
    bool muon = unit(rng_) < 0.5;
    event.particles.push_back(make_particle(
        muon ? ParticleCategory::Muon : ParticleCategory::Electron,
        23.0 + lep_pt(rng_), gauss(rng_) * 1.2, uniform_phi(),
        unit(rng_) < 0.5 ? 1.0 : -1.0, 0.03, 0.02 + unit(rng_) * 0.28));
  }
  // Soft or non-isolated lepton, class independent.
  if (unit(rng_) < 0.25) {
    std::lognormal_distribution<double> soft_pt(std::log(8.0), 0.6);
    bool muon = unit(rng_) < 0.5;
    event.particles.push_back(make_particle(
        muon ? ParticleCategory::Muon : ParticleCategory::Electron,
        soft_pt(rng_), gauss(rng_) * 1.6, uniform_phi(),
        unit(rng_) < 0.5 ? 1.0 : -1.0, 0.05, 0.1 + unit(rng_) * 1.7));
  }

  std::lognormal_distribution<double> hadron_pt(
      std::log(kHadronPtMedian * params.pt_scale), 0.8);
  std::lognormal_distribution<double> photon_pt(
      std::log(0.6 * kHadronPtMedian * params.pt_scale), 0.7);

  auto emit = [&](ParticleCategory cat, double mean_n, auto& pt_dist,
                  bool charged) {
    std::poisson_distribution<int> multiplicity(mean_n);
    int n = multiplicity(rng_);
    for (int i = 0; i < n; ++i) {
      event.particles.push_back(make_particle(
          cat, pt_dist(rng_), gauss(rng_) * 1.8, uniform_phi(),
          charged ? (unit(rng_) < 0.5 ? 1.0 : -1.0) : 0.0, 0.1,
          0.3 + unit(rng_) * 2.7));
    }
  };
  emit(ParticleCategory::ChargedHadron,
       config_.mean_particles[0] * params.mult_charged, hadron_pt, true);
  emit(ParticleCategory::Photon,
       config_.mean_particles[1] * params.mult_photon, photon_pt, false);
  emit(ParticleCategory::NeutralHadron,
       config_.mean_particles[2] * params.mult_neutral, hadron_pt, false);

  ++generated_;
  return event;
}

std::vector<RawEvent> generate(const GenConfig& config) {
  EventGenerator gen(config);
  std::vector<RawEvent> events;
  events.reserve(config.n_events);
  for (uint64_t i = 0; i < config.n_events; ++i) events.push_back(gen.next());
  return events;
}

uint64_t generate_to_file(const GenConfig& config, const std::string& path) {
  EventGenerator gen(config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("datagen", "cannot open " + path + " for writing");
  RawEventWriter writer(out);
  for (uint64_t i = 0; i < config.n_events; ++i) writer.write(gen.next());
  return writer.count();
}

}  // namespace hepml
