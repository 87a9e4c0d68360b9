#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hepml/datagen.hpp"
#include "hepml/eval.hpp"
#include "hepml/features.hpp"
#include "hepml/hep_file.hpp"

using namespace hepml;
using doctest::Approx;

namespace {

std::string serialize(const std::vector<RawEvent>& events) {
  std::stringstream out;
  RawEventWriter writer(out);
  for (const auto& e : events) writer.write(e);
  return out.str();
}

// Welch z-test p-value for equal means.
double welch_p(double m1, double v1, size_t n1, double m2, double v2,
               size_t n2) {
  double se = std::sqrt(v1 / double(n1) + v2 / double(n2));
  if (se == 0) return 1.0;
  double z = std::fabs(m1 - m2) / se;
  return std::erfc(z / std::numbers::sqrt2);
}

struct Moments {
  double mean = 0, var = 0;
  size_t n = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  for (double x : xs) m.mean += x;
  m.mean /= double(m.n);
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= double(m.n - 1);
  return m;
}

}  // namespace

TEST_CASE("generation is deterministic and seed-sensitive") {
  GenConfig config;
  config.seed = 42;
  config.n_events = 200;
  config.separability = 0.7;
  auto a = generate(config);
  auto b = generate(config);
  CHECK(serialize(a) == serialize(b));  // byte-identical

  config.seed = 43;
  auto c = generate(config);
  CHECK(serialize(a) != serialize(c));
}

TEST_CASE("degenerate fraction mix yields a single class") {
  GenConfig config;
  config.seed = 1;
  config.n_events = 100;
  config.class_fractions = {1.0, 0.0, 0.0};
  auto events = generate(config);
  CHECK(events.size() == 100);
  for (const auto& e : events) CHECK(e.label == EventLabel::W);
}

TEST_CASE("config validation") {
  GenConfig config;
  config.class_fractions = {0.5, 0.6, 0.2};
  CHECK_THROWS_AS(validate(config), ConfigError);
  config.class_fractions = {0.5, -0.1, 0.6};
  CHECK_THROWS_AS(validate(config), ConfigError);
  config.class_fractions = {0.4, 0.4, 0.2};
  config.separability = 1.5;
  CHECK_THROWS_AS(validate(config), ConfigError);
  config.separability = 0.5;
  CHECK_NOTHROW(validate(config));
  config.n_events = 0;
  CHECK(generate(config).empty());
}

TEST_CASE("class counts follow the fractions") {
  GenConfig config;
  config.seed = 7;
  config.n_events = 10000;
  config.class_fractions = {0.5, 0.3, 0.2};
  auto events = generate(config);
  std::array<int, 3> counts{};
  for (const auto& e : events) counts[int(e.label)]++;
  // multinomial: sd ~ sqrt(n p (1-p)) ~ 50; allow 5 sigma
  CHECK(std::abs(counts[0] - 5000) < 250);
  CHECK(std::abs(counts[1] - 3000) < 250);
  CHECK(std::abs(counts[2] - 2000) < 250);
}

TEST_CASE("every particle is physically valid") {
  GenConfig config;
  config.seed = 13;
  config.n_events = 500;
  for (const auto& e : generate(config)) {
    CHECK_FALSE(e.particles.empty());
    for (const auto& p : e.particles) CHECK(particle_valid(p));
  }
}

TEST_CASE("trigger pass rates at high separability") {
  auto pass_rate = [](EventLabel label, double separability) {
    GenConfig config;
    config.seed = 19 + uint64_t(label);
    config.n_events = 4000;
    config.separability = separability;
    config.class_fractions = {0, 0, 0};
    config.class_fractions[int(label)] = 1.0;
    auto events = generate(config);
    int passed = 0;
    for (const auto& e : events)
      if (trigger_select(e).has_value()) ++passed;
    return double(passed) / double(events.size());
  };
  for (double s : {0.9, 1.0}) {
    CHECK(pass_rate(EventLabel::W, s) >= 0.9);
    CHECK(pass_rate(EventLabel::TTbar, s) >= 0.9);
    CHECK(pass_rate(EventLabel::Qcd, s) <= 0.3);
  }
}

TEST_CASE("separability 0 collapses the class distributions") {
  GenConfig config;
  config.seed = 23;
  config.n_events = 10000;
  config.separability = 0.0;
  auto events = generate(config);

  // Compare a few HLF columns across class pairs on triggered events.
  std::array<std::array<std::vector<double>, 3>, 3> samples;  // [feat][class]
  const int feats[3] = {6, 8, 0};  // ST, n_charged, lepton pT
  for (auto& e : events) {
    auto lepton = trigger_select(e);
    if (!lepton) continue;
    rank_by_pt(e);
    lepton = trigger_select(e);
    auto h = compute_hlf(e, *lepton);
    for (int f = 0; f < 3; ++f)
      samples[f][int(e.label)].push_back(h[feats[f]]);
  }
  for (int f = 0; f < 3; ++f) {
    for (int c1 = 0; c1 < 3; ++c1)
      for (int c2 = c1 + 1; c2 < 3; ++c2) {
        auto m1 = moments(samples[f][c1]);
        auto m2 = moments(samples[f][c2]);
        CHECK(welch_p(m1.mean, m1.var, m1.n, m2.mean, m2.var, m2.n) > 0.01);
      }
  }
}

TEST_CASE("a linear classifier separates classes at separability 1") {
  GenConfig config;
  config.seed = 29;
  config.n_events = 6000;
  config.separability = 1.0;
  auto events = generate(config);

  std::vector<std::array<float, kHlfSize>> features;
  std::vector<int> labels;
  for (auto& e : events) {
    if (!trigger_select(e)) continue;
    rank_by_pt(e);
    auto lepton = trigger_select(e);
    features.push_back(compute_hlf(e, *lepton));
    labels.push_back(int(e.label));
  }
  REQUIRE(features.size() > 1000);

  // Standardize columns.
  for (int c = 0; c < kHlfSize; ++c) {
    double sum = 0, sumsq = 0;
    for (auto& f : features) sum += f[c];
    double mean = sum / double(features.size());
    for (auto& f : features) sumsq += (f[c] - mean) * (f[c] - mean);
    double sd = std::sqrt(sumsq / double(features.size())) + 1e-9;
    for (auto& f : features) f[c] = float((f[c] - mean) / sd);
  }

  // One-vs-rest logistic regression by plain gradient descent.
  for (int cls = 0; cls < kNumClasses; ++cls) {
    std::array<double, kHlfSize> w{};
    double b = 0;
    for (int iter = 0; iter < 300; ++iter) {
      std::array<double, kHlfSize> gw{};
      double gb = 0;
      for (size_t i = 0; i < features.size(); ++i) {
        double z = b;
        for (int c = 0; c < kHlfSize; ++c) z += w[c] * features[i][c];
        double p = 1.0 / (1.0 + std::exp(-z));
        double err = p - (labels[i] == cls ? 1.0 : 0.0);
        for (int c = 0; c < kHlfSize; ++c) gw[c] += err * features[i][c];
        gb += err;
      }
      for (int c = 0; c < kHlfSize; ++c)
        w[c] -= 0.5 * gw[c] / double(features.size());
      b -= 0.5 * gb / double(features.size());
    }
    std::vector<double> scores(features.size());
    std::vector<uint8_t> y(features.size());
    for (size_t i = 0; i < features.size(); ++i) {
      double z = b;
      for (int c = 0; c < kHlfSize; ++c) z += w[c] * features[i][c];
      scores[i] = z;
      y[i] = labels[i] == cls ? 1 : 0;
    }
    CHECK(auc(scores, y) >= 0.95);
  }
}
