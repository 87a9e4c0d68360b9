#include "hepml/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hepml/common.hpp"
#include "hepml/hep_file.hpp"
#include "hepml/record_file.hpp"

namespace hepml {

bool is_charged_category(ParticleCategory c) {
  return c == ParticleCategory::ChargedHadron ||
         c == ParticleCategory::Electron || c == ParticleCategory::Muon;
}

bool is_lepton_category(ParticleCategory c) {
  return c == ParticleCategory::Electron || c == ParticleCategory::Muon;
}

bool is_hadron_category(ParticleCategory c) {
  return c == ParticleCategory::ChargedHadron ||
         c == ParticleCategory::NeutralHadron;
}

std::optional<size_t> trigger_select(const RawEvent& event,
                                     double pt_threshold, double iso_max) {
  std::optional<size_t> best;
  double best_pt = -1;
  for (size_t i = 0; i < event.particles.size(); ++i) {
    const Particle& p = event.particles[i];
    if (!is_lepton_category(p.category)) continue;
    if (p.iso > iso_max) continue;
    double pt = std::hypot(double(p.px), double(p.py));
    if (pt < pt_threshold) continue;
    if (pt > best_pt) {
      best_pt = pt;
      best = i;
    }
  }
  return best;
}

void rank_by_pt(RawEvent& event) {
  std::stable_sort(event.particles.begin(), event.particles.end(),
                   [](const Particle& a, const Particle& b) {
                     return std::hypot(double(a.px), double(a.py)) >
                            std::hypot(double(b.px), double(b.py));
                   });
}

namespace {

void fill_llf_row(float* row, const Particle& p, const Kinematics& k,
                  double dr, bool lepton_flag) {
  row[llf::kPx] = p.px;
  row[llf::kPy] = p.py;
  row[llf::kPz] = p.pz;
  row[llf::kE] = p.e;
  row[llf::kPt] = float(k.pt);
  row[llf::kEta] = float(k.eta);
  row[llf::kPhi] = float(k.phi);
  row[llf::kCharge] = p.charge;
  row[llf::kD0] = p.d0;
  row[llf::kDz] = p.dz;
  row[llf::kIso] = p.iso;
  row[llf::kDeltaR] = float(dr);
  row[llf::kCategoryOneHot + int(p.category)] = 1.0f;
  row[llf::kIsPadding] = 0.0f;
  row[llf::kLeptonFlag] = lepton_flag ? 1.0f : 0.0f;
}

}  // namespace

std::vector<float> build_llf(const RawEvent& event, size_t lepton_index) {
  const Particle& lepton = event.particles.at(lepton_index);
  Kinematics lep_k = kinematics(lepton);

  // Quotas by pT rank; the trigger lepton does not consume quota.
  struct Kept {
    size_t index;
    double dr;
  };
  std::vector<Kept> kept;
  kept.reserve(std::min<size_t>(event.particles.size(),
                                kMaxCharged + kMaxPhotons + kMaxNeutral));
  int n_charged = 0, n_photons = 0, n_neutral = 0;
  for (size_t i = 0; i < event.particles.size(); ++i) {
    if (i == lepton_index) continue;
    const Particle& p = event.particles[i];
    if (is_charged_category(p.category)) {
      if (n_charged >= kMaxCharged) continue;
      ++n_charged;
    } else if (p.category == ParticleCategory::Photon) {
      if (n_photons >= kMaxPhotons) continue;
      ++n_photons;
    } else {
      if (n_neutral >= kMaxNeutral) continue;
      ++n_neutral;
    }
    kept.push_back({i, delta_r(kinematics(p), lep_k)});
  }

  // Decreasing delta-R; stable keeps the pT ranking on ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Kept& a, const Kept& b) { return a.dr > b.dr; });

  std::vector<float> out(size_t(kLlfRows) * kLlfCols, 0.0f);
  fill_llf_row(out.data(), lepton, lep_k, 0.0, true);
  size_t row = 1;
  for (const Kept& k : kept) {
    if (row >= size_t(kLlfRows)) break;  // unreachable given the quotas
    const Particle& p = event.particles[k.index];
    fill_llf_row(out.data() + row * kLlfCols, p, kinematics(p), k.dr, false);
    ++row;
  }
  for (; row < size_t(kLlfRows); ++row)
    out[row * kLlfCols + llf::kIsPadding] = 1.0f;
  return out;
}

std::array<float, kHlfSize> compute_hlf(const RawEvent& event,
                                        size_t lepton_index) {
  const Particle& lepton = event.particles.at(lepton_index);
  Kinematics lep_k = kinematics(lepton);

  double sum_px = 0, sum_py = 0, st = 0, ht = 0;
  int n_charged = 0, n_photons = 0, n_neutral = 0;
  double lead_pt = 0;
  double dr_sum = 0, dr_wsum = 0, dr_wnorm = 0;
  int dr_n = 0;
  for (size_t i = 0; i < event.particles.size(); ++i) {
    const Particle& p = event.particles[i];
    Kinematics k = kinematics(p);
    sum_px += p.px;
    sum_py += p.py;
    st += k.pt;
    if (is_hadron_category(p.category)) ht += k.pt;
    if (i == lepton_index) continue;
    if (is_charged_category(p.category)) {
      ++n_charged;
      double dr = delta_r(k, lep_k);
      dr_sum += dr;
      dr_wsum += dr * k.pt;
      dr_wnorm += k.pt;
      ++dr_n;
    } else if (p.category == ParticleCategory::Photon) {
      ++n_photons;
    } else {
      ++n_neutral;
    }
    lead_pt = std::max(lead_pt, k.pt);
  }

  double met = std::hypot(sum_px, sum_py);
  double met_phi = met > 0 ? wrap_phi(std::atan2(-sum_py, -sum_px)) : 0.0;
  double mt2 = 2.0 * lep_k.pt * met * (1.0 - std::cos(lep_k.phi - met_phi));
  double mt = std::sqrt(std::max(0.0, mt2));

  std::array<float, kHlfSize> h{};
  h[0] = float(lep_k.pt);
  h[1] = float(lep_k.eta);
  h[2] = lepton.iso;
  h[3] = float(met);
  h[4] = float(met_phi);
  h[5] = float(mt);
  h[6] = float(st);
  h[7] = float(ht);
  h[8] = float(n_charged);
  h[9] = float(n_photons);
  h[10] = float(n_neutral);
  h[11] = float(lead_pt);
  h[12] = dr_n ? float(dr_sum / dr_n) : 0.0f;
  h[13] = dr_wnorm > 0 ? float(dr_wsum / dr_wnorm) : 0.0f;
  return h;
}

Example make_example(const RawEvent& event, size_t lepton_index) {
  Example e;
  e.label[int(event.label)] = 1.0f;
  e.hlf = compute_hlf(event, lepton_index);
  e.llf = build_llf(event, lepton_index);
  return e;
}

// ---------------------------------------------------------------------------

ScalerParams fit_scaler(const std::vector<Example>& train, ScalerKind kind) {
  if (train.empty())
    throw ConfigError("features", "cannot fit a scaler on an empty set");

  ScalerParams s;
  s.kind = kind;

  auto fit_columns = [&](int ncols, auto&& for_each_value, double* a,
                         double* b) {
    std::vector<double> mn(ncols, std::numeric_limits<double>::infinity());
    std::vector<double> mx(ncols, -std::numeric_limits<double>::infinity());
    std::vector<double> sum(ncols, 0), sumsq(ncols, 0);
    std::vector<uint64_t> n(ncols, 0);
    for_each_value([&](int col, double v) {
      mn[col] = std::min(mn[col], v);
      mx[col] = std::max(mx[col], v);
      sum[col] += v;
      sumsq[col] += v * v;
      ++n[col];
    });
    for (int c = 0; c < ncols; ++c) {
      if (n[c] == 0) {  // all rows were padding
        a[c] = 0;
        b[c] = 0;
        continue;
      }
      if (kind == ScalerKind::MinMax) {
        a[c] = mn[c];
        b[c] = mx[c];
      } else {
        double mean = sum[c] / double(n[c]);
        double var = std::max(0.0, sumsq[c] / double(n[c]) - mean * mean);
        a[c] = mean;
        b[c] = std::sqrt(var);
      }
    }
  };

  fit_columns(
      kHlfSize,
      [&](auto&& visit) {
        for (const Example& e : train)
          for (int c = 0; c < kHlfSize; ++c) visit(c, e.hlf[c]);
      },
      s.hlf_a.data(), s.hlf_b.data());

  fit_columns(
      kLlfCols,
      [&](auto&& visit) {
        for (const Example& e : train) {
          for (int r = 0; r < kLlfRows; ++r) {
            const float* row = e.llf.data() + size_t(r) * kLlfCols;
            if (row[llf::kIsPadding] != 0.0f) continue;
            for (int c = 0; c < kLlfCols; ++c) visit(c, row[c]);
          }
        }
      },
      s.llf_a.data(), s.llf_b.data());
  return s;
}

namespace {

inline float scale_value(ScalerKind kind, double a, double b, float x) {
  if (kind == ScalerKind::MinMax) {
    double range = b - a;
    if (range <= 0) return 0.0f;
    return float(std::clamp((x - a) / range, 0.0, 1.0));
  }
  if (b <= 0) return 0.0f;
  return float((x - a) / b);
}

}  // namespace

void apply_scaler(const ScalerParams& p, Example& e) {
  for (int c = 0; c < kHlfSize; ++c)
    e.hlf[c] = scale_value(p.kind, p.hlf_a[c], p.hlf_b[c], e.hlf[c]);
  for (int r = 0; r < kLlfRows; ++r) {
    float* row = e.llf.data() + size_t(r) * kLlfCols;
    if (row[llf::kIsPadding] != 0.0f) continue;
    for (int c = 0; c < kLlfCols; ++c)
      row[c] = scale_value(p.kind, p.llf_a[c], p.llf_b[c], row[c]);
  }
}

std::string scaler_kind_name(ScalerKind kind) {
  return kind == ScalerKind::MinMax ? "minmax" : "standard";
}

ScalerKind parse_scaler_kind(const std::string& name) {
  if (name == "minmax") return ScalerKind::MinMax;
  if (name == "standard") return ScalerKind::Standard;
  throw ConfigError("features", "unknown scaler kind '" + name + "'");
}

// ---------------------------------------------------------------------------

std::vector<Example> undersample(std::vector<Example> dataset, uint64_t seed) {
  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t i = 0; i < dataset.size(); ++i) {
    int label = dataset[i].label_index();
    if (label < 0) throw ConfigError("features", "example label not one-hot");
    by_class[label].push_back(i);
  }
  size_t m = dataset.size();
  for (int c = 0; c < kNumClasses; ++c) {
    if (by_class[c].empty())
      throw ConfigError("features", std::string("class '") + kClassNames[c] +
                                        "' is empty, cannot balance");
    m = std::min(m, by_class[c].size());
  }

  std::vector<char> keep(dataset.size(), 0);
  Rng rng(seed);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    // Partial Fisher-Yates: the first m entries are a uniform subset.
    for (size_t i = 0; i < m; ++i)
      std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    for (size_t i = 0; i < m; ++i) keep[idx[i]] = 1;
  }

  std::vector<Example> out;
  out.reserve(m * kNumClasses);
  for (size_t i = 0; i < dataset.size(); ++i)
    if (keep[i]) out.push_back(std::move(dataset[i]));
  return out;
}

void shuffle_examples(std::vector<Example>& dataset, uint64_t seed) {
  Rng rng(seed);
  for (size_t i = dataset.size(); i > 1; --i)
    std::swap(dataset[i - 1], dataset[uniform_index(rng, i)]);
}

std::pair<std::vector<Example>, std::vector<Example>> split_examples(
    std::vector<Example> dataset, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("features", "train fraction must lie in (0,1), got " +
                                      std::to_string(train_fraction));
  shuffle_examples(dataset, seed);
  size_t n_train = size_t(std::floor(train_fraction * double(dataset.size())));
  std::vector<Example> train(std::make_move_iterator(dataset.begin()),
                             std::make_move_iterator(dataset.begin() + n_train));
  std::vector<Example> test(std::make_move_iterator(dataset.begin() + n_train),
                            std::make_move_iterator(dataset.end()));
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------

namespace {

std::string shard_name(const std::string& tag, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.rec", tag.c_str(), index);
  return buf;
}

void write_shards(const std::vector<Example>& examples,
                  const std::string& dir, const std::string& tag,
                  int shards) {
  std::vector<std::unique_ptr<RecordWriter>> writers;
  for (int s = 0; s < shards; ++s)
    writers.push_back(std::make_unique<RecordWriter>(
        (std::filesystem::path(dir) / shard_name(tag, s)).string()));
  for (size_t i = 0; i < examples.size(); ++i)
    writers[i % shards]->write(examples[i]);
  for (auto& w : writers) w->close();
}

}  // namespace

PrepareStats prepare_dataset(const std::vector<std::string>& hep_files,
                             const std::string& out_dir,
                             const PrepareConfig& config) {
  if (config.shards < 1)
    throw ConfigError("features", "shard count must be >= 1");
  std::filesystem::create_directories(out_dir);

  PrepareStats stats;

  // Pass 1: trigger decisions only, so that the full feature matrices are
  // built just for the events that survive balancing.
  struct Hit {
    size_t file;
    uint64_t index_in_file;
    size_t lepton;
    EventLabel label;
  };
  std::vector<Hit> hits;
  for (size_t f = 0; f < hep_files.size(); ++f) {
    std::ifstream in(hep_files[f], std::ios::binary);
    if (!in) throw IoError("features", "cannot open " + hep_files[f]);
    RawEventReader reader(in);
    uint64_t index = 0;
    while (auto event = reader.next()) {
      ++stats.events_read;
      if (auto lepton =
              trigger_select(*event, config.trigger_pt, config.iso_max)) {
        hits.push_back({f, index, *lepton, event->label});
        ++stats.triggered_counts[int(event->label)];
      }
      ++index;
    }
  }
  stats.events_triggered = hits.size();

  // Balance on trigger survivors, before features are materialized.
  std::vector<char> keep(hits.size(), 1);
  if (config.balance) {
    std::array<std::vector<size_t>, kNumClasses> by_class;
    for (size_t i = 0; i < hits.size(); ++i)
      by_class[int(hits[i].label)].push_back(i);
    size_t m = hits.size();
    for (int c = 0; c < kNumClasses; ++c) {
      if (by_class[c].empty())
        throw ConfigError("features", std::string("class '") + kClassNames[c] +
                                          "' has no triggered events");
      m = std::min(m, by_class[c].size());
    }
    std::fill(keep.begin(), keep.end(), 0);
    Rng rng(derive_seed(config.seed, 1));
    for (int c = 0; c < kNumClasses; ++c) {
      auto& idx = by_class[c];
      for (size_t i = 0; i < m; ++i)
        std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
      for (size_t i = 0; i < m; ++i) keep[idx[i]] = 1;
    }
  }

  // Pass 2: build examples for kept events, in file order.
  std::vector<Example> examples;
  {
    size_t hit_at = 0;
    for (size_t f = 0; f < hep_files.size(); ++f) {
      while (hit_at < hits.size() && hits[hit_at].file < f) ++hit_at;
      if (hit_at >= hits.size()) break;
      std::ifstream in(hep_files[f], std::ios::binary);
      if (!in) throw IoError("features", "cannot open " + hep_files[f]);
      RawEventReader reader(in);
      uint64_t index = 0;
      while (auto event = reader.next()) {
        if (hit_at < hits.size() && hits[hit_at].file == f &&
            hits[hit_at].index_in_file == index) {
          if (keep[hit_at]) {
            rank_by_pt(*event);
            // Re-resolve the lepton: ranking permutes indices.
            auto lepton =
                trigger_select(*event, config.trigger_pt, config.iso_max);
            examples.push_back(make_example(*event, *lepton));
            ++stats.balanced_counts[int(event->label)];
          }
          ++hit_at;
        }
        ++index;
      }
    }
  }

  shuffle_examples(examples, derive_seed(config.seed, 2));
  size_t n_train =
      size_t(std::floor(config.train_fraction * double(examples.size())));
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
    throw ConfigError("features", "train fraction must lie in (0,1)");
  std::vector<Example> train(std::make_move_iterator(examples.begin()),
                             std::make_move_iterator(examples.begin() + n_train));
  std::vector<Example> test(std::make_move_iterator(examples.begin() + n_train),
                            std::make_move_iterator(examples.end()));
  examples.clear();

  stats.scaler = fit_scaler(train, config.scaler);
  for (Example& e : train) apply_scaler(stats.scaler, e);
  for (Example& e : test) apply_scaler(stats.scaler, e);

  stats.train_examples = train.size();
  stats.test_examples = test.size();

  write_shards(train, out_dir, "train", config.shards);
  write_shards(test, out_dir, "test", config.shards);
  write_prepare_meta((std::filesystem::path(out_dir) / "meta.txt").string(),
                     config, stats);
  return stats;
}

std::vector<std::string> list_shards(const std::string& dir,
                                     const std::string& tag) {
  std::vector<std::string> files;
  for (int s = 0;; ++s) {
    auto path = std::filesystem::path(dir) / shard_name(tag, s);
    if (!std::filesystem::exists(path)) break;
    files.push_back(path.string());
  }
  return files;
}

void write_prepare_meta(const std::string& path, const PrepareConfig& config,
                        const PrepareStats& stats) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("features", "cannot open " + path);
  out.precision(17);
  out << "seed=" << config.seed << "\n";
  out << "trigger_pt=" << config.trigger_pt << "\n";
  out << "iso_max=" << config.iso_max << "\n";
  out << "scaler=" << scaler_kind_name(config.scaler) << "\n";
  out << "balance=" << (config.balance ? 1 : 0) << "\n";
  out << "train_fraction=" << config.train_fraction << "\n";
  out << "shards=" << config.shards << "\n";
  out << "events_read=" << stats.events_read << "\n";
  out << "events_triggered=" << stats.events_triggered << "\n";
  for (int c = 0; c < kNumClasses; ++c)
    out << "triggered_" << kClassNames[c] << "=" << stats.triggered_counts[c]
        << "\n";
  for (int c = 0; c < kNumClasses; ++c)
    out << "balanced_" << kClassNames[c] << "=" << stats.balanced_counts[c]
        << "\n";
  out << "train_examples=" << stats.train_examples << "\n";
  out << "test_examples=" << stats.test_examples << "\n";
  auto dump = [&](const char* key, const double* v, int n) {
    out << key << "=";
    for (int i = 0; i < n; ++i) out << (i ? "," : "") << v[i];
    out << "\n";
  };
  dump("hlf_a", stats.scaler.hlf_a.data(), kHlfSize);
  dump("hlf_b", stats.scaler.hlf_b.data(), kHlfSize);
  dump("llf_a", stats.scaler.llf_a.data(), kLlfCols);
  dump("llf_b", stats.scaler.llf_b.data(), kLlfCols);
  if (!out) throw IoError("features", "write failed for " + path);
}

}  // namespace hepml
