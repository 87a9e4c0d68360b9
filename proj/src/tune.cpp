#include "hepml/tune.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "hepml/common.hpp"
#include "hepml/eval.hpp"
#include "hepml/nn/adam.hpp"
#include "hepml/nn/model.hpp"

namespace hepml {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

GridSpace parse_grid_text(const std::string& text) {
  GridSpace space;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("tune", "grid line without '=': " + line);
    std::string name = trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::istringstream vals(line.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) {
      v = trim(v);
      if (!v.empty()) values.push_back(v);
    }
    if (name.empty() || values.empty())
      throw ConfigError("tune", "empty axis in grid line: " + line);
    space.axes.emplace_back(name, values);
  }
  if (space.axes.empty()) throw ConfigError("tune", "grid has no axes");
  return space;
}

GridSpace parse_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("tune", "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_grid_text(buf.str());
}

GridSpace default_grid() {
  return parse_grid_text(
      "hidden = 50-20-10, 64-32, 32-16-8, 100-50, 20-10\n"
      "activation = relu, tanh\n"
      "lr = 0.0005, 0.001, 0.002, 0.005\n"
      "batch = 32, 64, 128, 256, 512\n");
}

std::vector<Candidate> grid_expand(const GridSpace& space) {
  if (space.axes.empty()) throw ConfigError("tune", "grid has no axes");
  size_t total = 1;
  for (const auto& [name, values] : space.axes) {
    if (values.empty())
      throw ConfigError("tune", "axis '" + name + "' has no values");
    if (total > (size_t(1) << 40) / values.size())
      throw ConfigError("tune", "grid size overflow");
    total *= values.size();
  }
  std::vector<Candidate> out;
  out.reserve(total);
  std::vector<size_t> odo(space.axes.size(), 0);
  for (size_t i = 0; i < total; ++i) {
    Candidate c;
    for (size_t a = 0; a < space.axes.size(); ++a)
      c.emplace_back(space.axes[a].first, space.axes[a].second[odo[a]]);
    out.push_back(std::move(c));
    for (size_t a = space.axes.size(); a-- > 0;) {
      if (++odo[a] < space.axes[a].second.size()) break;
      odo[a] = 0;
    }
  }
  return out;
}

std::vector<Fold> kfold_split(size_t n, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("tune", "k must be >= 2");
  if (size_t(k) > n)
    throw ConfigError("tune", "k = " + std::to_string(k) +
                                  " exceeds dataset size " +
                                  std::to_string(n));
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[uniform_index(rng, i)]);

  std::vector<Fold> folds(k);
  size_t base = n / size_t(k), rem = n % size_t(k);
  size_t at = 0;
  for (int f = 0; f < k; ++f) {
    size_t len = base + (size_t(f) < rem ? 1 : 0);
    folds[f].val.assign(perm.begin() + at, perm.begin() + at + len);
    at += len;
  }
  for (int f = 0; f < k; ++f)
    for (int g = 0; g < k; ++g)
      if (g != f)
        folds[f].train.insert(folds[f].train.end(), folds[g].val.begin(),
                              folds[g].val.end());
  return folds;
}

namespace {

struct CandidateSetup {
  nn::ModelSpec spec;
  double lr = 1e-3;
  int batch = 128;
};

CandidateSetup materialize(const Candidate& config) {
  CandidateSetup setup;
  setup.spec = nn::default_spec(nn::ModelKind::Hlf);
  for (const auto& [axis, value] : config) {
    if (axis == "hidden") {
      setup.spec.hidden.clear();
      std::istringstream in(value);
      std::string w;
      while (std::getline(in, w, '-'))
        setup.spec.hidden.push_back(std::stoi(w));
    } else if (axis == "activation") {
      setup.spec.activation = nn::parse_activation(value);
    } else if (axis == "lr") {
      setup.lr = std::stod(value);
    } else if (axis == "batch") {
      setup.batch = std::stoi(value);
    } else if (axis == "epochs") {
      // consumed below via TuneConfig override
    } else {
      throw ConfigError("tune", "unknown grid axis '" + axis + "'");
    }
  }
  return setup;
}

double run_fold(const CandidateSetup& setup, const std::vector<Example>& data,
                const Fold& fold, uint64_t seed, int epochs) {
  nn::Model<float> model(setup.spec, seed);
  nn::Adam<float> adam(model.params().size());

  std::vector<size_t> order = fold.train;
  Rng rng(derive_seed(seed, 0x464f4c44));
  std::vector<Example> scratch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (size_t at = 0; at < order.size(); at += size_t(setup.batch)) {
      size_t n = std::min(size_t(setup.batch), order.size() - at);
      scratch.clear();
      for (size_t i = 0; i < n; ++i) scratch.push_back(data[order[at + i]]);
      auto batch = nn::make_batch(scratch, nn::ModelKind::Hlf);
      float loss = model.train_step(batch, 0);
      (void)loss;
      adam.step(model.params().params(), model.params().grads(),
                float(setup.lr));
    }
  }

  scratch.clear();
  for (size_t i : fold.val) scratch.push_back(data[i]);
  auto batch = nn::make_batch(scratch, nn::ModelKind::Hlf);
  nn::Mat<float> probs = model.forward(batch);
  std::vector<std::array<double, kNumClasses>> scores(fold.val.size());
  std::vector<uint8_t> labels(fold.val.size());
  for (size_t i = 0; i < fold.val.size(); ++i) {
    for (int c = 0; c < kNumClasses; ++c) scores[i][c] = probs(Eigen::Index(i), c);
    labels[i] = uint8_t(scratch[i].label_index());
  }
  double sum = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> s(scores.size());
    std::vector<uint8_t> y(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      y[i] = labels[i] == c ? 1 : 0;
    }
    sum += auc(s, y);
  }
  return sum / kNumClasses;
}

bool config_less(const Candidate& a, const Candidate& b) {
  for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (a[i].second != b[i].second) return a[i].second < b[i].second;
  }
  return a.size() < b.size();
}

}  // namespace

TuneResult grid_search(const GridSpace& space,
                       const std::vector<Example>& dataset,
                       const TuneConfig& config) {
  if (dataset.empty()) throw ConfigError("tune", "empty tuning dataset");
  if (config.parallelism < 1)
    throw ConfigError("tune", "parallelism must be >= 1");

  auto candidates = grid_expand(space);
  // Config errors (unknown axis, unparseable value) fail the sweep up
  // front; only runtime divergence is tolerated per candidate.
  std::vector<CandidateSetup> setups;
  for (const auto& c : candidates) {
    try {
      setups.push_back(materialize(c));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("tune", std::string("bad grid value: ") + e.what());
    }
  }
  auto folds = kfold_split(dataset.size(), config.folds, config.seed);

  struct Task {
    size_t candidate;
    int fold;
  };
  std::vector<Task> tasks;
  for (size_t c = 0; c < candidates.size(); ++c)
    for (int f = 0; f < config.folds; ++f) tasks.push_back({c, int(f)});

  std::vector<CandidateResult> results(candidates.size());
  for (size_t c = 0; c < candidates.size(); ++c) {
    results[c].config = candidates[c];
    results[c].fold_aucs.assign(config.folds, 0.0);
  }
  std::vector<std::atomic<long>> wall_us(candidates.size());
  std::vector<std::atomic<bool>> diverged(candidates.size());

  auto t0 = std::chrono::steady_clock::now();
  std::atomic<size_t> next_task{0};
  auto worker = [&] {
    for (;;) {
      size_t t = next_task.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task& task = tasks[t];
      auto task_t0 = std::chrono::steady_clock::now();
      double fold_auc = 0;
      try {
        fold_auc = run_fold(setups[task.candidate], dataset,
                            folds[task.fold],
                            derive_seed(config.seed, task.candidate),
                            config.epochs);
      } catch (const std::exception&) {
        fold_auc = 0;  // diverged grid point; the sweep carries on
        diverged[task.candidate] = true;
      }
      results[task.candidate].fold_aucs[task.fold] = fold_auc;
      wall_us[task.candidate] += std::chrono::duration_cast<
                                     std::chrono::microseconds>(
                                     std::chrono::steady_clock::now() -
                                     task_t0)
                                     .count();
    }
  };

  if (config.parallelism == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < config.parallelism; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (size_t c = 0; c < results.size(); ++c) {
    auto& r = results[c];
    r.diverged = diverged[c];
    double sum = 0;
    for (double a : r.fold_aucs) sum += a;
    r.mean_auc = sum / double(config.folds);
    r.wall_ms = double(wall_us[c].load()) / 1000.0;
  }

  std::sort(results.begin(), results.end(),
            [](const CandidateResult& a, const CandidateResult& b) {
              if (a.mean_auc != b.mean_auc) return a.mean_auc > b.mean_auc;
              return config_less(a.config, b.config);
            });
  for (size_t i = 0; i < results.size(); ++i) results[i].rank = int(i + 1);

  TuneResult out;
  out.ranked = std::move(results);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

void write_tune_csv(const std::string& path, const GridSpace& space,
                    const TuneResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("tune", "cannot open " + path);
  out.precision(10);
  for (const auto& [name, values] : space.axes) out << name << ",";
  int folds = result.ranked.empty() ? 0
                                    : int(result.ranked[0].fold_aucs.size());
  for (int f = 0; f < folds; ++f) out << "fold" << f << "_auc,";
  out << "mean_auc,rank,diverged\n";
  for (const auto& r : result.ranked) {
    for (const auto& [axis, value] : r.config) out << value << ",";
    for (double a : r.fold_aucs) out << a << ",";
    out << r.mean_auc << "," << r.rank << "," << (r.diverged ? 1 : 0) << "\n";
  }
  if (!out) throw IoError("tune", "write failed for " + path);
}

}  // namespace hepml
