// hepml: event generation, feature preparation, training (single and
// multi-worker), hyperparameter tuning, evaluation and inspection over the
// .hep / .rec / .mdl formats.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hepml/datagen.hpp"
#include "hepml/dist/train.hpp"
#include "hepml/eval.hpp"
#include "hepml/features.hpp"
#include "hepml/hep_file.hpp"
#include "hepml/metrics.hpp"
#include "hepml/nn/checkpoint.hpp"
#include "hepml/record_file.hpp"
#include "hepml/tune.hpp"

namespace fs = std::filesystem;
using namespace hepml;

namespace {

std::pair<std::string, uint16_t> parse_host_port(const std::string& s) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw ConfigError("cli", "expected host:port, got '" + s + "'");
  int port = std::stoi(s.substr(colon + 1));
  if (port < 0 || port > 65535)
    throw ConfigError("cli", "port out of range in '" + s + "'");
  return {s.substr(0, colon), uint16_t(port)};
}

std::vector<int> parse_widths(const std::string& spec) {
  std::vector<int> widths;
  std::istringstream in(spec);
  std::string w;
  while (std::getline(in, w, '-')) widths.push_back(std::stoi(w));
  return widths;
}

std::string default_run_dir(const std::string& base, uint64_t seed) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::gmtime(&t));
  return (fs::path(base) /
          ("run_" + std::string(stamp) + "_" + std::to_string(seed)))
      .string();
}

std::vector<Example> load_examples(const std::vector<std::string>& files,
                                   bool decode_llf, size_t limit = 0) {
  std::vector<Example> out;
  for (const auto& f : files) {
    RecordReader reader(f);
    while (auto e = reader.next_example(decode_llf)) {
      out.push_back(std::move(*e));
      if (limit && out.size() >= limit) return out;
    }
  }
  return out;
}

struct DataArgs {
  std::string data_dir;
  std::vector<std::string> files;
  std::vector<std::string> val_files;

  std::vector<std::string> train_list() const {
    if (!files.empty()) return files;
    auto shards = list_shards(data_dir, "train");
    if (shards.empty())
      throw ConfigError("cli", "no train_*.rec shards under " + data_dir);
    return shards;
  }
  std::vector<std::string> test_list(bool required) const {
    if (!val_files.empty()) return val_files;
    if (data_dir.empty()) {
      if (required)
        throw ConfigError("cli", "no test data given");
      return {};
    }
    auto shards = list_shards(data_dir, "test");
    if (required && shards.empty())
      throw ConfigError("cli", "no test_*.rec shards under " + data_dir);
    return shards;
  }
};

int spawned_worker_wait(std::vector<pid_t>& pids, bool job_ok) {
  bool all_ok = true;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  for (pid_t pid : pids) {
    int status = 0;
    for (;;) {
      pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) break;
      if (r < 0) {
        all_ok = false;
        break;
      }
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        all_ok = false;
        break;
      }
      usleep(20000);
    }
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0)) all_ok = false;
  }
  return (job_ok && all_ok) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HEP event topology classification pipeline"};
  app.set_config("--config", "", "read options from a config file");
  app.require_subcommand(1);

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "write synthetic events (.hep)");
  struct {
    std::string out;
    uint64_t events = 10000;
    uint64_t seed = 1;
    double separability = 1.0;
    std::vector<double> fractions = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::vector<double> means = {60, 25, 30};
    std::string metrics;
  } g;
  gen->add_option("--out", g.out, ".hep output path")->required();
  gen->add_option("--events", g.events, "number of events");
  gen->add_option("--seed", g.seed, "generator seed");
  gen->add_option("--separability", g.separability,
                  "class separation in [0,1]");
  gen->add_option("--fractions", g.fractions, "class fractions w,qcd,ttbar")
      ->expected(3);
  gen->add_option("--mean-particles", g.means,
                  "mean charged,photon,neutral multiplicities")
      ->expected(3);
  gen->add_option("--metrics", g.metrics, "metrics JSONL path");

  // ---- prepare ----
  auto* prep = app.add_subcommand(
      "prepare", "trigger + features + balance + split (.hep -> .rec)");
  struct {
    std::vector<std::string> input;
    std::string out;
    uint64_t seed = 1;
    double trigger_pt = kDefaultTriggerPt;
    double iso_max = kDefaultIsoMax;
    std::string scaler = "minmax";
    bool no_balance = false;
    double split = 0.8;
    int shards = 4;
    std::string metrics;
  } p;
  prep->add_option("--input", p.input, ".hep input files")->required();
  prep->add_option("--out", p.out, "output directory")->required();
  prep->add_option("--seed", p.seed, "pipeline seed");
  prep->add_option("--trigger-pt", p.trigger_pt, "trigger pT threshold, GeV");
  prep->add_option("--iso-max", p.iso_max, "trigger isolation ceiling");
  prep->add_option("--scaler", p.scaler, "minmax|standard");
  prep->add_flag("--no-balance", p.no_balance, "skip undersampling");
  prep->add_option("--split", p.split, "train fraction");
  prep->add_option("--shards", p.shards, "output shard count per split");
  prep->add_option("--metrics", p.metrics, "metrics JSONL path");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a classifier");
  struct {
    DataArgs data;
    std::string model = "hlf";
    int epochs = 12;
    int batch = 128;
    double lr = 1e-3;
    double lr_decay = 0.9;
    int workers = 1;
    std::string listen = "127.0.0.1:0";
    bool no_spawn = false;
    bool no_val = false;
    std::string run_dir;
    std::string out_base = "runs";
    uint64_t seed = 1;
    uint64_t shuffle_buffer = 4096;
    bool no_cache = false;
    bool reshuffle = false;
    int interleave = 4;
    int prefetch = 2;
    int digest_interval = 50;
    uint64_t max_steps = 0;
    std::string hidden;
    std::string activation = "relu";
    int gru_hidden = 50;
    double dropout = 0.5;
    std::string metrics;
  } t;
  tr->add_option("--data", t.data.data_dir, "prepared dataset directory");
  tr->add_option("--train-files", t.data.files, "explicit train .rec files");
  tr->add_option("--val-files", t.data.val_files, "explicit val .rec files");
  tr->add_option("--model", t.model, "hlf|seq|inclusive");
  tr->add_option("--epochs", t.epochs);
  tr->add_option("--batch", t.batch, "per-worker batch size");
  tr->add_option("--lr", t.lr, "base learning rate (scaled by workers)");
  tr->add_option("--lr-decay", t.lr_decay, "per-epoch decay factor");
  tr->add_option("--workers", t.workers, "world size incl. coordinator");
  tr->add_option("--listen", t.listen, "coordinator host:port (0 = pick)");
  tr->add_flag("--no-spawn", t.no_spawn,
               "wait for external `hepml worker` processes");
  tr->add_flag("--no-val", t.no_val, "skip validation loss");
  tr->add_option("--run-dir", t.run_dir, "output directory for this run");
  tr->add_option("--out", t.out_base, "base dir for generated run dirs");
  tr->add_option("--seed", t.seed);
  tr->add_option("--shuffle-buffer", t.shuffle_buffer, "1 = no shuffling");
  tr->add_flag("--no-cache", t.no_cache);
  tr->add_flag("--reshuffle-each-epoch", t.reshuffle);
  tr->add_option("--interleave", t.interleave);
  tr->add_option("--prefetch", t.prefetch);
  tr->add_option("--digest-interval", t.digest_interval,
                 "steps between cross-rank parameter digests");
  tr->add_option("--max-steps", t.max_steps, "stop after N global steps");
  tr->add_option("--hidden", t.hidden, "dense widths, e.g. 50-20-10");
  tr->add_option("--activation", t.activation, "relu|tanh");
  tr->add_option("--gru-hidden", t.gru_hidden);
  tr->add_option("--dropout", t.dropout);
  tr->add_option("--metrics", t.metrics, "metrics JSONL path");

  // ---- worker ----
  auto* wk = app.add_subcommand("worker", "join a distributed training job");
  struct {
    std::string coordinator;
    int rank = -1;
    std::string metrics;
  } w;
  wk->add_option("--coordinator", w.coordinator, "coordinator host:port")
      ->required();
  wk->add_option("--rank", w.rank, "worker rank (1..world-1)")->required();
  wk->add_option("--metrics", w.metrics, "metrics JSONL path");

  // ---- tune ----
  auto* tu = app.add_subcommand("tune", "grid search with k-fold CV");
  struct {
    DataArgs data;
    std::string grid;
    int folds = 8;
    int parallelism = 4;
    uint64_t subsample = 10000;
    int epochs = 3;
    uint64_t seed = 1;
    std::string out = "tune_results.csv";
    std::string metrics;
  } u;
  tu->add_option("--data", u.data.data_dir, "prepared dataset directory");
  tu->add_option("--files", u.data.files, "explicit .rec files");
  tu->add_option("--grid", u.grid, "grid spec file (default: built-in 200)");
  tu->add_option("--folds", u.folds);
  tu->add_option("--parallelism", u.parallelism);
  tu->add_option("--subsample", u.subsample, "max examples used");
  tu->add_option("--epochs", u.epochs, "train epochs per fold");
  tu->add_option("--seed", u.seed);
  tu->add_option("--out", u.out, "results CSV path");
  tu->add_option("--metrics", u.metrics, "metrics JSONL path");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "ROC/AUC report on test data");
  struct {
    std::string model;
    DataArgs data;
    std::string out = ".";
    std::string metrics;
  } e;
  ev->add_option("--model", e.model, "MDL1 checkpoint")->required();
  ev->add_option("--data", e.data.data_dir, "prepared dataset directory");
  ev->add_option("--files", e.data.val_files, "explicit test .rec files");
  ev->add_option("--out", e.out, "output directory");
  ev->add_option("--metrics", e.metrics, "metrics JSONL path");

  // ---- inspect ----
  auto* in = app.add_subcommand("inspect", "dump file counts and schemas");
  std::vector<std::string> inspect_paths;
  in->add_option("paths", inspect_paths, ".hep/.rec/meta files")->required();

  // ---- dist-allreduce (verification utility) ----
  auto* ar = app.add_subcommand(
      "dist-allreduce", "ring all-reduce self-test across local processes");
  struct {
    int rank = 0;
    int world = 1;
    int port_base = 29500;
    uint64_t len = 1024;
    uint64_t seed = 7;
    std::string out;
  } a;
  ar->add_option("--rank", a.rank)->required();
  ar->add_option("--world", a.world)->required();
  ar->add_option("--port-base", a.port_base);
  ar->add_option("--len", a.len, "vector length (floats)");
  ar->add_option("--seed", a.seed);
  ar->add_option("--out", a.out, "binary float32 output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (*gen) {
      GenConfig config;
      config.seed = g.seed;
      config.n_events = g.events;
      for (int i = 0; i < 3; ++i) config.class_fractions[i] = g.fractions[i];
      for (int i = 0; i < 3; ++i) config.mean_particles[i] = g.means[i];
      config.separability = g.separability;
      auto t0 = std::chrono::steady_clock::now();
      uint64_t n = generate_to_file(config, g.out);
      double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      MetricsWriter metrics(resolve_metrics_path(g.metrics, ""));
      metrics.write({.stage = "generate",
                     .examples_per_sec = secs > 0 ? double(n) / secs : 0});
      std::cout << "generated events=" << n << " file=" << g.out << "\n";
      return 0;
    }

    if (*prep) {
      PrepareConfig config;
      config.seed = p.seed;
      config.trigger_pt = p.trigger_pt;
      config.iso_max = p.iso_max;
      config.scaler = parse_scaler_kind(p.scaler);
      config.balance = !p.no_balance;
      config.train_fraction = p.split;
      config.shards = p.shards;
      auto t0 = std::chrono::steady_clock::now();
      PrepareStats stats = prepare_dataset(p.input, p.out, config);
      double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      MetricsWriter metrics(resolve_metrics_path(p.metrics, ""));
      metrics.write(
          {.stage = "prepare",
           .examples_per_sec =
               secs > 0 ? double(stats.events_read) / secs : 0});
      std::cout << "events_read=" << stats.events_read
                << " triggered=" << stats.events_triggered
                << " train=" << stats.train_examples
                << " test=" << stats.test_examples << " out=" << p.out
                << "\n";
      return 0;
    }

    if (*tr) {
      dist::JobSpec spec;
      spec.model = nn::default_spec(nn::parse_model_kind(t.model));
      if (!t.hidden.empty()) spec.model.hidden = parse_widths(t.hidden);
      spec.model.activation = nn::parse_activation(t.activation);
      spec.model.gru_hidden = t.gru_hidden;
      spec.model.dropout_rate = t.dropout;
      spec.epochs = t.epochs;
      spec.per_worker_batch = t.batch;
      spec.base_lr = t.lr;
      spec.lr_decay_per_epoch = t.lr_decay;
      spec.world_size = t.workers;
      spec.seed = t.seed;
      spec.shards = dist::shard_dataset(t.data.train_list(), t.workers);
      spec.shuffle_buffer = t.shuffle_buffer;
      spec.interleave_width = t.interleave;
      spec.prefetch_depth = t.prefetch;
      spec.cache = !t.no_cache;
      spec.reshuffle_each_epoch = t.reshuffle;
      spec.digest_interval = t.digest_interval;
      spec.max_steps = t.max_steps;

      dist::TrainOptions options;
      options.run_dir =
          t.run_dir.empty() ? default_run_dir(t.out_base, t.seed) : t.run_dir;
      if (!t.no_val) options.val_files = t.data.test_list(false);
      options.metrics_path = resolve_metrics_path(
          t.metrics, (fs::path(options.run_dir) / "metrics.jsonl").string());
      fs::create_directories(options.run_dir);

      auto [host, port] = parse_host_port(t.listen);
      std::vector<pid_t> children;
      if (t.workers > 1 && !t.no_spawn) {
        // Pin the port before forking so workers know where to connect.
        if (port == 0) {
          dist::Listener probe(host, 0);
          port = probe.port();
        }
        std::string coord = host + ":" + std::to_string(port);
        for (int r = 1; r < t.workers; ++r) {
          pid_t pid = ::fork();
          if (pid < 0) throw IoError("cli", "fork failed");
          if (pid == 0) {
            std::string rank = std::to_string(r);
            std::string wmetrics =
                (fs::path(options.run_dir) /
                 ("metrics_rank" + rank + ".jsonl"))
                    .string();
            ::execl("/proc/self/exe", "hepml", "worker", "--coordinator",
                    coord.c_str(), "--rank", rank.c_str(), "--metrics",
                    wmetrics.c_str(), (char*)nullptr);
            _exit(127);
          }
          children.push_back(pid);
        }
      }

      bool ok = false;
      std::string failure;
      dist::TrainResult result;
      try {
        result = dist::run_coordinator(spec, host, port, options);
        ok = true;
      } catch (const Error& err) {
        failure = err.what();
      }
      int rc = children.empty() ? (ok ? 0 : 1)
                                : spawned_worker_wait(children, ok);
      if (ok) {
        std::cout << "trained model=" << t.model << " steps=" << result.steps
                  << " final_loss=" << result.final_train_loss
                  << " digest_checks=" << result.digest_checks
                  << " digest_mismatches=" << result.digest_mismatches
                  << " run_dir=" << options.run_dir << "\n";
      } else {
        std::cerr << "error: " << failure << "\n";
      }
      return rc;
    }

    if (*wk) {
      auto [host, port] = parse_host_port(w.coordinator);
      return dist::run_worker(host, port, w.rank,
                              resolve_metrics_path(w.metrics, ""));
    }

    if (*tu) {
      GridSpace space = u.grid.empty() ? default_grid()
                                       : parse_grid_file(u.grid);
      auto files = u.data.train_list();
      auto examples = load_examples(files, false, u.subsample);
      TuneConfig config{.folds = u.folds,
                        .parallelism = u.parallelism,
                        .seed = u.seed,
                        .epochs = u.epochs};
      TuneResult result = grid_search(space, examples, config);
      write_tune_csv(u.out, space, result);
      MetricsWriter metrics(resolve_metrics_path(u.metrics, ""));
      metrics.write({.stage = "tune",
                     .examples_per_sec =
                         result.wall_seconds > 0
                             ? double(examples.size()) / result.wall_seconds
                             : 0});
      const auto& best = result.ranked.front();
      std::cout << "candidates=" << result.ranked.size()
                << " wall_seconds=" << result.wall_seconds << " best=";
      for (const auto& [axis, value] : best.config)
        std::cout << axis << ":" << value << " ";
      std::cout << "mean_auc=" << best.mean_auc << " out=" << u.out << "\n";
      return 0;
    }

    if (*ev) {
      nn::Checkpoint ckpt = nn::load_checkpoint(e.model);
      nn::Model<float> model = nn::restore_model(ckpt);
      PipeConfig pc;
      pc.files = e.data.test_list(true);
      pc.batch_size = 256;
      pc.decode_llf = model.spec().kind != nn::ModelKind::Hlf;
      Pipeline pipe(pc);
      auto t0 = std::chrono::steady_clock::now();
      EvalReport report = evaluate(model, pipe);
      double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      fs::create_directories(e.out);
      for (int c = 0; c < kNumClasses; ++c)
        write_roc_csv((fs::path(e.out) /
                       ("roc_" + std::string(kClassNames[c]) + ".csv"))
                          .string(),
                      report.roc[c]);
      write_report_json((fs::path(e.out) / "report.json").string(), report);
      MetricsWriter metrics(resolve_metrics_path(e.metrics, ""));
      metrics.write({.stage = "evaluate",
                     .examples_per_sec =
                         secs > 0 ? double(report.examples) / secs : 0});
      std::cout << "examples=" << report.examples;
      for (int c = 0; c < kNumClasses; ++c)
        std::cout << " auc_" << kClassNames[c] << "=" << report.auc[c];
      std::cout << " out=" << e.out << "\n";
      return 0;
    }

    if (*in) {
      for (const auto& path : inspect_paths) {
        if (path.ends_with(".rec")) {
          uint64_t n = count_records(path);
          std::cout << path << " format=rec records=" << n
                    << " payload_bytes=" << kExamplePayloadBytes << "\n";
        } else if (path.ends_with(".hep")) {
          std::array<uint64_t, kNumClasses> counts{};
          uint64_t n = 0;
          std::ifstream file(path, std::ios::binary);
          if (!file) throw IoError("cli", "cannot open " + path);
          RawEventReader reader(file);
          while (auto event = reader.next()) {
            ++counts[int(event->label)];
            ++n;
          }
          std::cout << path << " format=hep events=" << n;
          for (int c = 0; c < kNumClasses; ++c)
            std::cout << " " << kClassNames[c] << "=" << counts[c];
          std::cout << "\n";
        } else {
          std::ifstream file(path);
          if (!file) throw IoError("cli", "cannot open " + path);
          std::cout << file.rdbuf();
        }
      }
      return 0;
    }

    if (*ar) {
      // Every rank listens on port_base+rank and connects to its successor.
      dist::Listener listener("127.0.0.1",
                              uint16_t(a.port_base + a.rank));
      std::vector<float> data(a.len);
      Rng rng(derive_seed(a.seed, uint64_t(a.rank)));
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      for (auto& v : data) v = float(unit(rng));

      if (a.world > 1) {
        uint16_t next_port =
            uint16_t(a.port_base + (a.rank + 1) % a.world);
        dist::Socket to_next = dist::tcp_connect("127.0.0.1", next_port,
                                                 15000);
        dist::Socket from_prev = listener.accept();
        dist::TcpRingLink link(std::move(to_next), std::move(from_prev));
        dist::ring_allreduce(std::span<float>(data), 1, a.rank, a.world,
                             &link);
      }
      std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(data.data()),
                std::streamsize(data.size() * 4));
      if (!out) throw IoError("cli", "write failed for " + a.out);
      return 0;
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: cli: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
