#include "hepml/dist/train.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "hepml/crc32c.hpp"
#include "hepml/metrics.hpp"
#include "hepml/nn/adam.hpp"
#include "hepml/nn/checkpoint.hpp"
#include "hepml/pipeline.hpp"
#include "hepml/record_file.hpp"

namespace hepml::dist {

double scaled_lr(double base_lr, int world_size) {
  if (world_size < 1) throw ConfigError("dist", "world size must be >= 1");
  return base_lr * world_size;
}

double lr_at_epoch(double scaled, double decay, int epoch) {
  return scaled * std::pow(decay, epoch);
}

std::vector<std::vector<std::string>> shard_dataset(
    const std::vector<std::string>& files, int world) {
  if (world < 1) throw ConfigError("dist", "world size must be >= 1");
  if (int(files.size()) < world)
    throw ConfigError("dist", "only " + std::to_string(files.size()) +
                                  " files for " + std::to_string(world) +
                                  " workers; re-shard the dataset with at "
                                  "least one file per worker");
  std::vector<std::vector<std::string>> shards(world);
  for (size_t i = 0; i < files.size(); ++i)
    shards[i % size_t(world)].push_back(files[i]);
  return shards;
}

uint32_t param_digest(const nn::FlatVec<float>& params) {
  return crc32c(params.data(), size_t(params.size()) * sizeof(float));
}

namespace {

constexpr int kWaitTimeoutSec = 180;

uint64_t dropout_seed_for(uint64_t job_seed, int rank, uint64_t step) {
  return derive_seed(job_seed ^ 0x44524f50ull,
                     (uint64_t(uint32_t(rank)) << 40) | step);
}

uint64_t shard_shuffle_seed(uint64_t job_seed, int rank) {
  return derive_seed(job_seed ^ 0x53485546ull, uint64_t(uint32_t(rank)));
}

void validate_job(const JobSpec& spec) {
  if (spec.world_size < 1)
    throw ConfigError("dist", "world size must be >= 1");
  if (spec.per_worker_batch < 1)
    throw ConfigError("dist", "per-worker batch must be >= 1");
  if (spec.epochs < 1) throw ConfigError("dist", "epochs must be >= 1");
  if (int(spec.shards.size()) != spec.world_size)
    throw ConfigError("dist", "shard table has " +
                                  std::to_string(spec.shards.size()) +
                                  " entries for world size " +
                                  std::to_string(spec.world_size));
  for (int r = 0; r < spec.world_size; ++r)
    if (spec.shards[r].empty())
      throw ConfigError("dist", "rank " + std::to_string(r) +
                                    " has no shard files; re-shard the "
                                    "dataset");
}

uint64_t compute_steps_per_epoch(const JobSpec& spec) {
  uint64_t steps = UINT64_MAX;
  for (const auto& shard : spec.shards) {
    uint64_t n = 0;
    for (const auto& f : shard) n += count_records(f);
    if (n == 0)
      throw ConfigError("dist", "empty shard (" + shard.front() + " ...)");
    uint64_t b = uint64_t(spec.per_worker_batch);
    steps = std::min(steps, (n + b - 1) / b);
  }
  return steps;
}

PipeConfig pipe_config_for(const JobSpec& spec, int rank) {
  PipeConfig pc;
  pc.files = spec.shards[rank];
  pc.interleave_width = spec.interleave_width;
  pc.shuffle_buffer = spec.shuffle_buffer;
  pc.batch_size = spec.per_worker_batch;
  pc.prefetch_depth = spec.prefetch_depth;
  pc.cache = spec.cache;
  pc.seed = shard_shuffle_seed(spec.seed, rank);
  pc.reshuffle_each_epoch = spec.reshuffle_each_epoch;
  pc.decode_llf = spec.model.kind != nn::ModelKind::Hlf;
  return pc;
}

struct StepInfo {
  uint64_t step;
  float loss;
  std::optional<uint32_t> digest;
};

struct LoopHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(int epoch, float mean_loss, double examples_per_sec)>
      on_epoch;
  std::function<bool()> abort_requested = [] { return false; };
};

struct LoopOutcome {
  uint64_t steps = 0;
  float final_epoch_loss = 0;
  double wall_seconds = 0;
};

/// The synchronous per-rank loop: local gradient, ring all-reduce, average,
/// identical Adam update everywhere.
LoopOutcome run_local_loop(const JobSpec& spec, int rank, RingLink* link,
                           nn::Model<float>& model, nn::Adam<float>& adam,
                           const LoopHooks& hooks) {
  Pipeline pipe(pipe_config_for(spec, rank));
  const double lr_base = scaled_lr(spec.base_lr, spec.world_size);
  auto t0 = std::chrono::steady_clock::now();

  LoopOutcome out;
  uint64_t global_step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < spec.epochs && !stop; ++epoch) {
    const float lr =
        float(lr_at_epoch(lr_base, spec.lr_decay_per_epoch, epoch));
    pipe.begin_epoch(epoch);
    double loss_sum = 0;
    uint64_t epoch_steps = 0;
    auto e0 = std::chrono::steady_clock::now();
    for (uint64_t s = 0; s < spec.steps_per_epoch; ++s) {
      if (hooks.abort_requested())
        throw TrainingError("dist", "abort requested");
      auto batch = pipe.next_batch();
      if (!batch)
        throw TrainingError("dist", "rank " + std::to_string(rank) +
                                        " ran out of data at epoch step " +
                                        std::to_string(s));
      auto b = nn::make_batch(*batch, spec.model.kind);
      float loss = model.train_step(
          b, dropout_seed_for(spec.seed, rank, global_step + 1));
      auto& grads = model.params().grads();
      if (spec.world_size > 1) {
        ring_allreduce(std::span<float>(grads.data(), size_t(grads.size())),
                       global_step + 1, rank, spec.world_size, link);
        grads /= float(spec.world_size);
      }
      adam.step(model.params().params(), grads, lr);
      ++global_step;
      loss_sum += loss;
      ++epoch_steps;

      StepInfo info{global_step, loss, std::nullopt};
      if (spec.digest_interval > 0 &&
          global_step % uint64_t(spec.digest_interval) == 0)
        info.digest = param_digest(model.params().params());
      if (hooks.on_step) hooks.on_step(info);

      if (spec.max_steps > 0 && global_step >= spec.max_steps) {
        stop = true;
        break;
      }
    }
    float mean_loss = epoch_steps ? float(loss_sum / double(epoch_steps)) : 0;
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - e0)
                      .count();
    double eps = secs > 0 ? double(epoch_steps) *
                                double(spec.per_worker_batch) / secs
                          : 0;
    if (hooks.on_epoch) hooks.on_epoch(epoch, mean_loss, eps);
    out.final_epoch_loss = mean_loss;
  }
  out.steps = global_step;
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

/// Aggregated view of worker control traffic on the coordinator.
struct ControlState {
  std::mutex mu;
  std::condition_variable cv;
  int world = 1;
  std::vector<char> ready;
  std::map<uint64_t, std::map<int, uint32_t>> digests;
  std::map<uint32_t, std::map<int, float>> epoch_losses;
  std::map<int, DoneStats> done;
  bool aborted = false;
  std::string abort_reason;

  void abort(const std::string& reason) {
    std::lock_guard lock(mu);
    if (!aborted) {
      aborted = true;
      abort_reason = reason;
    }
    cv.notify_all();
  }

  template <typename Pred>
  void wait(Pred pred, const std::string& what) {
    std::unique_lock lock(mu);
    if (!cv.wait_for(lock, std::chrono::seconds(kWaitTimeoutSec),
                     [&] { return aborted || pred(); }))
      throw TrainingError("dist", "timed out waiting for " + what);
    if (aborted) throw TrainingError("dist", "job aborted: " + abort_reason);
  }
};

void coordinator_receive_loop(Socket& sock, int rank, ControlState& state) {
  try {
    for (;;) {
      WireMessage msg = sock.recv_message();
      if (msg.type == MsgType::Abort) {
        state.abort("rank " + std::to_string(rank) + ": " +
                    decode_abort(msg));
        return;
      }
      bool finished = false;
      {
        std::lock_guard lock(state.mu);
        switch (msg.type) {
          case MsgType::Ready:
            state.ready[rank] = 1;
            break;
          case MsgType::StepDone: {
            StepDone s = decode_step_done(msg);
            if (s.has_digest) state.digests[s.step][rank] = s.digest;
            break;
          }
          case MsgType::EpochDone: {
            EpochDone e = decode_epoch_done(msg);
            state.epoch_losses[e.epoch][rank] = e.mean_loss;
            break;
          }
          case MsgType::Done:
            state.done[rank] = decode_done(msg);
            finished = true;
            break;
          default:
            throw ProtocolError("dist", "unexpected message type " +
                                            std::to_string(int(msg.type)));
        }
      }
      state.cv.notify_all();
      if (finished) return;
    }
  } catch (const std::exception& e) {
    state.abort("rank " + std::to_string(rank) + " connection lost: " +
                e.what());
  }
}

std::string local_addr_of(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    return "127.0.0.1";
  char buf[INET_ADDRSTRLEN] = {0};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return buf;
}

float validation_loss(nn::Model<float>& model,
                      const std::vector<std::string>& val_files,
                      Pipeline*& val_pipe, std::unique_ptr<Pipeline>& holder,
                      int epoch) {
  if (val_files.empty()) return std::numeric_limits<float>::quiet_NaN();
  if (!val_pipe) {
    PipeConfig pc;
    pc.files = val_files;
    pc.batch_size = 256;
    pc.cache = true;
    pc.decode_llf = model.spec().kind != nn::ModelKind::Hlf;
    holder = std::make_unique<Pipeline>(pc);
    val_pipe = holder.get();
  }
  val_pipe->begin_epoch(epoch);
  double loss_sum = 0;
  uint64_t n = 0;
  while (auto batch = val_pipe->next_batch()) {
    auto b = nn::make_batch(*batch, model.spec().kind);
    nn::Mat<float> p = model.forward(b);
    auto [loss, dz] = nn::xent_loss_grad<float>(p, b.labels);
    loss_sum += double(loss) * double(b.rows());
    n += uint64_t(b.rows());
  }
  return n ? float(loss_sum / double(n)) : 0.0f;
}

std::string checkpoint_name(const std::string& run_dir, int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch_%03d.mdl", epoch);
  return (std::filesystem::path(run_dir) / buf).string();
}

}  // namespace

TrainResult run_coordinator(JobSpec spec, const std::string& listen_host,
                            uint16_t listen_port,
                            const TrainOptions& options) {
  validate_job(spec);
  if (spec.steps_per_epoch == 0)
    spec.steps_per_epoch = compute_steps_per_epoch(spec);
  if (!options.run_dir.empty())
    std::filesystem::create_directories(options.run_dir);

  MetricsWriter metrics(options.metrics_path);
  nn::Model<float> model(spec.model, spec.seed);
  nn::Adam<float> adam(model.params().size());

  TrainResult result;
  Pipeline* val_pipe = nullptr;
  std::unique_ptr<Pipeline> val_holder;

  auto record_epoch = [&](int epoch, float train_loss) {
    float vloss =
        validation_loss(model, options.val_files, val_pipe, val_holder, epoch);
    result.loss_series.push_back({epoch, double(train_loss), double(vloss)});
    if (!options.run_dir.empty()) {
      write_loss_csv(
          (std::filesystem::path(options.run_dir) / "loss.csv").string(),
          result.loss_series);
      save_checkpoint(checkpoint_name(options.run_dir, epoch), model, &adam);
    }
  };

  if (spec.world_size == 1) {
    LoopHooks hooks;
    hooks.on_epoch = [&](int epoch, float mean_loss, double eps) {
      record_epoch(epoch, mean_loss);
      metrics.write({.stage = "train",
                     .examples_per_sec = eps,
                     .epoch = epoch,
                     .loss = mean_loss,
                     .lr = lr_at_epoch(scaled_lr(spec.base_lr, 1),
                                       spec.lr_decay_per_epoch, epoch),
                     .worker_rank = 0});
    };
    LoopOutcome out = run_local_loop(spec, 0, nullptr, model, adam, hooks);
    result.steps = out.steps;
    result.final_train_loss = out.final_epoch_loss;
    result.wall_seconds = out.wall_seconds;
    if (!options.run_dir.empty()) {
      result.checkpoint_path =
          (std::filesystem::path(options.run_dir) / "checkpoint_final.mdl")
              .string();
      save_checkpoint(result.checkpoint_path, model, &adam);
    }
    return result;
  }

  // Multi-worker: control plane + ring setup.
  const int world = spec.world_size;
  Listener control(listen_host, listen_port);
  Listener ring_listen(listen_host, 0);

  std::vector<Socket> workers(world);  // index = rank, [0] unused
  std::vector<Endpoint> ring(world);
  for (int i = 0; i < world - 1; ++i) {
    Socket sock = control.accept();
    WireMessage msg = sock.recv_message();
    if (msg.type != MsgType::Hello)
      throw ProtocolError("dist", "expected HELLO");
    Hello hello = decode_hello(msg);
    if (hello.proto_version != kProtoVersion) {
      sock.send_message(encode_abort("protocol version mismatch: got " +
                                     std::to_string(hello.proto_version)));
      throw ProtocolError("dist", "worker protocol version " +
                                      std::to_string(hello.proto_version) +
                                      " refused");
    }
    if (hello.rank < 1 || int(hello.rank) >= world ||
        workers[hello.rank].valid()) {
      sock.send_message(encode_abort("bad rank"));
      throw ProtocolError("dist",
                          "bad worker rank " + std::to_string(hello.rank));
    }
    ring[hello.rank] = {hello.ring_host, hello.ring_port};
    workers[hello.rank] = std::move(sock);
  }
  std::string self_host = (listen_host.empty() || listen_host == "0.0.0.0")
                              ? "127.0.0.1"
                              : listen_host;
  ring[0] = {self_host, ring_listen.port()};

  JobMessage job{spec, ring};
  for (int r = 1; r < world; ++r) workers[r].send_message(encode_job(job));

  Socket to_next = tcp_connect(ring[1].host, ring[1].port, 15000);
  Socket from_prev = ring_listen.accept();
  auto link = std::make_shared<TcpRingLink>(std::move(to_next),
                                            std::move(from_prev));

  ControlState state;
  state.world = world;
  state.ready.assign(world, 0);
  std::vector<std::thread> receivers;
  for (int r = 1; r < world; ++r)
    receivers.emplace_back(
        [&, r] { coordinator_receive_loop(workers[r], r, state); });

  auto broadcast_abort = [&](const std::string& reason) {
    for (int r = 1; r < world; ++r) {
      try {
        if (workers[r].valid())
          workers[r].send_message(encode_abort(reason));
      } catch (...) {
      }
    }
  };

  try {
    state.wait(
        [&] {
          for (int r = 1; r < world; ++r)
            if (!state.ready[r]) return false;
          return true;
        },
        "worker READY");

    LoopHooks hooks;
    hooks.abort_requested = [&] {
      std::lock_guard lock(state.mu);
      return state.aborted;
    };
    hooks.on_step = [&](const StepInfo& info) {
      if (!info.digest) return;
      state.wait(
          [&] {
            auto it = state.digests.find(info.step);
            return it != state.digests.end() &&
                   int(it->second.size()) == world - 1;
          },
          "digests at step " + std::to_string(info.step));
      std::unique_lock lock(state.mu);
      ++result.digest_checks;
      auto& per_rank = state.digests[info.step];
      for (auto& [rank, digest] : per_rank) {
        if (digest != *info.digest) {
          ++result.digest_mismatches;
          lock.unlock();
          throw TrainingError(
              "dist", "parameter digest mismatch at step " +
                          std::to_string(info.step) + " between rank 0 and " +
                          std::to_string(rank));
        }
      }
      state.digests.erase(info.step);
    };
    hooks.on_epoch = [&](int epoch, float mean_loss, double eps) {
      state.wait(
          [&] {
            auto it = state.epoch_losses.find(uint32_t(epoch));
            return it != state.epoch_losses.end() &&
                   int(it->second.size()) == world - 1;
          },
          "EPOCH_DONE " + std::to_string(epoch));
      double sum = mean_loss;
      {
        std::lock_guard lock(state.mu);
        for (auto& [rank, loss] : state.epoch_losses[uint32_t(epoch)])
          sum += loss;
      }
      float cluster_mean = float(sum / world);
      record_epoch(epoch, cluster_mean);
      metrics.write({.stage = "train",
                     .examples_per_sec = eps * world,
                     .epoch = epoch,
                     .loss = cluster_mean,
                     .lr = lr_at_epoch(scaled_lr(spec.base_lr, world),
                                       spec.lr_decay_per_epoch, epoch),
                     .worker_rank = 0});
    };

    LoopOutcome out = run_local_loop(spec, 0, link.get(), model, adam, hooks);

    state.wait([&] { return int(state.done.size()) == world - 1; },
               "worker DONE");
    {
      std::lock_guard lock(state.mu);
      for (auto& [rank, d] : state.done) {
        result.digest_checks = std::max(result.digest_checks, d.digest_checks);
        result.digest_mismatches += d.digest_mismatches;
      }
    }
    result.steps = out.steps;
    result.final_train_loss = out.final_epoch_loss;
    result.wall_seconds = out.wall_seconds;
    if (!options.run_dir.empty()) {
      result.checkpoint_path =
          (std::filesystem::path(options.run_dir) / "checkpoint_final.mdl")
              .string();
      save_checkpoint(result.checkpoint_path, model, &adam);
    }
  } catch (const std::exception& e) {
    state.abort(e.what());
    broadcast_abort(e.what());
    link->shutdown();
    for (auto& s : workers) s.shutdown_both();
    for (auto& t : receivers) t.join();
    throw TrainingError("dist", std::string("job aborted: ") + e.what());
  }

  for (auto& s : workers) s.shutdown_both();
  for (auto& t : receivers) t.join();
  return result;
}

int run_worker(const std::string& coord_host, uint16_t coord_port, int rank,
               const std::string& metrics_path) {
  std::shared_ptr<TcpRingLink> link;
  std::atomic<bool> abort_flag{false};
  Socket control;
  std::thread watcher;
  std::mutex control_send_mu;

  auto safe_send = [&](const WireMessage& msg) {
    std::lock_guard lock(control_send_mu);
    control.send_message(msg);
  };

  try {
    MetricsWriter metrics(metrics_path);
    Listener ring_listen("0.0.0.0", 0);
    control = tcp_connect(coord_host, coord_port, 15000);

    Hello hello;
    hello.rank = uint32_t(rank);
    hello.ring_host = local_addr_of(control.fd());
    hello.ring_port = ring_listen.port();
    control.send_message(encode_hello(hello));

    WireMessage msg = control.recv_message();
    if (msg.type == MsgType::Abort)
      throw TrainingError("dist", "refused: " + decode_abort(msg));
    if (msg.type != MsgType::Job)
      throw ProtocolError("dist", "expected JOB");
    JobMessage job = decode_job(msg);
    const JobSpec& spec = job.spec;
    if (rank < 1 || rank >= spec.world_size)
      throw ConfigError("dist", "rank out of range");

    const Endpoint& next = job.ring[size_t((rank + 1) % spec.world_size)];
    Socket to_next = tcp_connect(next.host, next.port, 15000);
    Socket from_prev = ring_listen.accept();
    link = std::make_shared<TcpRingLink>(std::move(to_next),
                                         std::move(from_prev));

    // Watch for ABORT (or coordinator loss) and unblock the collectives.
    watcher = std::thread([&] {
      try {
        for (;;) {
          WireMessage m = control.recv_message();
          if (m.type == MsgType::Abort) {
            abort_flag = true;
            link->shutdown();
            return;
          }
        }
      } catch (...) {
        abort_flag = true;
        if (link) link->shutdown();
      }
    });

    safe_send({MsgType::Ready, {}});

    nn::Model<float> model(spec.model, spec.seed);
    nn::Adam<float> adam(model.params().size());

    LoopHooks hooks;
    hooks.abort_requested = [&] { return abort_flag.load(); };
    hooks.on_step = [&](const StepInfo& info) {
      StepDone s{info.step, info.loss, info.digest.has_value(),
                 info.digest.value_or(0)};
      safe_send(encode_step_done(s));
    };
    hooks.on_epoch = [&](int epoch, float mean_loss, double eps) {
      safe_send(encode_epoch_done({uint32_t(epoch), mean_loss}));
      metrics.write({.stage = "train",
                     .examples_per_sec = eps,
                     .epoch = epoch,
                     .loss = mean_loss,
                     .worker_rank = rank});
    };

    LoopOutcome out = run_local_loop(spec, rank, link.get(), model, adam,
                                     hooks);

    uint32_t checks = spec.digest_interval > 0
                          ? uint32_t(out.steps / uint64_t(spec.digest_interval))
                          : 0;
    safe_send(encode_done(
        {out.final_epoch_loss, float(out.wall_seconds), checks, 0}));
    control.shutdown_both();
    watcher.join();
    return 0;
  } catch (const std::exception& e) {
    if (control.valid()) {
      try {
        safe_send(encode_abort(e.what()));
      } catch (...) {
      }
      control.shutdown_both();
    }
    if (link) link->shutdown();
    if (watcher.joinable()) watcher.join();
    fprintf(stderr, "ABORT rank %d: %s\n", rank, e.what());
    return 1;
  }
}

}  // namespace hepml::dist
