#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hepml/event.hpp"

namespace hepml {

/// Input pipeline configuration over .rec files.
struct PipeConfig {
  std::vector<std::string> files;
  int interleave_width = 4;
  size_t shuffle_buffer = 1;  // 1 = no shuffling
  int batch_size = 128;
  int prefetch_depth = 2;  // 0 = synchronous
  bool cache = false;
  uint64_t seed = 0;
  bool reshuffle_each_epoch = false;
  bool decode_llf = true;  // false: label + hlf only (HLF classifier runs)
};

struct PipeEpochStats {
  uint64_t examples = 0;
  uint64_t bytes_read = 0;  // 0 for cache-served epochs
  double seconds = 0;
};

/// Deterministic batch stream: one epoch visits every record exactly once,
/// independent of interleave width, buffer size and prefetch depth.
/// Concurrency (prefetch thread) never changes the emitted sequence.
class Pipeline {
public:
  explicit Pipeline(PipeConfig config);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Starts (or restarts) the given epoch. With reshuffle_each_epoch the
  /// shuffle seed advances as seed + epoch, otherwise every epoch replays
  /// the same order.
  void begin_epoch(int epoch);

  /// Next batch of the current epoch, or nullopt when the epoch ends.
  /// The final partial batch is emitted.
  std::optional<std::vector<Example>> next_batch();

  const PipeEpochStats& epoch_stats() const { return stats_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  PipeEpochStats stats_;
};

}  // namespace hepml
