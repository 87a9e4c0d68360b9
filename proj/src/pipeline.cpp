#include "hepml/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <mutex>
#include <thread>

#include "hepml/common.hpp"
#include "hepml/record_file.hpp"

namespace hepml {
namespace {

/// Round-robin record interleave over up to `width` concurrently open
/// readers; an exhausted slot is refilled from the pending file queue.
class Interleaver {
public:
  Interleaver(const std::vector<std::string>& files, int width,
              bool decode_llf, std::atomic<uint64_t>* bytes_counter)
      : decode_llf_(decode_llf), bytes_(bytes_counter) {
    pending_.assign(files.begin(), files.end());
    int open_n = std::min<int>(width, int(pending_.size()));
    for (int i = 0; i < open_n; ++i) open_next_into_slot(-1);
  }

  std::optional<Example> next() {
    while (!slots_.empty()) {
      if (cursor_ >= slots_.size()) cursor_ = 0;
      auto payload = slots_[cursor_]->next_payload();
      if (!payload) {
        if (!pending_.empty()) {
          open_next_into_slot(int(cursor_));
        } else {
          slots_.erase(slots_.begin() + cursor_);
        }
        continue;
      }
      if (bytes_)
        bytes_->fetch_add(payload->size() + kRecordFrameOverhead,
                          std::memory_order_relaxed);
      cursor_ = (cursor_ + 1) % slots_.size();
      return decode_example(*payload, decode_llf_);
    }
    return std::nullopt;
  }

private:
  void open_next_into_slot(int slot) {
    auto reader = std::make_unique<RecordReader>(pending_.front());
    pending_.pop_front();
    if (slot < 0)
      slots_.push_back(std::move(reader));
    else
      slots_[slot] = std::move(reader);
  }

  bool decode_llf_;
  std::atomic<uint64_t>* bytes_;
  std::deque<std::string> pending_;
  std::vector<std::unique_ptr<RecordReader>> slots_;
  size_t cursor_ = 0;
};

/// Bounded reservoir emitting a uniformly random buffered element.
/// Capacity 1 preserves the input order.
class ShuffleBuffer {
public:
  ShuffleBuffer(size_t capacity, uint64_t seed)
      : capacity_(capacity), rng_(seed) {
    if (capacity_ < 1)
      throw ConfigError("datapipe", "shuffle buffer must hold >= 1 example");
  }

  template <typename Source>
  std::optional<Example> next(Source&& source) {
    while (buffer_.size() < capacity_) {
      auto e = source();
      if (!e) break;
      buffer_.push_back(std::move(*e));
    }
    if (buffer_.empty()) return std::nullopt;
    size_t j = uniform_index(rng_, buffer_.size());
    Example out = std::move(buffer_[j]);
    if (auto refill = source()) {
      buffer_[j] = std::move(*refill);
    } else {
      buffer_[j] = std::move(buffer_.back());
      buffer_.pop_back();
    }
    return out;
  }

private:
  size_t capacity_;
  Rng rng_;
  std::vector<Example> buffer_;
};

using BatchSlot = std::optional<std::vector<Example>>;  // nullopt = epoch end

}  // namespace

struct Pipeline::Impl {
  PipeConfig config;

  // cache of decoded examples, populated on the first cached epoch
  std::vector<Example> cache_store;
  bool cache_ready = false;

  // per-epoch deterministic state
  std::unique_ptr<Interleaver> interleave;
  std::unique_ptr<ShuffleBuffer> shuffle;
  size_t cache_cursor = 0;
  bool cache_filling = false;
  bool epoch_open = false;
  std::atomic<uint64_t> bytes_read{0};
  std::chrono::steady_clock::time_point epoch_start;

  // prefetch machinery
  std::thread producer;
  std::mutex mu;
  std::condition_variable cv_put, cv_get;
  std::deque<BatchSlot> queue;
  size_t queue_cap = 0;
  bool stop = false;
  std::exception_ptr producer_error;

  ~Impl() { stop_producer(); }

  void stop_producer() {
    {
      std::lock_guard lock(mu);
      stop = true;
    }
    cv_put.notify_all();
    cv_get.notify_all();
    if (producer.joinable()) producer.join();
    queue.clear();
    stop = false;
    producer_error = nullptr;
  }

  std::optional<Example> source_next() {
    if (cache_ready && !cache_filling) {
      if (cache_cursor >= cache_store.size()) return std::nullopt;
      return cache_store[cache_cursor++];
    }
    auto e = interleave->next();
    if (e && cache_filling) cache_store.push_back(*e);
    return e;
  }

  BatchSlot make_batch() {
    std::vector<Example> batch;
    batch.reserve(config.batch_size);
    while (int(batch.size()) < config.batch_size) {
      auto e = shuffle->next([this] { return source_next(); });
      if (!e) break;
      batch.push_back(std::move(*e));
    }
    if (batch.empty()) return std::nullopt;
    return batch;
  }

  void producer_loop() {
    for (;;) {
      BatchSlot slot;
      try {
        slot = make_batch();
      } catch (...) {
        std::lock_guard lock(mu);
        producer_error = std::current_exception();
        cv_get.notify_all();
        return;
      }
      bool done = !slot.has_value();
      {
        std::unique_lock lock(mu);
        cv_put.wait(lock,
                    [this] { return stop || queue.size() < queue_cap; });
        if (stop) return;
        queue.push_back(std::move(slot));
      }
      cv_get.notify_one();
      if (done) return;
    }
  }
};

Pipeline::Pipeline(PipeConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.batch_size < 1)
    throw ConfigError("datapipe", "batch size must be >= 1");
  if (config.shuffle_buffer < 1)
    throw ConfigError("datapipe", "shuffle buffer must be >= 1");
  if (config.prefetch_depth < 0)
    throw ConfigError("datapipe", "prefetch depth must be >= 0");
  if (config.interleave_width < 1)
    throw ConfigError("datapipe", "interleave width must be >= 1");
  if (config.files.empty())
    throw ConfigError("datapipe", "no input files");
  for (const auto& f : config.files)
    if (!std::filesystem::exists(f))
      throw IoError("datapipe", "missing input file " + f);
  impl_->config = std::move(config);
}

Pipeline::~Pipeline() = default;

void Pipeline::begin_epoch(int epoch) {
  auto& im = *impl_;
  im.stop_producer();

  const PipeConfig& c = im.config;
  uint64_t shuffle_seed =
      c.reshuffle_each_epoch ? c.seed + uint64_t(epoch) : c.seed;
  im.shuffle = std::make_unique<ShuffleBuffer>(c.shuffle_buffer,
                                               splitmix64(shuffle_seed));
  im.bytes_read = 0;
  im.cache_cursor = 0;
  im.cache_filling = false;
  if (c.cache && im.cache_ready) {
    im.interleave.reset();
  } else {
    im.interleave = std::make_unique<Interleaver>(
        c.files, c.interleave_width, c.decode_llf, &im.bytes_read);
    if (c.cache) {
      im.cache_store.clear();
      im.cache_filling = true;
    }
  }
  im.epoch_open = true;
  im.epoch_start = std::chrono::steady_clock::now();
  stats_ = {};

  if (c.prefetch_depth > 0) {
    im.queue_cap = size_t(c.prefetch_depth);
    im.producer = std::thread([this] { impl_->producer_loop(); });
  }
}

std::optional<std::vector<Example>> Pipeline::next_batch() {
  auto& im = *impl_;
  if (!im.epoch_open) return std::nullopt;

  BatchSlot slot;
  if (im.config.prefetch_depth > 0) {
    std::unique_lock lock(im.mu);
    im.cv_get.wait(lock, [&im] {
      return !im.queue.empty() || im.producer_error || im.stop;
    });
    if (im.producer_error) {
      auto err = im.producer_error;
      lock.unlock();
      im.stop_producer();
      std::rethrow_exception(err);
    }
    slot = std::move(im.queue.front());
    im.queue.pop_front();
    lock.unlock();
    im.cv_put.notify_one();
  } else {
    slot = im.make_batch();
  }

  if (!slot) {
    im.epoch_open = false;
    if (im.cache_filling) {
      im.cache_ready = true;
      im.cache_filling = false;
    }
    if (im.producer.joinable()) im.producer.join();
    return std::nullopt;
  }
  stats_.examples += slot->size();
  stats_.bytes_read = im.bytes_read.load(std::memory_order_relaxed);
  stats_.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - im.epoch_start)
                       .count();
  return slot;
}

}  // namespace hepml
