#include "hepml/dist/allreduce.hpp"

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <vector>

#include "hepml/common.hpp"

namespace hepml::dist {
namespace {

constexpr size_t kChunkFloats = (32u << 20) / 4;  // half the frame cap
constexpr size_t kChunkHeader = 4 + 1 + 8 + 4;    // len, type, step, segment

struct Segment {
  size_t offset;
  size_t count;
};

Segment segment_of(size_t n, int world, int index) {
  size_t base = n / size_t(world), rem = n % size_t(world);
  size_t i = size_t(index);
  size_t offset = base * i + std::min(i, rem);
  size_t count = base + (i < rem ? 1 : 0);
  return {offset, count};
}

size_t chunk_frame_bytes(size_t floats) { return kChunkHeader + floats * 4; }

/// Sends our segment while receiving the peer's, sub-chunked under the
/// frame cap in lockstep (chunk counts are derived from the largest
/// segment so both sides always agree).
void exchange_segments(RingLink& link, uint64_t step, std::span<float> data,
                       const Segment& send_seg, uint32_t send_index,
                       const Segment& recv_seg, uint32_t recv_index,
                       std::vector<float>& recv_buf,
                       std::vector<uint8_t>& in_frame, size_t max_seg,
                       bool accumulate) {
  size_t chunks = std::max<size_t>(1, (max_seg + kChunkFloats - 1) /
                                          kChunkFloats);
  recv_buf.resize(recv_seg.count);
  for (size_t c = 0; c < chunks; ++c) {
    size_t s_off = std::min(send_seg.count, c * kChunkFloats);
    size_t s_n = std::min(send_seg.count - s_off, kChunkFloats);
    size_t r_off = std::min(recv_seg.count, c * kChunkFloats);
    size_t r_n = std::min(recv_seg.count - r_off, kChunkFloats);

    auto out_frame = encode_chunk(step, send_index,
                                  data.data() + send_seg.offset + s_off, s_n);
    in_frame.resize(chunk_frame_bytes(r_n));
    link.exchange(out_frame.data(), out_frame.size(), in_frame.data(),
                  in_frame.size());

    uint32_t length = get_u32le(in_frame.data());
    if (length != in_frame.size() - 4)
      throw ProtocolError("allreduce", "chunk length mismatch: got " +
                                           std::to_string(length));
    if (in_frame[4] != uint8_t(MsgType::Chunk))
      throw ProtocolError("allreduce", "expected CHUNK, got type " +
                                           std::to_string(in_frame[4]));
    uint64_t got_step = get_u64le(in_frame.data() + 5);
    uint32_t got_seg = get_u32le(in_frame.data() + 13);
    if (got_step != step || got_seg != recv_index)
      throw ProtocolError(
          "allreduce", "chunk out of schedule: step " +
                           std::to_string(got_step) + " segment " +
                           std::to_string(got_seg));
    for (size_t i = 0; i < r_n; ++i)
      recv_buf[r_off + i] = get_f32le(in_frame.data() + kChunkHeader + 4 * i);
  }
  float* dst = data.data() + recv_seg.offset;
  if (accumulate) {
    for (size_t i = 0; i < recv_seg.count; ++i) dst[i] += recv_buf[i];
  } else {
    std::memcpy(dst, recv_buf.data(), recv_seg.count * 4);
  }
}

}  // namespace

void ring_allreduce(std::span<float> data, uint64_t step, int rank, int world,
                    RingLink* link) {
  if (world < 1) throw ConfigError("allreduce", "world must be >= 1");
  if (world == 1) return;
  if (!link) throw ConfigError("allreduce", "world > 1 requires a ring link");

  const size_t n = data.size();
  size_t max_seg = segment_of(n, world, 0).count;  // segment 0 is largest
  std::vector<float> recv_buf;
  std::vector<uint8_t> in_frame;

  auto seg_index = [world](int v) { return uint32_t((v % world + world) % world); };

  // Scatter-reduce: after world-1 rounds this rank holds the fully
  // reduced segment (rank+1) mod world.
  for (int k = 0; k < world - 1; ++k) {
    uint32_t send_index = seg_index(rank - k);
    uint32_t recv_index = seg_index(rank - k - 1);
    exchange_segments(*link, step, data, segment_of(n, world, int(send_index)),
                      send_index, segment_of(n, world, int(recv_index)),
                      recv_index, recv_buf, in_frame, max_seg,
                      /*accumulate=*/true);
  }
  // All-gather: circulate the reduced segments.
  for (int k = 0; k < world - 1; ++k) {
    uint32_t send_index = seg_index(rank + 1 - k);
    uint32_t recv_index = seg_index(rank - k);
    exchange_segments(*link, step, data, segment_of(n, world, int(send_index)),
                      send_index, segment_of(n, world, int(recv_index)),
                      recv_index, recv_buf, in_frame, max_seg,
                      /*accumulate=*/false);
  }
}

// ---------------------------------------------------------------------------

namespace {

class ByteQueue {
public:
  void push(const uint8_t* data, size_t n) {
    std::lock_guard lock(mu_);
    bytes_.insert(bytes_.end(), data, data + n);
    cv_.notify_all();
  }

  void pop(uint8_t* out, size_t n) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return bytes_.size() >= n; });
    std::copy_n(bytes_.begin(), n, out);
    bytes_.erase(bytes_.begin(), bytes_.begin() + std::ptrdiff_t(n));
  }

private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<uint8_t> bytes_;
};

class InProcLink : public RingLink {
public:
  InProcLink(ByteQueue* to_next, ByteQueue* from_prev)
      : to_next_(to_next), from_prev_(from_prev) {}

  void exchange(const uint8_t* out, size_t out_n, uint8_t* in,
                size_t in_n) override {
    to_next_->push(out, out_n);
    from_prev_->pop(in, in_n);
  }

private:
  ByteQueue* to_next_;
  ByteQueue* from_prev_;
};

}  // namespace

struct InProcRing::Impl {
  std::vector<std::unique_ptr<ByteQueue>> queues;  // queue i: inbox of rank i
  std::vector<std::unique_ptr<InProcLink>> links;
};

InProcRing::InProcRing(int world) : impl_(std::make_unique<Impl>()) {
  for (int r = 0; r < world; ++r)
    impl_->queues.push_back(std::make_unique<ByteQueue>());
  for (int r = 0; r < world; ++r)
    impl_->links.push_back(std::make_unique<InProcLink>(
        impl_->queues[size_t((r + 1) % world)].get(),
        impl_->queues[size_t(r)].get()));
}

InProcRing::~InProcRing() = default;

RingLink& InProcRing::link(int rank) { return *impl_->links.at(rank); }

}  // namespace hepml::dist
