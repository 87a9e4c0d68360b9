#include "hepml/dist/wire.hpp"

#include <cstring>

#include "hepml/common.hpp"

namespace hepml::dist {
namespace {

class BodyWriter {
public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(uint8_t(v));
    buf_.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    size_t at = buf_.size();
    buf_.resize(at + 4);
    put_u32le(buf_.data() + at, v);
  }
  void u64(uint64_t v) {
    size_t at = buf_.size();
    buf_.resize(at + 8);
    put_u64le(buf_.data() + at, v);
  }
  void f32(float v) {
    size_t at = buf_.size();
    buf_.resize(at + 4);
    put_f32le(buf_.data() + at, v);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw ProtocolError("wire", "string too long");
    u16(uint16_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void lstr(const std::string& s) {
    u32(uint32_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<uint8_t> take() { return std::move(buf_); }

private:
  std::vector<uint8_t> buf_;
};

class BodyReader {
public:
  BodyReader(const uint8_t* data, size_t n) : p_(data), end_(data + n) {}

  uint8_t u8() {
    need(1);
    return *p_++;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p_[0]) | uint16_t(p_[1]) << 8;
    p_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = get_u32le(p_);
    p_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = get_u64le(p_);
    p_ += 8;
    return v;
  }
  float f32() {
    need(4);
    float v = get_f32le(p_);
    p_ += 4;
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::string lstr() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  size_t remaining() const { return size_t(end_ - p_); }
  const uint8_t* cursor() const { return p_; }

  void need(size_t n) {
    if (size_t(end_ - p_) < n)
      throw ProtocolError("wire", "message body too short");
  }

private:
  const uint8_t* p_;
  const uint8_t* end_;
};

}  // namespace

std::vector<uint8_t> encode_frame(const WireMessage& msg) {
  uint64_t length = 1 + msg.body.size();
  if (length > kMaxFrameBytes)
    throw ProtocolError("wire", "frame of " + std::to_string(length) +
                                    " bytes exceeds the 64 MiB cap");
  std::vector<uint8_t> frame(4 + length);
  put_u32le(frame.data(), uint32_t(length));
  frame[4] = uint8_t(msg.type);
  std::memcpy(frame.data() + 5, msg.body.data(), msg.body.size());
  return frame;
}

WireMessage decode_frame_body(const uint8_t* data, size_t n) {
  if (n < 1) throw ProtocolError("wire", "empty frame");
  if (data[0] > uint8_t(MsgType::Done))
    throw ProtocolError("wire",
                        "unknown message type " + std::to_string(data[0]));
  WireMessage m;
  m.type = MsgType(data[0]);
  m.body.assign(data + 1, data + n);
  return m;
}

WireMessage encode_hello(const Hello& h) {
  BodyWriter w;
  w.u32(h.proto_version);
  w.u32(h.rank);
  w.str(h.ring_host);
  w.u16(h.ring_port);
  return {MsgType::Hello, w.take()};
}

Hello decode_hello(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  Hello h;
  h.proto_version = r.u32();
  h.rank = r.u32();
  h.ring_host = r.str();
  h.ring_port = r.u16();
  return h;
}

WireMessage encode_job(const JobMessage& j) {
  BodyWriter w;
  const JobSpec& s = j.spec;
  w.u8(uint8_t(s.model.kind));
  w.u8(uint8_t(s.model.activation));
  w.u32(uint32_t(s.model.gru_hidden));
  w.f64(s.model.dropout_rate);
  w.u32(uint32_t(int32_t(s.model.mask_column)));
  w.u32(uint32_t(s.model.hlf_dim));
  w.u32(uint32_t(s.model.llf_dim));
  w.u32(uint32_t(s.model.seq_len));
  w.u32(uint32_t(s.model.classes));
  w.u32(uint32_t(s.model.hidden.size()));
  for (int h : s.model.hidden) w.u32(uint32_t(h));
  w.u32(uint32_t(s.epochs));
  w.u32(uint32_t(s.per_worker_batch));
  w.f64(s.base_lr);
  w.f64(s.lr_decay_per_epoch);
  w.u32(uint32_t(s.world_size));
  w.u64(s.seed);
  w.u32(uint32_t(s.shards.size()));
  for (const auto& shard : s.shards) {
    w.u32(uint32_t(shard.size()));
    for (const auto& f : shard) w.str(f);
  }
  w.u64(s.shuffle_buffer);
  w.u32(uint32_t(s.interleave_width));
  w.u32(uint32_t(s.prefetch_depth));
  w.u8(s.cache ? 1 : 0);
  w.u8(s.reshuffle_each_epoch ? 1 : 0);
  w.u32(uint32_t(s.digest_interval));
  w.u64(s.steps_per_epoch);
  w.u64(s.max_steps);
  w.u32(uint32_t(j.ring.size()));
  for (const auto& ep : j.ring) {
    w.str(ep.host);
    w.u16(ep.port);
  }
  return {MsgType::Job, w.take()};
}

JobMessage decode_job(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  JobMessage j;
  JobSpec& s = j.spec;
  s.model.kind = nn::ModelKind(r.u8());
  s.model.activation = nn::Activation(r.u8());
  s.model.gru_hidden = int(r.u32());
  s.model.dropout_rate = r.f64();
  s.model.mask_column = int(int32_t(r.u32()));
  s.model.hlf_dim = int(r.u32());
  s.model.llf_dim = int(r.u32());
  s.model.seq_len = int(r.u32());
  s.model.classes = int(r.u32());
  uint32_t nh = r.u32();
  s.model.hidden.clear();
  for (uint32_t i = 0; i < nh; ++i) s.model.hidden.push_back(int(r.u32()));
  s.epochs = int(r.u32());
  s.per_worker_batch = int(r.u32());
  s.base_lr = r.f64();
  s.lr_decay_per_epoch = r.f64();
  s.world_size = int(r.u32());
  s.seed = r.u64();
  uint32_t nranks = r.u32();
  s.shards.resize(nranks);
  for (uint32_t i = 0; i < nranks; ++i) {
    uint32_t nf = r.u32();
    for (uint32_t k = 0; k < nf; ++k) s.shards[i].push_back(r.str());
  }
  s.shuffle_buffer = r.u64();
  s.interleave_width = int(r.u32());
  s.prefetch_depth = int(r.u32());
  s.cache = r.u8() != 0;
  s.reshuffle_each_epoch = r.u8() != 0;
  s.digest_interval = int(r.u32());
  s.steps_per_epoch = r.u64();
  s.max_steps = r.u64();
  uint32_t nring = r.u32();
  for (uint32_t i = 0; i < nring; ++i) {
    Endpoint ep;
    ep.host = r.str();
    ep.port = r.u16();
    j.ring.push_back(ep);
  }
  return j;
}

WireMessage encode_step_done(const StepDone& s) {
  BodyWriter w;
  w.u64(s.step);
  w.f32(s.loss);
  w.u8(s.has_digest ? 1 : 0);
  if (s.has_digest) w.u32(s.digest);
  return {MsgType::StepDone, w.take()};
}

StepDone decode_step_done(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  StepDone s;
  s.step = r.u64();
  s.loss = r.f32();
  s.has_digest = r.u8() != 0;
  if (s.has_digest) s.digest = r.u32();
  return s;
}

WireMessage encode_epoch_done(const EpochDone& e) {
  BodyWriter w;
  w.u32(e.epoch);
  w.f32(e.mean_loss);
  return {MsgType::EpochDone, w.take()};
}

EpochDone decode_epoch_done(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  EpochDone e;
  e.epoch = r.u32();
  e.mean_loss = r.f32();
  return e;
}

WireMessage encode_abort(const std::string& reason) {
  BodyWriter w;
  w.lstr(reason);
  return {MsgType::Abort, w.take()};
}

std::string decode_abort(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  return r.lstr();
}

WireMessage encode_done(const DoneStats& d) {
  BodyWriter w;
  w.f32(d.final_loss);
  w.f32(d.wall_seconds);
  w.u32(d.digest_checks);
  w.u32(d.digest_mismatches);
  return {MsgType::Done, w.take()};
}

DoneStats decode_done(const WireMessage& m) {
  BodyReader r(m.body.data(), m.body.size());
  DoneStats d;
  d.final_loss = r.f32();
  d.wall_seconds = r.f32();
  d.digest_checks = r.u32();
  d.digest_mismatches = r.u32();
  return d;
}

std::vector<uint8_t> encode_chunk(uint64_t step, uint32_t segment_index,
                                  const float* data, size_t n) {
  uint64_t length = 1 + 8 + 4 + n * 4;
  if (length > kMaxFrameBytes)
    throw ProtocolError("wire", "chunk exceeds the 64 MiB frame cap");
  std::vector<uint8_t> frame(4 + length);
  put_u32le(frame.data(), uint32_t(length));
  frame[4] = uint8_t(MsgType::Chunk);
  put_u64le(frame.data() + 5, step);
  put_u32le(frame.data() + 13, segment_index);
  for (size_t i = 0; i < n; ++i) put_f32le(frame.data() + 17 + 4 * i, data[i]);
  return frame;
}

}  // namespace hepml::dist
