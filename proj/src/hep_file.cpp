#include "hepml/hep_file.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "hepml/common.hpp"

namespace hepml {
namespace {

constexpr size_t kParticleBytes = 1 + 8 * 4;

void encode_particle(uint8_t* p, const Particle& q) {
  p[0] = uint8_t(q.category);
  put_f32le(p + 1, q.px);
  put_f32le(p + 5, q.py);
  put_f32le(p + 9, q.pz);
  put_f32le(p + 13, q.e);
  put_f32le(p + 17, q.charge);
  put_f32le(p + 21, q.d0);
  put_f32le(p + 25, q.dz);
  put_f32le(p + 29, q.iso);
}

Particle decode_particle(const uint8_t* p, uint64_t event_index) {
  if (p[0] > uint8_t(ParticleCategory::Muon))
    throw FormatError("hep", "invalid particle category byte " +
                                 std::to_string(p[0]) + " in event " +
                                 std::to_string(event_index));
  Particle q;
  q.category = ParticleCategory(p[0]);
  q.px = get_f32le(p + 1);
  q.py = get_f32le(p + 5);
  q.pz = get_f32le(p + 9);
  q.e = get_f32le(p + 13);
  q.charge = get_f32le(p + 17);
  q.d0 = get_f32le(p + 21);
  q.dz = get_f32le(p + 25);
  q.iso = get_f32le(p + 29);
  return q;
}

}  // namespace

RawEventWriter::RawEventWriter(std::ostream& sink) : sink_(&sink) {
  uint8_t header[8];
  std::memcpy(header, kHepMagic, 4);
  put_u32le(header + 4, kHepVersion);
  sink_->write(reinterpret_cast<const char*>(header), sizeof header);
  if (!*sink_) throw IoError("hep", "write failed at byte offset 0");
  offset_ = sizeof header;
}

void RawEventWriter::write(const RawEvent& event) {
  std::vector<uint8_t> buf(5 + event.particles.size() * kParticleBytes);
  buf[0] = uint8_t(event.label);
  put_u32le(buf.data() + 1, uint32_t(event.particles.size()));
  size_t at = 5;
  for (const Particle& q : event.particles) {
    encode_particle(buf.data() + at, q);
    at += kParticleBytes;
  }
  sink_->write(reinterpret_cast<const char*>(buf.data()), buf.size());
  if (!*sink_)
    throw IoError("hep",
                  "write failed at byte offset " + std::to_string(offset_));
  offset_ += buf.size();
  ++count_;
}

RawEventReader::RawEventReader(std::istream& source) : source_(&source) {
  uint8_t header[8];
  source_->read(reinterpret_cast<char*>(header), sizeof header);
  if (source_->gcount() != sizeof header ||
      std::memcmp(header, kHepMagic, 4) != 0)
    throw FormatError("hep", "bad magic, not a HEP1 file");
  if (get_u32le(header + 4) != kHepVersion)
    throw FormatError("hep", "unsupported format version " +
                                 std::to_string(get_u32le(header + 4)));
}

std::optional<RawEvent> RawEventReader::next() {
  uint8_t head[5];
  source_->read(reinterpret_cast<char*>(head), sizeof head);
  if (source_->gcount() == 0 && source_->eof()) return std::nullopt;
  if (source_->gcount() != sizeof head)
    throw TruncationError(
        "hep", "truncated event header at event " + std::to_string(count_));
  if (head[0] > uint8_t(EventLabel::TTbar))
    throw FormatError("hep", "invalid label byte " + std::to_string(head[0]) +
                                 " in event " + std::to_string(count_));
  uint32_t n = get_u32le(head + 1);

  RawEvent event;
  event.label = EventLabel(head[0]);
  event.particles.resize(n);
  std::vector<uint8_t> buf(kParticleBytes);
  for (uint32_t i = 0; i < n; ++i) {
    source_->read(reinterpret_cast<char*>(buf.data()), kParticleBytes);
    if (size_t(source_->gcount()) != kParticleBytes)
      throw TruncationError("hep", "truncated particle " + std::to_string(i) +
                                       " in event " + std::to_string(count_));
    event.particles[i] = decode_particle(buf.data(), count_);
  }
  ++count_;
  return event;
}

uint64_t write_raw_events(const std::vector<RawEvent>& events,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("hep", "cannot open " + path + " for writing");
  RawEventWriter writer(out);
  for (const RawEvent& e : events) writer.write(e);
  out.flush();
  if (!out) throw IoError("hep", "flush failed for " + path);
  return writer.count();
}

std::vector<RawEvent> read_raw_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("hep", "cannot open " + path);
  RawEventReader reader(in);
  std::vector<RawEvent> events;
  while (auto e = reader.next()) events.push_back(std::move(*e));
  return events;
}

}  // namespace hepml
