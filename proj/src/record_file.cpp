#include "hepml/record_file.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "hepml/common.hpp"
#include "hepml/crc32c.hpp"

namespace hepml {

void encode_record(const std::vector<uint8_t>& payload, std::ostream& sink) {
  uint8_t head[12];
  put_u64le(head, payload.size());
  put_u32le(head + 8, mask_crc(crc32c(head, 8)));
  uint8_t foot[4];
  put_u32le(foot, mask_crc(crc32c(payload.data(), payload.size())));

  sink.write(reinterpret_cast<const char*>(head), sizeof head);
  sink.write(reinterpret_cast<const char*>(payload.data()), payload.size());
  sink.write(reinterpret_cast<const char*>(foot), sizeof foot);
  if (!sink) throw IoError("record", "write failed");
}

std::optional<std::vector<uint8_t>> decode_record(std::istream& source) {
  uint8_t head[12];
  source.read(reinterpret_cast<char*>(head), sizeof head);
  if (source.gcount() == 0 && source.eof()) return std::nullopt;
  if (source.gcount() != sizeof head)
    throw TruncationError("record", "EOF inside frame header");

  if (unmask_crc(get_u32le(head + 8)) != crc32c(head, 8))
    throw CorruptRecordError(CorruptRecordError::Kind::Length,
                             "length CRC mismatch");
  uint64_t len = get_u64le(head);

  std::vector<uint8_t> payload(len);
  source.read(reinterpret_cast<char*>(payload.data()), std::streamsize(len));
  if (uint64_t(source.gcount()) != len)
    throw TruncationError("record", "EOF inside payload of length " +
                                        std::to_string(len));

  uint8_t foot[4];
  source.read(reinterpret_cast<char*>(foot), sizeof foot);
  if (source.gcount() != sizeof foot)
    throw TruncationError("record", "EOF inside payload CRC");
  if (unmask_crc(get_u32le(foot)) != crc32c(payload.data(), payload.size()))
    throw CorruptRecordError(CorruptRecordError::Kind::Payload,
                             "payload CRC mismatch");
  return payload;
}

std::vector<uint8_t> encode_example(const Example& e) {
  if (e.llf.size() != size_t(kLlfRows) * kLlfCols)
    throw ShapeError("record", "example llf has " +
                                   std::to_string(e.llf.size()) +
                                   " values, want " +
                                   std::to_string(kLlfRows * kLlfCols));
  std::vector<uint8_t> payload(kExamplePayloadBytes);
  uint8_t* p = payload.data();
  for (float v : e.label) put_f32le(p, v), p += 4;
  for (float v : e.hlf) put_f32le(p, v), p += 4;
  for (float v : e.llf) put_f32le(p, v), p += 4;
  return payload;
}

Example decode_example(const uint8_t* payload, size_t n, bool decode_llf) {
  if (n != kExamplePayloadBytes)
    throw ShapeError("record", "example payload is " + std::to_string(n) +
                                   " bytes, want " +
                                   std::to_string(kExamplePayloadBytes));
  Example e;
  const uint8_t* p = payload;
  for (float& v : e.label) v = get_f32le(p), p += 4;
  for (float& v : e.hlf) v = get_f32le(p), p += 4;
  if (decode_llf) {
    e.llf.resize(size_t(kLlfRows) * kLlfCols);
    for (float& v : e.llf) v = get_f32le(p), p += 4;
  }
  return e;
}

Example decode_example(const std::vector<uint8_t>& payload, bool decode_llf) {
  return decode_example(payload.data(), payload.size(), decode_llf);
}

struct RecordWriter::Impl {
  std::ofstream out;
};

RecordWriter::RecordWriter(const std::string& path)
    : impl_(std::make_unique<Impl>()) {
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out)
    throw IoError("record", "cannot open " + path + " for writing");
}

RecordWriter::~RecordWriter() = default;

void RecordWriter::write(const std::vector<uint8_t>& payload) {
  encode_record(payload, impl_->out);
  ++count_;
}

void RecordWriter::close() {
  if (impl_->out.is_open()) {
    impl_->out.close();
    if (!impl_->out) throw IoError("record", "close failed");
  }
}

struct RecordReader::Impl {
  std::ifstream in;
  uint64_t offset = 0;
};

RecordReader::RecordReader(std::string path)
    : path_(std::move(path)), impl_(std::make_unique<Impl>()) {
  impl_->in.open(path_, std::ios::binary);
  if (!impl_->in) throw IoError("record", "cannot open " + path_);
}

RecordReader::~RecordReader() = default;

uint64_t RecordReader::offset() const { return impl_->offset; }

std::optional<std::vector<uint8_t>> RecordReader::next_payload() {
  try {
    auto payload = decode_record(impl_->in);
    if (payload) impl_->offset += payload->size() + kRecordFrameOverhead;
    return payload;
  } catch (const Error& err) {
    throw FormatError("record", path_ + " @" + std::to_string(impl_->offset) +
                                    ": " + err.what());
  }
}

std::optional<Example> RecordReader::next_example(bool decode_llf) {
  auto payload = next_payload();
  if (!payload) return std::nullopt;
  return decode_example(*payload, decode_llf);
}

uint64_t count_records(const std::string& path) {
  RecordReader reader(path);
  uint64_t n = 0;
  while (reader.next_payload()) ++n;
  return n;
}

}  // namespace hepml
