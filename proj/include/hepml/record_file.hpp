#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hepml/event.hpp"

namespace hepml {

// .rec frame layout, wire-compatible with TFRecord framing:
//   length       u64 little-endian
//   length_crc   u32, masked CRC-32C of the 8 length bytes
//   payload      length bytes
//   payload_crc  u32, masked CRC-32C of the payload
//
// Record files are self-delimiting: concatenating two valid files yields a
// valid file containing the union of their records.

constexpr size_t kRecordFrameOverhead = 8 + 4 + 4;

/// Appends one framed record to the sink.
void encode_record(const std::vector<uint8_t>& payload, std::ostream& sink);

/// Reads one framed record. Returns nullopt at clean EOF. Throws
/// CorruptRecordError on a CRC mismatch and TruncationError on EOF mid-frame.
std::optional<std::vector<uint8_t>> decode_record(std::istream& source);

/// Example payload: flat little-endian float32 array
/// [label(3) | hlf(14) | llf row-major(801*19)], 60944 bytes total.
constexpr size_t kExamplePayloadBytes =
    4 * (kNumClasses + kHlfSize + size_t(kLlfRows) * kLlfCols);

std::vector<uint8_t> encode_example(const Example& e);

/// `decode_llf = false` leaves Example::llf empty (label and hlf only);
/// the payload length is validated either way.
Example decode_example(const uint8_t* payload, size_t n,
                       bool decode_llf = true);
Example decode_example(const std::vector<uint8_t>& payload,
                       bool decode_llf = true);

/// Sequential record writer over one file.
class RecordWriter {
public:
  explicit RecordWriter(const std::string& path);
  ~RecordWriter();

  void write(const std::vector<uint8_t>& payload);
  void write(const Example& e) { write(encode_example(e)); }
  void close();
  uint64_t count() const { return count_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  uint64_t count_ = 0;
};

/// Sequential record reader over one file. Errors carry file and byte offset.
class RecordReader {
public:
  explicit RecordReader(std::string path);
  ~RecordReader();

  std::optional<std::vector<uint8_t>> next_payload();
  std::optional<Example> next_example(bool decode_llf = true);
  const std::string& path() const { return path_; }
  uint64_t offset() const;

private:
  struct Impl;
  std::string path_;
  std::unique_ptr<Impl> impl_;
};

/// Counts records in a file, verifying every CRC.
uint64_t count_records(const std::string& path);

}  // namespace hepml
