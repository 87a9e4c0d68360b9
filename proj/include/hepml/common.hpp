#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace hepml {

/// Base class for all errors raised by this library. Subcommands catch this
/// at the top level and turn it into a one-line machine-parsable message.
class Error : public std::runtime_error {
public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}
  const std::string& module() const { return module_; }

private:
  std::string module_;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Malformed file contents: bad magic, bad enum byte, bad payload size.
class FormatError : public Error {
public:
  using Error::Error;
};

// File ends in the middle of a structure.
class TruncationError : public Error {
public:
  using Error::Error;
};

// A CRC check failed. `kind` distinguishes the length word from the payload.
class CorruptRecordError : public FormatError {
public:
  enum class Kind { Length, Payload };
  CorruptRecordError(Kind kind, const std::string& what)
      : FormatError("record", what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ProtocolError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Little-endian scalar encoding. All file and wire formats in this project
// are little-endian.

inline void put_u32le(uint8_t* p, uint32_t v) {
  p[0] = uint8_t(v);
  p[1] = uint8_t(v >> 8);
  p[2] = uint8_t(v >> 16);
  p[3] = uint8_t(v >> 24);
}

inline void put_u64le(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = uint8_t(v >> (8 * i));
}

inline uint32_t get_u32le(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

inline uint64_t get_u64le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
  return v;
}

inline void put_f32le(uint8_t* p, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(p, bits);
}

inline float get_f32le(const uint8_t* p) {
  uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

// ---------------------------------------------------------------------------
// Seeding helpers. Derived seeds (per shard, per rank, per step) go through
// splitmix64 so that nearby inputs give unrelated streams.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x51ed2701));
}

using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be > 0.
inline size_t uniform_index(Rng& rng, size_t n) {
  // Rejection-free scaling; bias is negligible for n << 2^64 and this keeps
  // the draw independent of std::uniform_int_distribution internals.
  return size_t((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

}  // namespace hepml
