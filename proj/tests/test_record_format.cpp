#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "hepml/common.hpp"
#include "hepml/crc32c.hpp"
#include "hepml/record_file.hpp"

using namespace hepml;

namespace {

// Independent CRC-32C oracle: bitwise reference implementation, a separate
// code path from the table-driven one under test.
uint32_t crc32c_bitwise(const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint32_t crc = 0xffffffffu;
  for (size_t i = 0; i < n; ++i) {
    crc ^= p[i];
    for (int k = 0; k < 8; ++k)
      crc = (crc >> 1) ^ (0x82f63b78u & (0u - (crc & 1u)));
  }
  return ~crc;
}

// Frames produced by a third-party writer of this framing (payloads
// "hello" and bytes 0..63).
const uint8_t kGoldenHello[] = {
    0x05, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xea, 0xb2, 0x04,
    0x3e, 0x68, 0x65, 0x6c, 0x6c, 0x6f, 0xbb, 0x1f, 0x1c, 0x19};

std::vector<uint8_t> golden64_frame() {
  std::vector<uint8_t> frame = {0x40, 0x00, 0x00, 0x00, 0x00, 0x00,
                                0x00, 0x00, 0x28, 0x17, 0xf4, 0x95};
  for (int i = 0; i < 64; ++i) frame.push_back(uint8_t(i));
  frame.insert(frame.end(), {0xb2, 0xe1, 0x5a, 0x10});
  return frame;
}

Example random_example(Rng& rng) {
  std::uniform_real_distribution<float> unit(-5.0f, 5.0f);
  Example e;
  e.label[uniform_index(rng, 3)] = 1.0f;
  for (auto& v : e.hlf) v = unit(rng);
  e.llf.resize(size_t(kLlfRows) * kLlfCols);
  for (auto& v : e.llf) v = unit(rng);
  return e;
}

}  // namespace

TEST_CASE("crc32c matches the standard check value") {
  CHECK(crc32c("123456789", 9) == 0xe3069283u);
}

TEST_CASE("crc32c agrees with a bitwise reference implementation") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<uint8_t> data(uniform_index(rng, 300));
    for (auto& b : data) b = uint8_t(rng());
    CHECK(crc32c(data.data(), data.size()) ==
          crc32c_bitwise(data.data(), data.size()));
  }
}

TEST_CASE("crc mask") {
  CHECK(mask_crc(0) == 0xa282ead8u);
  CHECK(unmask_crc(mask_crc(0xdeadbeefu)) == 0xdeadbeefu);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    uint32_t x = uint32_t(rng());
    CHECK(unmask_crc(mask_crc(x)) == x);
  }
  // Golden frame cross-check: payload CRC of "hello" as written by the
  // third-party writer.
  CHECK(mask_crc(crc32c("hello", 5)) == 0x191c1fbbu);
}

TEST_CASE("record frames round-trip") {
  Rng rng(17);
  std::stringstream stream;
  std::vector<std::vector<uint8_t>> payloads;
  for (int i = 0; i < 200; ++i) {
    std::vector<uint8_t> p(uniform_index(rng, 500));
    for (auto& b : p) b = uint8_t(rng());
    payloads.push_back(p);
    encode_record(p, stream);
  }
  for (const auto& expected : payloads) {
    auto got = decode_record(stream);
    REQUIRE(got.has_value());
    CHECK(*got == expected);
  }
  CHECK_FALSE(decode_record(stream).has_value());
}

TEST_CASE("empty payload frames are 16 bytes") {
  std::stringstream stream;
  encode_record({}, stream);
  CHECK(stream.str().size() == 16);
  auto got = decode_record(stream);
  REQUIRE(got.has_value());
  CHECK(got->empty());
}

TEST_CASE("every single-bit flip in a frame is detected") {
  std::vector<uint8_t> payload = {1, 2, 3, 4, 5, 6, 7, 8};
  std::stringstream stream;
  encode_record(payload, stream);
  std::string frame = stream.str();
  for (size_t bit = 0; bit < frame.size() * 8; ++bit) {
    std::string corrupt = frame;
    corrupt[bit / 8] = char(uint8_t(corrupt[bit / 8]) ^ (1u << (bit % 8)));
    std::stringstream in(corrupt);
    CHECK_THROWS_AS(decode_record(in), Error);
  }
}

TEST_CASE("frames are wire-compatible with a third-party writer") {
  // Decode their bytes.
  {
    std::stringstream in(std::string(
        reinterpret_cast<const char*>(kGoldenHello), sizeof kGoldenHello));
    auto payload = decode_record(in);
    REQUIRE(payload.has_value());
    CHECK(std::string(payload->begin(), payload->end()) == "hello");
  }
  // And produce identical bytes for the same payloads.
  {
    std::stringstream out;
    encode_record({'h', 'e', 'l', 'l', 'o'}, out);
    CHECK(out.str() == std::string(reinterpret_cast<const char*>(kGoldenHello),
                                   sizeof kGoldenHello));
  }
  {
    auto golden = golden64_frame();
    std::vector<uint8_t> payload(64);
    for (int i = 0; i < 64; ++i) payload[i] = uint8_t(i);
    std::stringstream out;
    encode_record(payload, out);
    CHECK(out.str() == std::string(golden.begin(), golden.end()));
  }
}

TEST_CASE("corruption errors distinguish length from payload") {
  std::vector<uint8_t> payload(32, 0xab);
  std::stringstream stream;
  encode_record(payload, stream);
  std::string frame = stream.str();

  std::string bad_len = frame;
  bad_len[2] ^= 0x01;  // inside the length word
  std::stringstream in1(bad_len);
  CHECK_THROWS_AS(decode_record(in1), CorruptRecordError);

  std::string bad_payload = frame;
  bad_payload[14] ^= 0x01;
  std::stringstream in2(bad_payload);
  try {
    decode_record(in2);
    FAIL("expected corrupt-payload error");
  } catch (const CorruptRecordError& err) {
    CHECK(err.kind() == CorruptRecordError::Kind::Payload);
  }

  std::stringstream in3(frame.substr(0, frame.size() - 2));
  CHECK_THROWS_AS(decode_record(in3), TruncationError);
}

TEST_CASE("record files are self-delimiting under concatenation") {
  Rng rng(23);
  auto make_file = [&](int n) {
    std::stringstream s;
    for (int i = 0; i < n; ++i) {
      std::vector<uint8_t> p(uniform_index(rng, 64) + 1);
      for (auto& b : p) b = uint8_t(rng());
      encode_record(p, s);
    }
    return s.str();
  };
  std::string a = make_file(7), b = make_file(5);
  std::stringstream both(a + b);
  int count = 0;
  while (decode_record(both)) ++count;
  CHECK(count == 12);
}

TEST_CASE("example payloads are 60944 bytes and round-trip bit-exactly") {
  Rng rng(31);
  for (int i = 0; i < 25; ++i) {
    Example e = random_example(rng);
    auto payload = encode_example(e);
    CHECK(payload.size() == kExamplePayloadBytes);
    CHECK(payload.size() == 60944);
    Example back = decode_example(payload);
    CHECK(std::memcmp(back.label.data(), e.label.data(), 12) == 0);
    CHECK(std::memcmp(back.hlf.data(), e.hlf.data(), 56) == 0);
    CHECK(std::memcmp(back.llf.data(), e.llf.data(), e.llf.size() * 4) == 0);
  }
}

TEST_CASE("example payload length is validated") {
  std::vector<uint8_t> short_payload(60940);
  CHECK_THROWS_AS(decode_example(short_payload), ShapeError);
  Example no_llf;
  CHECK_THROWS_AS(encode_example(no_llf), ShapeError);
}

TEST_CASE("hlf-only decode skips the llf block") {
  Rng rng(37);
  Example e = random_example(rng);
  auto payload = encode_example(e);
  Example lite = decode_example(payload, /*decode_llf=*/false);
  CHECK_FALSE(lite.has_llf());
  CHECK(lite.label == e.label);
  CHECK(lite.hlf == e.hlf);
}
