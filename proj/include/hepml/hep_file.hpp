#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "hepml/event.hpp"

namespace hepml {

// .hep file layout (all integers little-endian):
//   magic "HEP1", version u32 = 1
//   per event: label u8, particle_count u32,
//              then per particle: category u8,
//              px, py, pz, E, charge, d0, dz, iso as float32.

constexpr char kHepMagic[4] = {'H', 'E', 'P', '1'};
constexpr uint32_t kHepVersion = 1;

/// Streams events to a sink. Not shareable across threads.
class RawEventWriter {
public:
  explicit RawEventWriter(std::ostream& sink);

  void write(const RawEvent& event);
  uint64_t count() const { return count_; }

private:
  std::ostream* sink_;
  uint64_t count_ = 0;
  uint64_t offset_ = 0;
};

/// Streams events from a source; memory use is O(1) in file size.
class RawEventReader {
public:
  explicit RawEventReader(std::istream& source);

  /// Next event in file order, or nullopt at clean EOF.
  std::optional<RawEvent> next();
  uint64_t count() const { return count_; }

private:
  std::istream* source_;
  uint64_t count_ = 0;
};

uint64_t write_raw_events(const std::vector<RawEvent>& events,
                          const std::string& path);
std::vector<RawEvent> read_raw_events(const std::string& path);

}  // namespace hepml
