#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>

namespace hepml {

/// One newline-delimited metrics record. Unset numeric fields are omitted
/// from the output; set fields must be finite.
struct MetricsRecord {
  std::string stage;
  double examples_per_sec = -1;
  double bytes_per_sec = -1;
  int64_t epoch = -1;
  int64_t step = -1;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double lr = std::numeric_limits<double>::quiet_NaN();
  int worker_rank = -1;
};

/// Appends JSON-lines records with a timestamp, one writer per process.
/// An empty path disables emission.
class MetricsWriter {
public:
  explicit MetricsWriter(std::string path);
  ~MetricsWriter();

  void write(const MetricsRecord& record);
  bool enabled() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Precedence: explicit flag value, then $HEPML_METRICS, then fallback.
std::string resolve_metrics_path(const std::string& flag_value,
                                 const std::string& fallback);

}  // namespace hepml
