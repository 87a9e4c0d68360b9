#include "hepml/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hepml/common.hpp"

namespace hepml {

struct MetricsWriter::Impl {
  std::ofstream out;
};

MetricsWriter::MetricsWriter(std::string path)
    : impl_(std::make_unique<Impl>()) {
  if (path.empty()) return;
  impl_->out.open(path, std::ios::app);
  if (!impl_->out) throw IoError("metrics", "cannot open " + path);
}

MetricsWriter::~MetricsWriter() = default;

bool MetricsWriter::enabled() const { return impl_->out.is_open(); }

void MetricsWriter::write(const MetricsRecord& r) {
  if (!enabled()) return;
  nlohmann::json j;
  j["ts"] = std::chrono::duration<double>(
                std::chrono::system_clock::now().time_since_epoch())
                .count();
  j["stage"] = r.stage;
  auto put = [&](const char* key, double v, double unset) {
    if (v != unset && std::isfinite(v)) j[key] = v;
  };
  put("examples_per_sec", r.examples_per_sec, -1);
  put("bytes_per_sec", r.bytes_per_sec, -1);
  if (r.epoch >= 0) j["epoch"] = r.epoch;
  if (r.step >= 0) j["step"] = r.step;
  if (std::isfinite(r.loss)) j["loss"] = r.loss;
  if (std::isfinite(r.lr)) j["lr"] = r.lr;
  if (r.worker_rank >= 0) j["rank"] = r.worker_rank;
  impl_->out << j.dump() << "\n";
  impl_->out.flush();
}

std::string resolve_metrics_path(const std::string& flag_value,
                                 const std::string& fallback) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("HEPML_METRICS"); env && *env)
    return env;
  return fallback;
}

}  // namespace hepml
