#include <cstring>
#include <fstream>

#include "hepml/features.hpp"
#include "hepml/nn/checkpoint.hpp"

namespace hepml::nn {

std::string activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("nn", "unknown activation '" + name + "'");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Hlf: return "hlf";
    case ModelKind::Sequence: return "seq";
    case ModelKind::Inclusive: return "inclusive";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "hlf") return ModelKind::Hlf;
  if (name == "seq" || name == "sequence") return ModelKind::Sequence;
  if (name == "inclusive") return ModelKind::Inclusive;
  throw ConfigError("nn", "unknown model kind '" + name + "'");
}

ModelSpec default_spec(ModelKind kind) {
  ModelSpec spec;
  spec.kind = kind;
  switch (kind) {
    case ModelKind::Hlf: spec.hidden = {50, 20, 10}; break;
    case ModelKind::Sequence: spec.hidden = {}; break;
    case ModelKind::Inclusive: spec.hidden = {25}; break;
  }
  if (kind != ModelKind::Hlf) spec.mask_column = llf::kIsPadding;
  return spec;
}

Batch<float> make_batch(std::span<const Example> examples, ModelKind kind) {
  const Eigen::Index n = Eigen::Index(examples.size());
  Batch<float> batch;
  batch.labels.resize(n, kNumClasses);
  bool want_hlf = kind != ModelKind::Sequence;
  bool want_llf = kind != ModelKind::Hlf;
  if (want_hlf) batch.hlf.resize(n, kHlfSize);
  if (want_llf) batch.llf.resize(n, Eigen::Index(kLlfRows) * kLlfCols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Example& e = examples[i];
    for (int c = 0; c < kNumClasses; ++c) batch.labels(i, c) = e.label[c];
    if (want_hlf)
      for (int c = 0; c < kHlfSize; ++c) batch.hlf(i, c) = e.hlf[c];
    if (want_llf) {
      if (!e.has_llf())
        throw ShapeError("nn", "example decoded without llf fed to a "
                               "sequence model");
      std::memcpy(batch.llf.row(i).data(), e.llf.data(),
                  e.llf.size() * sizeof(float));
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw TruncationError("checkpoint", "unexpected EOF");
  return v;
}

void write_floats(std::ostream& out, const FlatVec<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(float)));
}

FlatVec<float> read_floats(std::istream& in, uint64_t n) {
  FlatVec<float> v;
  v.resize(Eigen::Index(n));
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * 4));
  if (!in) throw TruncationError("checkpoint", "unexpected EOF in floats");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const Adam<float>* adam) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint", "cannot open " + path);
  out.write(kCheckpointMagic, 4);
  write_pod<uint32_t>(out, 1);
  const ModelSpec& s = model.spec();
  write_pod<uint8_t>(out, uint8_t(s.kind));
  write_pod<uint8_t>(out, uint8_t(s.activation));
  write_pod<uint32_t>(out, uint32_t(s.gru_hidden));
  write_pod<float>(out, float(s.dropout_rate));
  write_pod<int32_t>(out, int32_t(s.mask_column));
  write_pod<uint32_t>(out, uint32_t(s.hlf_dim));
  write_pod<uint32_t>(out, uint32_t(s.llf_dim));
  write_pod<uint32_t>(out, uint32_t(s.seq_len));
  write_pod<uint32_t>(out, uint32_t(s.classes));
  write_pod<uint32_t>(out, uint32_t(s.hidden.size()));
  for (int w : s.hidden) write_pod<uint32_t>(out, uint32_t(w));
  write_pod<uint64_t>(out, uint64_t(model.params().size()));
  write_floats(out, model.params().params());
  write_pod<uint8_t>(out, adam ? 1 : 0);
  if (adam) {
    write_pod<uint64_t>(out, uint64_t(adam->timestep()));
    write_pod<double>(out, double(adam->config().beta1));
    write_pod<double>(out, double(adam->config().beta2));
    write_pod<double>(out, double(adam->config().eps));
    write_floats(out, adam->m());
    write_floats(out, adam->v());
  }
  out.flush();
  if (!out) throw IoError("checkpoint", "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint", "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint", "bad magic, not an MDL1 file");
  if (read_pod<uint32_t>(in) != 1)
    throw FormatError("checkpoint", "unsupported version");

  Checkpoint ckpt;
  ckpt.spec.kind = ModelKind(read_pod<uint8_t>(in));
  ckpt.spec.activation = Activation(read_pod<uint8_t>(in));
  ckpt.spec.gru_hidden = int(read_pod<uint32_t>(in));
  ckpt.spec.dropout_rate = read_pod<float>(in);
  ckpt.spec.mask_column = int(read_pod<int32_t>(in));
  ckpt.spec.hlf_dim = int(read_pod<uint32_t>(in));
  ckpt.spec.llf_dim = int(read_pod<uint32_t>(in));
  ckpt.spec.seq_len = int(read_pod<uint32_t>(in));
  ckpt.spec.classes = int(read_pod<uint32_t>(in));
  uint32_t nh = read_pod<uint32_t>(in);
  ckpt.spec.hidden.clear();
  for (uint32_t i = 0; i < nh; ++i)
    ckpt.spec.hidden.push_back(int(read_pod<uint32_t>(in)));
  uint64_t n = read_pod<uint64_t>(in);
  ckpt.params = read_floats(in, n);
  if (read_pod<uint8_t>(in)) {
    ckpt.adam_t = int64_t(read_pod<uint64_t>(in));
    ckpt.adam_config.beta1 = float(read_pod<double>(in));
    ckpt.adam_config.beta2 = float(read_pod<double>(in));
    ckpt.adam_config.eps = float(read_pod<double>(in));
    ckpt.adam_m = read_floats(in, n);
    ckpt.adam_v = read_floats(in, n);
  }
  return ckpt;
}

Model<float> restore_model(const Checkpoint& ckpt) {
  Model<float> model(ckpt.spec, /*seed=*/0);
  if (model.params().size() != ckpt.params.size())
    throw FormatError("checkpoint",
                      "parameter count does not match the spec");
  model.params().params() = ckpt.params;
  return model;
}

}  // namespace hepml::nn
