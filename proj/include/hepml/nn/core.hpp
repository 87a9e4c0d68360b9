#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hepml/common.hpp"
#include "hepml/event.hpp"

namespace hepml::nn {

// Batches are row-major: one example per row.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using FlatVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

/// One training batch. `llf` packs the particle sequence as [B, T*I]
/// row-major; models that do not consume a field leave it empty.
template <typename T>
struct Batch {
  Mat<T> hlf;     // [B, 14]
  Mat<T> llf;     // [B, seq_len * seq_dim]
  Mat<T> labels;  // [B, classes], one-hot rows
  int rows() const {
    return int(labels.rows());
  }
};

/// Owns the canonical flat parameter and gradient vectors. Layers register
/// named blocks at construction; registration order defines the flat
/// layout used by all-reduce, Adam, digests and checkpoints.
template <typename T>
class ParamStore {
public:
  struct Entry {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows, cols;
  };

  /// Declares a block. Must precede finalize().
  size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (finalized_)
      throw ShapeError("nn", "parameter registered after finalize");
    entries_.push_back({std::move(name), total_, rows, cols});
    total_ += rows * cols;
    return entries_.size() - 1;
  }

  void finalize() {
    params_.setZero(total_);
    grads_.setZero(total_);
    finalized_ = true;
  }

  MatMap<T> param(size_t handle) { return map(params_, handle); }
  MatMap<T> grad(size_t handle) { return map(grads_, handle); }

  FlatVec<T>& params() { return params_; }
  FlatVec<T>& grads() { return grads_; }
  const FlatVec<T>& params() const { return params_; }
  const FlatVec<T>& grads() const { return grads_; }
  const std::vector<Entry>& entries() const { return entries_; }
  Eigen::Index size() const { return total_; }

  void zero_grads() { grads_.setZero(); }

private:
  MatMap<T> map(FlatVec<T>& v, size_t handle) {
    const Entry& e = entries_.at(handle);
    return MatMap<T>(v.data() + e.offset, e.rows, e.cols);
  }

  std::vector<Entry> entries_;
  Eigen::Index total_ = 0;
  bool finalized_ = false;
  FlatVec<T> params_;
  FlatVec<T> grads_;
};

enum class Activation : uint8_t { ReLU = 0, Tanh = 1 };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

// Weight initializers. The RNG consumption order is part of the model
// build determinism contract.
template <typename T>
void glorot_uniform(MatMap<T> w, Eigen::Index fan_in, Eigen::Index fan_out,
                    Rng& rng) {
  T limit = std::sqrt(T(6) / T(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-double(limit), double(limit));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = T(dist(rng));
}

/// Orthogonal square init via Householder QR of a Gaussian draw, with the
/// sign fixed from the R diagonal.
template <typename T>
void orthogonal(MatMap<T> w, Rng& rng) {
  if (w.rows() != w.cols())
    throw ShapeError("nn", "orthogonal init requires a square block");
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat<T> a(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = T(dist(rng));
  Eigen::HouseholderQR<Mat<T>> qr(a);
  Mat<T> q = qr.householderQ() * Mat<T>::Identity(a.rows(), a.cols());
  auto r_diag = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r_diag(j) < T(0)) q.col(j) = -q.col(j);
  w = q;
}

}  // namespace hepml::nn
