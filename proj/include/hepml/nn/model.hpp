#pragma once

#include <memory>
#include <optional>

#include "hepml/nn/layers.hpp"

namespace hepml::nn {

enum class ModelKind : uint8_t { Hlf = 0, Sequence = 1, Inclusive = 2 };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Architecture description.
///   Hlf       dense stack `hidden` over the 14 HLFs, then dense -> softmax
///   Sequence  GRU(llf_dim -> gru_hidden) over seq_len steps, last hidden
///             state into dense -> softmax
///   Inclusive GRU -> dropout -> concat with the 14 HLFs -> dense stack
///             `hidden` -> dense -> softmax
struct ModelSpec {
  ModelKind kind = ModelKind::Hlf;
  std::vector<int> hidden = {50, 20, 10};
  Activation activation = Activation::ReLU;
  int gru_hidden = 50;
  double dropout_rate = 0.5;
  // llf column marking padding timesteps the GRU carries state through
  // unchanged (-1 = consume every step)
  int mask_column = -1;
  int hlf_dim = kHlfSize;
  int llf_dim = kLlfCols;
  int seq_len = kLlfRows;
  int classes = kNumClasses;
};

ModelSpec default_spec(ModelKind kind);

/// A built model: parameters in canonical flat order plus the layer graph.
/// Single-writer during training; forward() in eval mode is const-safe on a
/// logically frozen model but is not synchronized.
template <typename T>
class Model {
public:
  Model(ModelSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    // Registration order defines the canonical flat layout: dataflow
    // order, gru -> dense stack -> output head.
    if (spec_.kind != ModelKind::Hlf) {
      gru_ = std::make_unique<Gru<T>>(store_, "gru", spec_.llf_dim,
                                      spec_.gru_hidden);
      dropout_ = std::make_unique<Dropout<T>>(
          spec_.kind == ModelKind::Inclusive ? spec_.dropout_rate : 0.0);
    }
    int in = spec_.kind == ModelKind::Hlf ? spec_.hlf_dim
             : spec_.kind == ModelKind::Sequence
                 ? spec_.gru_hidden
                 : spec_.gru_hidden + spec_.hlf_dim;
    if (spec_.kind != ModelKind::Sequence) {
      for (size_t i = 0; i < spec_.hidden.size(); ++i) {
        dense_.emplace_back(store_, "dense" + std::to_string(i), in,
                            spec_.hidden[i]);
        in = spec_.hidden[i];
      }
    }
    out_ = std::make_unique<Dense<T>>(store_, "out", in, spec_.classes);
    for (size_t i = 0; i < dense_.size(); ++i)
      act_.emplace_back(spec_.activation);
    store_.finalize();

    Rng rng(derive_seed(seed, 0x4d444c31));  // "MDL1" stream
    if (gru_) gru_->init(rng);
    for (auto& d : dense_) d.init(rng);
    out_->init(rng);
  }

  /// Class probabilities, eval mode (dropout off).
  Mat<T> forward(const Batch<T>& batch) {
    return softmax<T>(logits(batch, false, 0));
  }

  /// One forward/backward pass. Gradients are left in the store (averaged
  /// over the batch); returns the mean cross-entropy loss.
  T train_step(const Batch<T>& batch, uint64_t dropout_seed) {
    store_.zero_grads();
    Mat<T> z = logits(batch, true, dropout_seed);
    Mat<T> p = softmax<T>(z);
    auto [loss, dz] = xent_loss_grad<T>(p, batch.labels);
    backprop(dz);
    if (!store_.grads().allFinite())
      throw TrainingError("nn", "non-finite gradient; loss=" +
                                    std::to_string(double(loss)));
    return loss;
  }

  ModelSpec const& spec() const { return spec_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

private:
  Mat<T> logits(const Batch<T>& batch, bool training, uint64_t dropout_seed) {
    Mat<T> h;
    if (spec_.kind == ModelKind::Hlf) {
      h = batch.hlf;
    } else {
      // mask_store_ outlives the call: the gru references it in backward
      const Mat<T>* mask = nullptr;
      if (spec_.mask_column >= 0) {
        if (spec_.mask_column >= spec_.llf_dim)
          throw ShapeError("nn", "mask column " +
                                     std::to_string(spec_.mask_column) +
                                     " outside the " +
                                     std::to_string(spec_.llf_dim) +
                                     "-column input");
        mask_store_.resize(batch.llf.rows(), spec_.seq_len);
        for (Eigen::Index i = 0; i < batch.llf.rows(); ++i)
          for (int t = 0; t < spec_.seq_len; ++t)
            mask_store_(i, t) = batch.llf(
                i, Eigen::Index(t) * spec_.llf_dim + spec_.mask_column);
        mask = &mask_store_;
      }
      h = gru_->forward(batch.llf, spec_.seq_len, mask);
      h = dropout_->forward(h, training, dropout_seed);
      if (spec_.kind == ModelKind::Inclusive) {
        if (batch.hlf.cols() != spec_.hlf_dim)
          throw ShapeError("nn", "inclusive model needs hlf inputs");
        Mat<T> cat(h.rows(), h.cols() + batch.hlf.cols());
        cat << h, batch.hlf;
        h = std::move(cat);
      }
    }
    for (size_t i = 0; i < dense_.size(); ++i)
      h = act_[i].forward(dense_[i].forward(h));
    return out_->forward(h);
  }

  void backprop(const Mat<T>& dz) {
    Mat<T> d = out_->backward(dz);
    for (size_t i = dense_.size(); i-- > 0;)
      d = dense_[i].backward(act_[i].backward(d));
    if (spec_.kind == ModelKind::Sequence) {
      gru_->backward(dropout_->backward(d));
    } else if (spec_.kind == ModelKind::Inclusive) {
      // Split the concat gradient; the HLF side ends at the data.
      Mat<T> d_gru = d.leftCols(spec_.gru_hidden);
      gru_->backward(dropout_->backward(d_gru));
    }
  }

  ModelSpec spec_;
  ParamStore<T> store_;
  Mat<T> mask_store_;
  std::unique_ptr<Gru<T>> gru_;
  std::unique_ptr<Dropout<T>> dropout_;
  std::vector<Dense<T>> dense_;
  std::vector<ActivationLayer<T>> act_;
  std::unique_ptr<Dense<T>> out_;
};

/// Packs decoded examples into a batch, keeping only what the model reads.
Batch<float> make_batch(std::span<const Example> examples, ModelKind kind);

}  // namespace hepml::nn
