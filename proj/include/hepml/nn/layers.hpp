#pragma once

#include <cmath>
#include <vector>

#include "hepml/nn/core.hpp"

namespace hepml::nn {

/// Fully connected layer, y = x W^T + b. Backward accumulates into the
/// store's gradient blocks and returns dx.
template <typename T>
class Dense {
public:
  Dense(ParamStore<T>& store, const std::string& name, int in, int out)
      : store_(&store), in_(in), out_(out) {
    w_ = store.add(name + ".w", out, in);
    b_ = store.add(name + ".b", 1, out);
  }

  void init(Rng& rng) { glorot_uniform<T>(store_->param(w_), in_, out_, rng); }

  Mat<T> forward(const Mat<T>& x) {
    if (x.cols() != in_)
      throw ShapeError("nn", "dense input has " + std::to_string(x.cols()) +
                                 " columns, want " + std::to_string(in_));
    x_ = x;
    Mat<T> y = x * store_->param(w_).transpose();
    y.rowwise() += store_->param(b_).row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    store_->grad(w_) += dy.transpose() * x_;
    store_->grad(b_) += dy.colwise().sum();
    return dy * store_->param(w_);
  }

  int in() const { return in_; }
  int out() const { return out_; }

private:
  ParamStore<T>* store_;
  int in_, out_;
  size_t w_, b_;
  Mat<T> x_;
};

template <typename T>
class ActivationLayer {
public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  Mat<T> forward(const Mat<T>& x) {
    if (kind_ == Activation::ReLU)
      y_ = x.cwiseMax(T(0));
    else
      y_ = x.array().tanh().matrix();
    return y_;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (kind_ == Activation::ReLU)
      return (y_.array() > T(0)).template cast<T>().matrix().cwiseProduct(dy);
    return (T(1) - y_.array().square()).matrix().cwiseProduct(dy);
  }

private:
  Activation kind_;
  Mat<T> y_;
};

/// Inverted dropout: y = x .* mask / (1 - rate) while training, identity
/// at inference. The mask survives until the matching backward call.
template <typename T>
class Dropout {
public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0))
      throw ConfigError("nn", "dropout rate must lie in [0,1)");
  }

  Mat<T> forward(const Mat<T>& x, bool training, uint64_t seed) {
    if (!training || rate_ == 0.0) {
      mask_.resize(0, 0);
      return x;
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    T keep_scale = T(1) / T(1.0 - rate_);
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        mask_(i, j) = unit(rng) < rate_ ? T(0) : keep_scale;
    return x.cwiseProduct(mask_);
  }

  Mat<T> backward(const Mat<T>& dy) const {
    if (mask_.size() == 0) return dy;
    return dy.cwiseProduct(mask_);
  }

  double rate() const { return rate_; }

private:
  double rate_;
  Mat<T> mask_;
};

/// Row-wise softmax with max subtraction.
template <typename T>
Mat<T> softmax(const Mat<T>& logits) {
  Mat<T> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    T m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

/// Mean categorical cross entropy and the fused softmax gradient
/// dz = (p - onehot) / batch.
template <typename T>
std::pair<T, Mat<T>> xent_loss_grad(const Mat<T>& probs, const Mat<T>& onehot) {
  if (probs.rows() != onehot.rows() || probs.cols() != onehot.cols())
    throw ShapeError("nn", "loss shapes differ");
  T batch = T(probs.rows());
  T loss = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
      if (onehot(i, j) != T(0))
        loss -= onehot(i, j) * std::log(std::max(probs(i, j),
                                                 std::numeric_limits<T>::min()));
  Mat<T> dz = (probs - onehot) / batch;
  return {loss / batch, dz};
}

/// GRU over a packed sequence [B, T*I], returning the last hidden state.
/// Recurrence (reset applied before the candidate product):
///   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
///   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
///   hc_t = tanh(Wh x_t + Uh (r_t .* h_{t-1}) + bh)
///   h_t = (1 - z_t) .* h_{t-1} + z_t .* hc_t,  h_0 = 0
/// Gate weights are stored packed: wx = [Wz; Wr; Wh] (3H x I),
/// uzr = [Uz; Ur] (2H x H), uh (H x H), b = [bz br bh] (1 x 3H).
///
/// An optional mask [B, T] marks timesteps to skip (mask 1): the state is
/// carried through unchanged, so the final state is the state at each
/// row's last unmasked step. Input projections for all timesteps run as
/// one GEMM before the recurrence.
template <typename T>
class Gru {
public:
  Gru(ParamStore<T>& store, const std::string& name, int input, int hidden)
      : store_(&store), in_(input), hidden_(hidden) {
    wx_ = store.add(name + ".wx", 3 * hidden, input);
    uzr_ = store.add(name + ".uzr", 2 * hidden, hidden);
    uh_ = store.add(name + ".uh", hidden, hidden);
    b_ = store.add(name + ".b", 1, 3 * hidden);
  }

  void init(Rng& rng) {
    auto wx = store_->param(wx_);
    for (int g = 0; g < 3; ++g)
      glorot_uniform<T>(
          MatMap<T>(wx.data() + g * hidden_ * in_, hidden_, in_), in_, hidden_,
          rng);
    auto uzr = store_->param(uzr_);
    for (int g = 0; g < 2; ++g)
      orthogonal<T>(
          MatMap<T>(uzr.data() + g * hidden_ * hidden_, hidden_, hidden_), rng);
    orthogonal<T>(store_->param(uh_), rng);
  }

  Mat<T> forward(const Mat<T>& x_seq, int seq_len,
                 const Mat<T>* mask = nullptr) {
    if (x_seq.cols() != Eigen::Index(seq_len) * in_)
      throw ShapeError("nn", "gru input has " + std::to_string(x_seq.cols()) +
                                 " columns, want " +
                                 std::to_string(seq_len * in_));
    if (mask && (mask->rows() != x_seq.rows() || mask->cols() != seq_len))
      throw ShapeError("nn", "gru mask shape mismatch");
    seq_len_ = seq_len;
    mask_ = mask;
    const Eigen::Index batch = x_seq.rows();

    auto uzr = store_->param(uzr_);
    auto uh = store_->param(uh_);
    auto b = store_->param(b_);

    // Stage the input timestep-major and project every step at once:
    // x_tmajor rows are (t, b) pairs, so step t is a contiguous block.
    x_tmajor_.resize(Eigen::Index(seq_len) * batch, in_);
    for (Eigen::Index bi = 0; bi < batch; ++bi)
      for (int t = 0; t < seq_len; ++t)
        x_tmajor_.row(Eigen::Index(t) * batch + bi) =
            x_seq.row(bi).segment(Eigen::Index(t) * in_, in_);
    gates_x_ = x_tmajor_ * store_->param(wx_).transpose();  // [T*B, 3H]

    h_.assign(size_t(seq_len) + 1, Mat<T>());
    z_.assign(seq_len, Mat<T>());
    r_.assign(seq_len, Mat<T>());
    hc_.assign(seq_len, Mat<T>());
    h_[0] = Mat<T>::Zero(batch, hidden_);

    for (int t = 0; t < seq_len; ++t) {
      const Mat<T>& h_prev = h_[t];
      auto gates_x = gates_x_.middleRows(Eigen::Index(t) * batch, batch);
      Mat<T> gates_h = h_prev * uzr.transpose();  // [B, 2H]
      Mat<T> z = gates_x.leftCols(hidden_) + gates_h.leftCols(hidden_);
      z.rowwise() += b.row(0).segment(0, hidden_);
      z = ((-z.array()).exp() + T(1)).inverse().matrix();
      Mat<T> r = gates_x.middleCols(hidden_, hidden_) +
                 gates_h.middleCols(hidden_, hidden_);
      r.rowwise() += b.row(0).segment(hidden_, hidden_);
      r = ((-r.array()).exp() + T(1)).inverse().matrix();
      Mat<T> s = r.cwiseProduct(h_prev);
      Mat<T> hc = gates_x.rightCols(hidden_) + s * uh.transpose();
      hc.rowwise() += b.row(0).segment(2 * hidden_, hidden_);
      hc = hc.array().tanh().matrix();
      Mat<T> h_new = h_prev + z.cwiseProduct(hc - h_prev);
      if (mask) {
        auto m = mask->col(t);
        for (Eigen::Index bi = 0; bi < batch; ++bi)
          if (m(bi) != T(0)) h_new.row(bi) = h_prev.row(bi);
      }
      h_[t + 1] = std::move(h_new);
      z_[t] = std::move(z);
      r_[t] = std::move(r);
      hc_[t] = std::move(hc);
    }
    return h_[seq_len];
  }

  /// BPTT from the gradient of the last hidden state. dx is filled only
  /// when non-null (models never backprop into the data).
  void backward(const Mat<T>& dh_last, Mat<T>* dx = nullptr) {
    const Eigen::Index batch = dh_last.rows();
    auto wx = store_->param(wx_);
    auto uzr = store_->param(uzr_);
    auto uh = store_->param(uh_);
    auto d_uzr = store_->grad(uzr_);
    auto d_uh = store_->grad(uh_);
    auto d_b = store_->grad(b_);

    Mat<T> da_all(Eigen::Index(seq_len_) * batch, 3 * hidden_);
    Mat<T> dh = dh_last;
    for (int t = seq_len_ - 1; t >= 0; --t) {
      const Mat<T>& h_prev = h_[t];
      const Mat<T>& z = z_[t];
      const Mat<T>& r = r_[t];
      const Mat<T>& hc = hc_[t];
      auto da = da_all.middleRows(Eigen::Index(t) * batch, batch);

      Mat<T> dh_gate = dh;  // share of dh flowing through the gates
      Mat<T> dh_skip = Mat<T>::Zero(batch, hidden_);
      if (mask_) {
        auto m = mask_->col(t);
        for (Eigen::Index bi = 0; bi < batch; ++bi)
          if (m(bi) != T(0)) {
            dh_skip.row(bi) = dh.row(bi);
            dh_gate.row(bi).setZero();
          }
      }

      Mat<T> dhc = dh_gate.cwiseProduct(z);
      Mat<T> da_h = dhc.cwiseProduct((T(1) - hc.array().square()).matrix());
      Mat<T> dz = dh_gate.cwiseProduct(hc - h_prev);
      da.leftCols(hidden_) =
          dz.cwiseProduct(z).cwiseProduct((T(1) - z.array()).matrix());

      Mat<T> ds = da_h * uh;  // gradient wrt r .* h_prev
      da.middleCols(hidden_, hidden_) = ds.cwiseProduct(h_prev)
                                            .cwiseProduct(r)
                                            .cwiseProduct(
                                                (T(1) - r.array()).matrix());
      da.rightCols(hidden_) = da_h;

      d_uzr.topRows(hidden_) += da.leftCols(hidden_).transpose() * h_prev;
      d_uzr.bottomRows(hidden_) +=
          da.middleCols(hidden_, hidden_).transpose() * h_prev;
      d_uh += da_h.transpose() * r.cwiseProduct(h_prev);
      d_b += da.colwise().sum();

      // dh_{t-1}
      Mat<T> dh_prev = dh_gate.cwiseProduct((T(1) - z.array()).matrix()) +
                       ds.cwiseProduct(r) + da.leftCols(2 * hidden_) * uzr +
                       dh_skip;
      dh = std::move(dh_prev);
    }
    store_->grad(wx_) += da_all.transpose() * x_tmajor_;
    if (dx) {
      Mat<T> dx_tmajor = da_all * wx;  // [T*B, I]
      dx->resize(batch, Eigen::Index(seq_len_) * in_);
      for (Eigen::Index bi = 0; bi < batch; ++bi)
        for (int t = 0; t < seq_len_; ++t)
          dx->row(bi).segment(Eigen::Index(t) * in_, in_) =
              dx_tmajor.row(Eigen::Index(t) * batch + bi);
    }
  }

  int hidden() const { return hidden_; }
  int input() const { return in_; }

private:
  ParamStore<T>* store_;
  int in_, hidden_;
  int seq_len_ = 0;
  size_t wx_, uzr_, uh_, b_;
  const Mat<T>* mask_ = nullptr;
  Mat<T> x_tmajor_;   // [T*B, I]
  Mat<T> gates_x_;    // [T*B, 3H]
  std::vector<Mat<T>> h_, z_, r_, hc_;
};

}  // namespace hepml::nn
