#pragma once

// Minimal convolutional building blocks with explicit forward/backward passes.
// Layers are value types held in a std::variant so whole networks can be
// copied for parameter snapshots. Activations are never cached inside a
// layer: a forward pass records them in a Trace owned by the caller, which
// lets several forwards share one set of parameters before any backward.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "uda/tensor.hpp"

namespace uda::nn {

template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

// Maps a padded coordinate into [0, n): -1 for zero padding outside,
// mirrored (without repeating the edge) for reflection padding.
inline int pad_index(int i, int n, bool reflect) {
  if (i >= 0 && i < n) return i;
  if (!reflect) return -1;
  return i < 0 ? -i : 2 * n - 2 - i;
}

template <typename T>
void im2col(const BasicTensor<T>& in, int k, int stride, int pad, int out_h, int out_w, std::vector<T>& col,
            bool reflect = false) {
  const int c = in.channels(), h = in.height(), w = in.width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t n = static_cast<std::size_t>(c) * k * k * plane;
  // every entry is written when no tap falls outside the input
  if (reflect || pad == 0) col.resize(n);
  else col.assign(n, T(0));
  T* dst = col.data();
  for (int ci = 0; ci < c; ++ci) {
    const T* src = in.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, dst += plane) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = pad_index(oy * stride + ky - pad, h, reflect);
          if (iy < 0) continue;
          T* row = dst + static_cast<std::size_t>(oy) * out_w;
          const T* srow = src + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int x0 = std::max(0, pad - kx);
            const int x1 = std::max(x0, std::min(out_w, w + pad - kx));
            if (reflect) {
              for (int ox = 0; ox < x0; ++ox) row[ox] = srow[pad_index(ox + kx - pad, w, true)];
              for (int ox = x1; ox < out_w; ++ox) row[ox] = srow[pad_index(ox + kx - pad, w, true)];
            }
            std::copy(srow + x0 + kx - pad, srow + x1 + kx - pad, row + x0);
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = pad_index(ox * stride + kx - pad, w, reflect);
              if (ix >= 0) row[ox] = srow[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, int k, int stride, int pad, int out_h, int out_w, BasicTensor<T>& din,
            bool reflect = false) {
  const int c = din.channels(), h = din.height(), w = din.width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  const T* src = col.data();
  for (int ci = 0; ci < c; ++ci) {
    T* dst = din.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, src += plane) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = pad_index(oy * stride + ky - pad, h, reflect);
          if (iy < 0) continue;
          const T* row = src + static_cast<std::size_t>(oy) * out_w;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            // same ascending ox order as the general loop
            const int x0 = std::max(0, pad - kx);
            const int x1 = std::max(x0, std::min(out_w, w + pad - kx));
            if (reflect)
              for (int ox = 0; ox < x0; ++ox) drow[pad_index(ox + kx - pad, w, true)] += row[ox];
            for (int ox = x0; ox < x1; ++ox) drow[ox + kx - pad] += row[ox];
            if (reflect)
              for (int ox = x1; ox < out_w; ++ox) drow[pad_index(ox + kx - pad, w, true)] += row[ox];
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = pad_index(ox * stride + kx - pad, w, reflect);
            if (ix >= 0) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace detail

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int kernel = 3, int stride = 1, int pad = 1, bool reflect = false)
      : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad), reflect_(reflect),
        weight_(static_cast<std::size_t>(out_c) * in_c * kernel * kernel, T(0)),
        bias_(out_c, T(0)), dweight_(weight_.size(), T(0)), dbias_(out_c, T(0)) {}

  Shape output_shape(Shape in) const {
    if (in.c != in_c_) throw std::invalid_argument("conv: channel mismatch, expected " + std::to_string(in_c_) + " got " + std::to_string(in.c));
    return {out_c_, (in.h + 2 * pad_ - k_) / stride_ + 1, (in.w + 2 * pad_ - k_) / stride_ + 1};
  }

  template <typename Rng>
  void init_he(Rng& rng, double gain = 1.0) {
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / (in_c_ * k_ * k_)));
    for (auto& v : weight_) v = static_cast<T>(dist(rng));
    std::fill(bias_.begin(), bias_.end(), T(0));
  }

  void forward(const BasicTensor<T>& in, BasicTensor<T>& out) const {
    const Shape os = output_shape(in.shape());
    out.reshape_like(os);
    auto& col = detail::scratch<T>();
    detail::im2col(in, k_, stride_, pad_, os.h, os.w, col, reflect_);
    const int kdim = in_c_ * k_ * k_;
    const int plane = os.h * os.w;
    Eigen::Map<const RowMatrix<T>> wm(weight_.data(), out_c_, kdim);
    Eigen::Map<const RowMatrix<T>> cm(col.data(), kdim, plane);
    Eigen::Map<RowMatrix<T>> om(out.data(), out_c_, plane);
    om.noalias() = wm * cm;
    for (int o = 0; o < out_c_; ++o) om.row(o).array() += bias_[o];
  }

  // Accumulates parameter gradients when `accumulate` is set; writes the
  // input gradient into `din` when non-null.
  void backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>* din, bool accumulate) {
    const Shape os = dout.shape();
    const int kdim = in_c_ * k_ * k_;
    const int plane = os.h * os.w;
    Eigen::Map<const RowMatrix<T>> dm(dout.data(), out_c_, plane);
    auto& col = detail::scratch<T>();
    if (accumulate) {
      detail::im2col(in, k_, stride_, pad_, os.h, os.w, col, reflect_);
      Eigen::Map<const RowMatrix<T>> cm(col.data(), kdim, plane);
      Eigen::Map<RowMatrix<T>> dw(dweight_.data(), out_c_, kdim);
      dw.noalias() += dm * cm.transpose();
      // plain loop: Eigen's vectorized sum() depends on buffer alignment
      const T* g = dout.data();
      for (int o = 0; o < out_c_; ++o) {
        T acc = 0;
        for (int i = 0; i < plane; ++i) acc += g[static_cast<std::size_t>(o) * plane + i];
        dbias_[o] += acc;
      }
    }
    if (din) input_grad(in, dout, *din);
  }

  void input_grad(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    const Shape os = dout.shape();
    const int kdim = in_c_ * k_ * k_;
    const int plane = os.h * os.w;
    auto& col = detail::scratch<T>();
    col.resize(static_cast<std::size_t>(kdim) * plane);
    Eigen::Map<const RowMatrix<T>> dm(dout.data(), out_c_, plane);
    Eigen::Map<const RowMatrix<T>> wm(weight_.data(), out_c_, kdim);
    Eigen::Map<RowMatrix<T>> cm(col.data(), kdim, plane);
    cm.noalias() = wm.transpose() * dm;
    din.reshape_like(in.shape());
    detail::col2im(col, k_, stride_, pad_, os.h, os.w, din, reflect_);
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight_, dweight_});
    out.push_back({prefix + ".bias", bias_, dbias_});
  }

  std::vector<T>& weight() { return weight_; }
  std::vector<T>& bias() { return bias_; }
  const std::vector<T>& weight() const { return weight_; }
  const std::vector<T>& bias() const { return bias_; }
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int stride() const { return stride_; }

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 3, stride_ = 1, pad_ = 1;
  bool reflect_ = false;
  std::vector<T> weight_, bias_, dweight_, dbias_;
};

struct Relu {
  Shape output_shape(Shape in) const { return in; }
  template <typename T>
  void forward(const BasicTensor<T>& in, BasicTensor<T>& out) const {
    out.reshape_like(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  }
  template <typename T>
  void backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    din.reshape_like(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > T(0) ? dout[i] : T(0);
  }
};

// Clamp to [lo, hi]; the gradient passes only where the input was in range.
struct Clamp {
  double lo = 0.0, hi = 1.0;
  Shape output_shape(Shape in) const { return in; }
  template <typename T>
  void forward(const BasicTensor<T>& in, BasicTensor<T>& out) const {
    out.reshape_like(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::clamp(in[i], T(lo), T(hi));
  }
  template <typename T>
  void backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    din.reshape_like(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) din[i] = (in[i] >= T(lo) && in[i] <= T(hi)) ? dout[i] : T(0);
  }
};

struct MaxPool2 {
  Shape output_shape(Shape in) const { return {in.c, in.h / 2, in.w / 2}; }
  template <typename T>
  void forward(const BasicTensor<T>& in, BasicTensor<T>& out) const {
    const Shape os = output_shape(in.shape());
    out.reshape_like(os);
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x) {
          T m = in.at(c, 2 * y, 2 * x);
          m = std::max(m, in.at(c, 2 * y, 2 * x + 1));
          m = std::max(m, in.at(c, 2 * y + 1, 2 * x));
          m = std::max(m, in.at(c, 2 * y + 1, 2 * x + 1));
          out.at(c, y, x) = m;
        }
  }
  // Ties route the gradient to the first maximal element in raster order.
  template <typename T>
  void backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    din.reshape_like(in.shape());
    const Shape os = dout.shape();
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x) {
          int by = 2 * y, bx = 2 * x;
          T m = in.at(c, by, bx);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (in.at(c, 2 * y + dy, 2 * x + dx) > m) {
                m = in.at(c, 2 * y + dy, 2 * x + dx);
                by = 2 * y + dy;
                bx = 2 * x + dx;
              }
          din.at(c, by, bx) += dout.at(c, y, x);
        }
  }
};

struct Upsample2 {
  Shape output_shape(Shape in) const { return {in.c, in.h * 2, in.w * 2}; }
  template <typename T>
  void forward(const BasicTensor<T>& in, BasicTensor<T>& out) const {
    const Shape os = output_shape(in.shape());
    out.reshape_like(os);
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
  }
  template <typename T>
  void backward(const BasicTensor<T>& in, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    din.reshape_like(in.shape());
    const Shape os = dout.shape();
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x) din.at(c, y / 2, x / 2) += dout.at(c, y, x);
  }
};

template <typename T>
using Layer = std::variant<Conv2d<T>, Relu, Clamp, MaxPool2, Upsample2>;

// Activations recorded by Sequential::forward; acts[0] is the input.
template <typename T>
struct Trace {
  std::vector<BasicTensor<T>> acts;
  const BasicTensor<T>& output() const { return acts.back(); }
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}

  template <typename L>
  Sequential& add(L layer) {
    layers_.emplace_back(std::move(layer));
    return *this;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return layers_[i]; }

  Shape output_shape(Shape in) const {
    for (const auto& l : layers_) in = std::visit([&](const auto& x) { return x.output_shape(in); }, l);
    return in;
  }

  void forward(const BasicTensor<T>& in, Trace<T>& trace) const {
    trace.acts.resize(layers_.size() + 1);
    trace.acts[0] = in;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit([&](const auto& l) { l.forward(trace.acts[i], trace.acts[i + 1]); }, layers_[i]);
    }
  }

  BasicTensor<T> forward(const BasicTensor<T>& in) const {
    Trace<T> trace;
    forward(in, trace);
    return std::move(trace.acts.back());
  }

  // Back-propagates `dout` (gradient w.r.t. the trace output). Parameter
  // gradients accumulate only when `accumulate` is set, so frozen networks
  // can still pass gradients through to their inputs.
  void backward(const Trace<T>& trace, const BasicTensor<T>& dout, BasicTensor<T>* din, bool accumulate = true) {
    if (!accumulate) {
      if (din) backward_input(trace, dout, *din);
      return;
    }
    BasicTensor<T> grad = dout;
    BasicTensor<T> next;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const bool need_input_grad = i > 0 || din != nullptr;
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d<T>>) {
              l.backward(trace.acts[i], grad, need_input_grad ? &next : nullptr, true);
            } else {
              l.backward(trace.acts[i], grad, next);
            }
          },
          layers_[i]);
      if (!need_input_grad) return;
      std::swap(grad, next);
    }
    if (din) *din = std::move(grad);
  }

  // Input gradient only; parameters and their gradients are untouched.
  void backward_input(const Trace<T>& trace, const BasicTensor<T>& dout, BasicTensor<T>& din) const {
    BasicTensor<T> grad = dout;
    BasicTensor<T> next;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d<T>>) {
              l.input_grad(trace.acts[i], grad, next);
            } else {
              l.backward(trace.acts[i], grad, next);
            }
          },
          layers_[i]);
      std::swap(grad, next);
    }
    din = std::move(grad);
  }

  void collect(std::vector<ParamRef<T>>& out) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (auto* conv = std::get_if<Conv2d<T>>(&layers_[i])) conv->collect(out, name_ + "." + std::to_string(i));
    }
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    collect(out);
    return out;
  }

  template <typename Rng>
  void init_he(Rng& rng) {
    for (auto& l : layers_)
      if (auto* conv = std::get_if<Conv2d<T>>(&l)) conv->init_he(rng);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
      if (const auto* conv = std::get_if<Conv2d<T>>(&l)) n += conv->weight().size() + conv->bias().size();
    return n;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<Layer<T>> layers_;
};

template <typename T>
void zero_grads(std::vector<ParamRef<T>>& params) {
  for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
BasicTensor<T> convert(const BasicTensor<float>& t) {
  return t.template cast<T>();
}

// Copies parameter values between two networks with identical layout,
// possibly of different scalar types.
template <typename To, typename From>
void copy_params(std::vector<ParamRef<To>> dst, const std::vector<ParamRef<From>>& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("copy_params: layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].value.size() != src[i].value.size()) throw std::invalid_argument("copy_params: size mismatch at " + src[i].name);
    for (std::size_t j = 0; j < src[i].value.size(); ++j) dst[i].value[j] = static_cast<To>(src[i].value[j]);
  }
}

}  // namespace uda::nn
