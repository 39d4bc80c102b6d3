#pragma once

// AdaIN style transfer: frozen four-stage encoder, statistic-matching
// transform, trainable mirrored decoder, and the content/style losses.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uda/nn.hpp"
#include "uda/tensor.hpp"

namespace uda {

inline constexpr double kStdEpsilon = 1e-5;
inline constexpr int kEncoderStages = 4;

template <typename T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> std;
};

// Population statistics over H x W per channel. The variance is floored at
// kStdEpsilon so constant channels get a finite std.
template <typename T>
ChannelStats<T> channel_stats(const BasicTensor<T>& x) {
  ChannelStats<T> s;
  const int c = x.channels();
  const std::size_t n = x.shape().plane();
  s.mean.resize(c);
  s.std.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    auto v = x.channel(ch);
    T m = 0;
    for (T e : v) m += e;
    m /= T(n);
    T var = 0;
    for (T e : v) var += (e - m) * (e - m);
    var /= T(n);
    s.mean[ch] = m;
    s.std[ch] = std::sqrt(std::max(var, T(kStdEpsilon)));
  }
  return s;
}

// Unguarded population std, used to check statistic matching.
template <typename T>
std::vector<T> population_std(const BasicTensor<T>& x) {
  std::vector<T> out(x.channels());
  const std::size_t n = x.shape().plane();
  for (int ch = 0; ch < x.channels(); ++ch) {
    auto v = x.channel(ch);
    T m = 0, var = 0;
    for (T e : v) m += e;
    m /= T(n);
    for (T e : v) var += (e - m) * (e - m);
    out[ch] = std::sqrt(var / T(n));
  }
  return out;
}

template <typename T>
BasicTensor<T> adain(const BasicTensor<T>& content, const ChannelStats<T>& style) {
  if (static_cast<std::size_t>(content.channels()) != style.mean.size() || style.mean.size() != style.std.size()) {
    throw std::invalid_argument("adain: channel count mismatch");
  }
  const ChannelStats<T> cs = channel_stats(content);
  BasicTensor<T> out(content.shape());
  for (int ch = 0; ch < content.channels(); ++ch) {
    auto in = content.channel(ch);
    auto o = out.channel(ch);
    const T scale = style.std[ch] / cs.std[ch];
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = (in[i] - cs.mean[ch]) * scale + style.mean[ch];
  }
  return out;
}

// Gradient of adain w.r.t. the content features (style statistics fixed).
template <typename T>
BasicTensor<T> adain_backward(const BasicTensor<T>& content, const ChannelStats<T>& style, const BasicTensor<T>& dout) {
  BasicTensor<T> din(content.shape());
  const std::size_t n = content.shape().plane();
  for (int ch = 0; ch < content.channels(); ++ch) {
    auto x = content.channel(ch);
    auto dy = dout.channel(ch);
    auto dx = din.channel(ch);
    T m = 0, var = 0;
    for (T e : x) m += e;
    m /= T(n);
    for (T e : x) var += (e - m) * (e - m);
    var /= T(n);
    const bool floored = var < T(kStdEpsilon);
    const T sd = std::sqrt(std::max(var, T(kStdEpsilon)));
    T mean_dy = 0, mean_dy_xhat = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_dy += dy[i];
      mean_dy_xhat += dy[i] * (x[i] - m) / sd;
    }
    mean_dy /= T(n);
    mean_dy_xhat /= T(n);
    const T k = style.std[ch] / sd;
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (x[i] - m) / sd;
      dx[i] = k * (dy[i] - mean_dy - (floored ? T(0) : xhat * mean_dy_xhat));
    }
  }
  return din;
}

// ||f_prime - restylized||^2. `grad_restylized` receives d/d restylized.
template <typename T>
T content_loss(std::span<const T> f_prime, std::span<const T> restylized, std::span<T> grad_restylized = {}) {
  if (f_prime.size() != restylized.size()) throw std::invalid_argument("content_loss: size mismatch");
  T loss = 0;
  for (std::size_t i = 0; i < f_prime.size(); ++i) {
    const T d = restylized[i] - f_prime[i];
    loss += d * d;
    if (!grad_restylized.empty()) grad_restylized[i] = T(2) * d;
  }
  return loss;
}

template <typename T>
using Activations = std::array<BasicTensor<T>, kEncoderStages>;

using EncoderActivations = Activations<float>;

// Sum over stages of ||mu_a - mu_b||^2 + ||sigma_a - sigma_b||^2. When
// `grad_a` is non-null it receives d loss / d a (b is treated as fixed).
template <typename T>
T style_loss(const Activations<T>& a, const Activations<T>& b, Activations<T>* grad_a = nullptr) {
  T loss = 0;
  for (int s = 0; s < kEncoderStages; ++s) {
    if (!(a[s].shape().c == b[s].shape().c)) throw std::invalid_argument("style_loss: channel mismatch at stage " + std::to_string(s));
    const ChannelStats<T> sa = channel_stats(a[s]);
    const ChannelStats<T> sb = channel_stats(b[s]);
    for (std::size_t c = 0; c < sa.mean.size(); ++c) {
      const T dm = sa.mean[c] - sb.mean[c];
      const T ds = sa.std[c] - sb.std[c];
      loss += dm * dm + ds * ds;
    }
    if (grad_a) {
      BasicTensor<T>& g = (*grad_a)[s];
      g.reshape_like(a[s].shape());
      const std::size_t n = a[s].shape().plane();
      for (int c = 0; c < a[s].channels(); ++c) {
        auto x = a[s].channel(c);
        auto gx = g.channel(c);
        const T dm = T(2) * (sa.mean[c] - sb.mean[c]) / T(n);
        T var = 0;
        for (T e : x) var += (e - sa.mean[c]) * (e - sa.mean[c]);
        var /= T(n);
        const bool floored = var < T(kStdEpsilon);
        const T ds = floored ? T(0) : T(2) * (sa.std[c] - sb.std[c]) / (T(n) * sa.std[c]);
        for (std::size_t i = 0; i < n; ++i) gx[i] = dm + ds * (x[i] - sa.mean[c]);
      }
    }
  }
  return loss;
}

struct StyleArch {
  int input_size = 128;
  std::array<int, kEncoderStages> encoder_channels{8, 16, 32, 64};
  std::vector<int> decoder_channels{64, 32, 16, 16};
  int decoder_depth = 1;  // conv relu layers per decoder scale
};

// Style network for detector inputs of `image_size`; the network runs at
// the next multiple of 8 and images are resized on the way in and out.
StyleArch style_arch_for(int image_size);

// Encoder stage k: [pool] conv relu, so stage k runs at input/2^k.
template <typename T>
std::vector<nn::Sequential<T>> build_encoder(const StyleArch& arch) {
  std::vector<nn::Sequential<T>> stages;
  int in_c = 3;
  for (int k = 0; k < kEncoderStages; ++k) {
    nn::Sequential<T> s("enc" + std::to_string(k));
    if (k > 0) s.add(nn::MaxPool2{});
    s.add(nn::Conv2d<T>(in_c, arch.encoder_channels[k], 3, 1, 1, true)).add(nn::Relu{});
    in_c = arch.encoder_channels[k];
    stages.push_back(std::move(s));
  }
  return stages;
}

// Mirror of the encoder: decoder_depth x (conv relu) per scale with an
// upsample between scales, then an RGB conv clamped to [0, 1]. All convs
// reflect-pad, which keeps zero-padding frames out of the output.
template <typename T>
nn::Sequential<T> build_decoder(const StyleArch& arch) {
  nn::Sequential<T> d("dec");
  const auto& ch = arch.decoder_channels;
  if (ch.size() != kEncoderStages) throw std::invalid_argument("decoder needs one channel count per encoder stage");
  int in_c = arch.encoder_channels.back();
  for (int k = 0; k < kEncoderStages; ++k) {
    if (k > 0) d.add(nn::Upsample2{});
    for (int r = 0; r < arch.decoder_depth; ++r) {
      d.add(nn::Conv2d<T>(in_c, ch[k], 3, 1, 1, true)).add(nn::Relu{});
      in_c = ch[k];
    }
  }
  d.add(nn::Conv2d<T>(in_c, 3, 3, 1, 1, true)).add(nn::Clamp{0.0, 1.0});
  return d;
}

struct StylizeResult {
  Tensor image;
  Tensor transformed;  // adain output f'_v fed to the decoder
};

struct EncoderTrace {
  std::array<nn::Trace<float>, kEncoderStages> stages;
};

class StyleTransferModel {
 public:
  StyleTransferModel() = default;
  StyleTransferModel(StyleArch arch, std::uint64_t encoder_seed, std::uint64_t decoder_seed);

  const StyleArch& arch() const { return arch_; }

  EncoderActivations encode(const Tensor& image, EncoderTrace* trace = nullptr) const;
  Tensor decode(const Tensor& feat, nn::Trace<float>* trace = nullptr) const;
  StylizeResult stylize(const Tensor& content, const Tensor& style) const;
  StylizeResult stylize_with_stats(const Tensor& content, const ChannelStats<float>& style_final) const;

  // Input gradient of the encoder given per-stage activation gradients
  // (empty tensors allowed). Encoder parameters never change.
  Tensor encoder_input_grad(const EncoderTrace& trace, const Activations<float>& dacts) const;
  void decoder_backward(const nn::Trace<float>& trace, const Tensor& dimage);

  std::vector<nn::ParamRef<float>> decoder_params() { return decoder_.params(); }
  const nn::Sequential<float>& decoder() const { return decoder_; }
  nn::Sequential<float>& decoder() { return decoder_; }
  const std::vector<nn::Sequential<float>>& encoder() const { return encoder_; }
  std::vector<nn::ParamRef<float>> encoder_params_for_io() {
    std::vector<nn::ParamRef<float>> out;
    for (auto& s : encoder_) s.collect(out);
    return out;
  }
  std::string encoder_checksum() const;
  std::string decoder_checksum() const;

 private:
  StyleArch arch_;
  std::vector<nn::Sequential<float>> encoder_;
  nn::Sequential<float> decoder_;
};

struct StLossResult {
  double total = 0;
  double content = 0;
  double style = 0;
};

// L_ST = content + style for one (content, style) pair. Images of another
// size are resized to the network input; `stylized_out` gets the content size. When `accumulate` is
// set, decoder parameter gradients of `scale * L_ST` are accumulated.
StLossResult st_loss(StyleTransferModel& model, const Tensor& content_image, const Tensor& style_image, bool accumulate = false,
                     double scale = 1.0, Tensor* stylized_out = nullptr);

struct PretrainSchedule {
  int iterations = 1500;
  int batch_size = 4;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int log_every = 0;
};

// Trains the decoder with Adam on random (content, style) pairs and returns
// the per-iteration mean batch loss. Throws on an empty corpus.
std::vector<double> pretrain_decoder(StyleTransferModel& model, std::span<const Tensor> content_corpus,
                                     std::span<const Tensor> style_corpus, const PretrainSchedule& schedule,
                                     const std::function<void(int, double)>& progress = {});

}  // namespace uda
