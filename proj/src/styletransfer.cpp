#include "uda/styletransfer.hpp"

#include <cstdio>
#include <random>

#include "uda/detector.hpp"
#include "uda/error.hpp"
#include "uda/image.hpp"
#include "uda/optim.hpp"

namespace uda {

namespace {

std::string params_checksum(std::vector<nn::ParamRef<float>> params) {
  std::uint32_t crc = 0;
  for (const auto& p : params) crc = crc32_bytes(p.value.data(), p.value.size_bytes(), crc);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

const Tensor& fit(const Tensor& img, int size, Tensor& storage) {
  if (img.height() == size && img.width() == size) return img;
  storage = resize_bilinear(img, size, size);
  return storage;
}

}  // namespace

StyleArch style_arch_for(int image_size) {
  StyleArch a;
  a.input_size = (image_size + 7) / 8 * 8;
  return a;
}

StyleTransferModel::StyleTransferModel(StyleArch arch, std::uint64_t encoder_seed, std::uint64_t decoder_seed)
    : arch_(std::move(arch)), encoder_(build_encoder<float>(arch_)), decoder_(build_decoder<float>(arch_)) {
  std::mt19937_64 erng(encoder_seed);
  for (auto& s : encoder_) s.init_he(erng);
  std::mt19937_64 drng(decoder_seed);
  decoder_.init_he(drng);
  // Start the decoder output near mid-grey, well inside the clamp.
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    if (auto* conv = std::get_if<nn::Conv2d<float>>(&decoder_.layer(i))) {
      for (auto& w : conv->weight()) w *= 0.05f;
      std::fill(conv->bias().begin(), conv->bias().end(), 0.5f);
      break;
    }
  }
}

EncoderActivations StyleTransferModel::encode(const Tensor& image, EncoderTrace* trace) const {
  require_shape(image.shape(), Shape{3, arch_.input_size, arch_.input_size}, "style encoder");
  EncoderActivations acts;
  nn::Trace<float> local;
  const Tensor* x = &image;
  for (int k = 0; k < kEncoderStages; ++k) {
    nn::Trace<float>& tr = trace ? trace->stages[k] : local;
    encoder_[k].forward(*x, tr);
    acts[k] = tr.output();
    x = &acts[k];
  }
  return acts;
}

Tensor StyleTransferModel::decode(const Tensor& feat, nn::Trace<float>* trace) const {
  const int s = arch_.input_size >> (kEncoderStages - 1);
  require_shape(feat.shape(), Shape{arch_.encoder_channels.back(), s, s}, "style decoder");
  if (trace) {
    decoder_.forward(feat, *trace);
    return trace->output();
  }
  return decoder_.forward(feat);
}

StylizeResult StyleTransferModel::stylize_with_stats(const Tensor& content, const ChannelStats<float>& style_final) const {
  Tensor tmp;
  const EncoderActivations ca = encode(fit(content, arch_.input_size, tmp));
  StylizeResult r;
  r.transformed = adain(ca.back(), style_final);
  r.image = decode(r.transformed);
  if (!(r.image.shape() == content.shape())) r.image = resize_bilinear(r.image, content.height(), content.width());
  return r;
}

StylizeResult StyleTransferModel::stylize(const Tensor& content, const Tensor& style) const {
  Tensor tmp;
  const EncoderActivations sa = encode(fit(style, arch_.input_size, tmp));
  return stylize_with_stats(content, channel_stats(sa.back()));
}

Tensor StyleTransferModel::encoder_input_grad(const EncoderTrace& trace, const Activations<float>& dacts) const {
  Tensor carry;
  for (int k = kEncoderStages; k-- > 0;) {
    const Shape shp = trace.stages[k].output().shape();
    Tensor g(shp);
    if (!dacts[k].empty()) {
      require_shape(dacts[k].shape(), shp, "encoder activation gradient");
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dacts[k][i];
    }
    if (!carry.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += carry[i];
    }
    Tensor next;
    encoder_[k].backward_input(trace.stages[k], g, next);
    carry = std::move(next);
  }
  return carry;
}

void StyleTransferModel::decoder_backward(const nn::Trace<float>& trace, const Tensor& dimage) {
  decoder_.backward(trace, dimage, nullptr, true);
}

std::string StyleTransferModel::encoder_checksum() const {
  return params_checksum(const_cast<StyleTransferModel*>(this)->encoder_params_for_io());
}

std::string StyleTransferModel::decoder_checksum() const {
  return params_checksum(const_cast<StyleTransferModel*>(this)->decoder_.params());
}

StLossResult st_loss(StyleTransferModel& model, const Tensor& content_image, const Tensor& style_image, bool accumulate,
                     double scale, Tensor* stylized_out) {
  Tensor ctmp, stmp;
  const int size = model.arch().input_size;
  const EncoderActivations ca = model.encode(fit(content_image, size, ctmp));
  const EncoderActivations sa = model.encode(fit(style_image, size, stmp));
  const Tensor transformed = adain(ca.back(), channel_stats(sa.back()));
  nn::Trace<float> dtrace;
  const Tensor stylized = model.decode(transformed, &dtrace);
  EncoderTrace etrace;
  const EncoderActivations ga = model.encode(stylized, accumulate ? &etrace : nullptr);

  StLossResult r;
  Activations<float> dacts;
  Tensor dcontent(ga.back().shape());
  r.content = content_loss<float>(transformed.span(), ga.back().span(), accumulate ? dcontent.span() : std::span<float>{});
  r.style = style_loss<float>(ga, sa, accumulate ? &dacts : nullptr);
  r.total = r.content + r.style;
  if (accumulate) {
    for (std::size_t i = 0; i < dcontent.size(); ++i) dacts.back()[i] += dcontent[i];
    for (auto& t : dacts)
      for (auto& v : t.vec()) v *= static_cast<float>(scale);
    const Tensor dimage = model.encoder_input_grad(etrace, dacts);
    model.decoder_backward(dtrace, dimage);
  }
  if (stylized_out) {
    if (stylized.shape() == content_image.shape()) *stylized_out = stylized;
    else *stylized_out = resize_bilinear(stylized, content_image.height(), content_image.width());
  }
  return r;
}

std::vector<double> pretrain_decoder(StyleTransferModel& model, std::span<const Tensor> content_corpus,
                                     std::span<const Tensor> style_corpus, const PretrainSchedule& schedule,
                                     const std::function<void(int, double)>& progress) {
  if (content_corpus.empty() || style_corpus.empty()) throw Error(ErrorKind::invalid_argument, "pretrain_decoder: empty corpus");
  if (schedule.iterations < 0 || schedule.batch_size < 1) throw Error(ErrorKind::invalid_argument, "pretrain_decoder: bad schedule");
  std::mt19937_64 rng(schedule.seed);
  std::uniform_int_distribution<std::size_t> pick_c(0, content_corpus.size() - 1), pick_s(0, style_corpus.size() - 1);
  nn::Adam opt(schedule.lr);
  auto params = model.decoder_params();
  std::vector<double> trajectory;
  trajectory.reserve(schedule.iterations);
  for (int it = 0; it < schedule.iterations; ++it) {
    nn::zero_grads(params);
    double total = 0;
    for (int b = 0; b < schedule.batch_size; ++b) {
      const Tensor& c = content_corpus[pick_c(rng)];
      const Tensor& s = style_corpus[pick_s(rng)];
      total += st_loss(model, c, s, true, 1.0 / schedule.batch_size).total;
    }
    opt.step(params);
    trajectory.push_back(total / schedule.batch_size);
    if (progress && schedule.log_every > 0 && (it + 1) % schedule.log_every == 0) progress(it + 1, trajectory.back());
  }
  return trajectory;
}

}  // namespace uda
