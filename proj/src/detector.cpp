#include "uda/detector.hpp"

#include <cstdio>

#include <zlib.h>

#include "uda/error.hpp"

namespace uda {

std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t seed) {
  uLong crc = seed;
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<float> DetectorOutputs::probabilities() const {
  std::vector<float> probs(class_logits.size());
  const std::size_t row = static_cast<std::size_t>(num_classes) + 1;
  for (std::size_t a = 0; a < num_anchors(); ++a) {
    softmax<float>(logits_row(a), std::span<float>(probs.data() + a * row, row));
  }
  return probs;
}

DetectorArch detector_arch_preset(const std::string& name, int num_classes) {
  DetectorArch arch;
  arch.name = name;
  arch.num_classes = num_classes;
  if (name == "toy128") {
    arch.input_size = 128;
    arch.anchor_preset = "toy128";
    arch.stages = {{16, 2}, {32, 2}, {32, 1}, {64, 2}, {64, 2, 3, 1, true}, {64, 2, 3, 1, true}, {64, 2, 3, 1, true}, {64, 2, 3, 1, true}};
    return arch;
  }
  if (name == "ssd300") {
    // Light stand-in with the SSD300 map geometry; a VGG16 backbone would be
    // loaded from a checkpoint when declared pretrained.
    arch.input_size = 300;
    arch.anchor_preset = "ssd300";
    arch.stages = {{32, 2},          {64, 2},          {128, 2, 3, 1, true}, {128, 2, 3, 1, true},
                   {128, 2, 3, 1, true}, {128, 2, 3, 1, true}, {128, 2, 3, 1, true}, {128, 1, 3, 0, true}};
    return arch;
  }
  throw Error(ErrorKind::config, "unknown detector architecture '" + name + "'");
}

DetectorModel::DetectorModel(DetectorArch arch, std::uint64_t seed) : arch_(std::move(arch)) { build(seed); }

void DetectorModel::build(std::uint64_t seed) {
  anchors_ = generate_anchors(anchor_preset(arch_.anchor_preset));
  const auto& acfg = anchors_.config;
  if (acfg.input_size != arch_.input_size) throw Error(ErrorKind::config, "detector: input size does not match anchor preset");

  std::mt19937_64 rng(seed);
  nn::Sequential<float> seg("seg0");
  int in_c = arch_.input_channels;
  std::size_t tap = 0;
  for (const auto& st : arch_.stages) {
    nn::Conv2d<float> conv(in_c, st.out_channels, st.kernel, st.stride, st.pad);
    conv.init_he(rng);
    seg.add(std::move(conv)).add(nn::Relu{});
    in_c = st.out_channels;
    if (st.tap) {
      if (tap >= acfg.num_maps()) throw Error(ErrorKind::config, "detector: more taps than anchor feature maps");
      segments_.push_back(std::move(seg));
      seg = nn::Sequential<float>("seg" + std::to_string(segments_.size()));
      ++tap;
    }
  }
  if (seg.size() != 0) throw Error(ErrorKind::config, "detector: stages after the last tapped map");
  if (tap != acfg.num_maps()) throw Error(ErrorKind::config, "detector: tapped maps do not match anchor preset");

  // Verify map geometry against the anchor layout.
  Shape s{arch_.input_channels, arch_.input_size, arch_.input_size};
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    s = segments_[k].output_shape(s);
    if (s.h != acfg.feature_map_sizes[k].h || s.w != acfg.feature_map_sizes[k].w) {
      throw Error(ErrorKind::config, "detector: feature map " + std::to_string(k) + " has shape " + s.str() +
                                         " but the anchor preset expects " + std::to_string(acfg.feature_map_sizes[k].h) +
                                         "x" + std::to_string(acfg.feature_map_sizes[k].w));
    }
    const int per = anchors_.per_cell[k];
    nn::Conv2d<float> cls(s.c, per * (arch_.num_classes + 1));
    nn::Conv2d<float> loc(s.c, per * 4);
    cls.init_he(rng, 0.1);
    loc.init_he(rng, 0.1);
    cls_heads_.push_back(std::move(cls));
    loc_heads_.push_back(std::move(loc));
  }
}

DetectorOutputs DetectorModel::forward(const Tensor& image, DetectorTrace* trace) const {
  require_shape(image.shape(), Shape{arch_.input_channels, arch_.input_size, arch_.input_size}, "detector forward");
  const std::size_t K = segments_.size();
  const int row = arch_.num_classes + 1;
  DetectorOutputs out;
  out.num_classes = arch_.num_classes;
  out.class_logits.resize(anchors_.size() * row);
  out.box_offsets.resize(anchors_.size() * 4);
  out.feature_maps.maps.resize(K);
  if (trace) trace->segments.resize(K);

  nn::Trace<float> local;
  const Tensor* x = &image;
  Tensor head;
  for (std::size_t k = 0; k < K; ++k) {
    nn::Trace<float>& tr = trace ? trace->segments[k] : local;
    segments_[k].forward(*x, tr);
    out.feature_maps.maps[k] = tr.output();
    x = &out.feature_maps.maps[k];

    const int per = anchors_.per_cell[k];
    const int h = x->height(), w = x->width();
    const std::size_t off = anchors_.map_offsets[k];
    cls_heads_[k].forward(*x, head);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int a = 0; a < per; ++a) {
          const std::size_t anchor = off + (static_cast<std::size_t>(y) * w + xx) * per + a;
          for (int c = 0; c < row; ++c) out.class_logits[anchor * row + c] = head.at(a * row + c, y, xx);
        }
    loc_heads_[k].forward(*x, head);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int a = 0; a < per; ++a) {
          const std::size_t anchor = off + (static_cast<std::size_t>(y) * w + xx) * per + a;
          for (int c = 0; c < 4; ++c) out.box_offsets[anchor * 4 + c] = head.at(a * 4 + c, y, xx);
        }
  }
  if (trace) trace->feature_maps = out.feature_maps;
  return out;
}

std::vector<DetectorOutputs> DetectorModel::forward_batch(std::span<const Tensor> images) const {
  std::vector<DetectorOutputs> outs;
  outs.reserve(images.size());
  for (const auto& im : images) outs.push_back(forward(im));
  return outs;
}

void DetectorModel::backward(const DetectorTrace& trace, std::span<const float> dlogits, std::span<const float> doffsets,
                             const std::vector<Tensor>& dfeatures) {
  const std::size_t K = segments_.size();
  const int row = arch_.num_classes + 1;
  if (dlogits.size() != anchors_.size() * row || doffsets.size() != anchors_.size() * 4) {
    throw Error(ErrorKind::invalid_argument, "detector backward: gradient size mismatch");
  }
  Tensor carry;  // gradient flowing into map k from segment k+1
  Tensor dhead, dtmp;
  for (std::size_t k = K; k-- > 0;) {
    const Tensor& fmap = trace.feature_maps.maps[k];
    const int per = anchors_.per_cell[k];
    const int h = fmap.height(), w = fmap.width();
    const std::size_t off = anchors_.map_offsets[k];

    Tensor dmap(fmap.shape());
    dhead.reshape_like({per * row, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int a = 0; a < per; ++a) {
          const std::size_t anchor = off + (static_cast<std::size_t>(y) * w + x) * per + a;
          for (int c = 0; c < row; ++c) dhead.at(a * row + c, y, x) = dlogits[anchor * row + c];
        }
    cls_heads_[k].backward(fmap, dhead, &dtmp, true);
    for (std::size_t i = 0; i < dmap.size(); ++i) dmap[i] += dtmp[i];

    dhead.reshape_like({per * 4, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int a = 0; a < per; ++a) {
          const std::size_t anchor = off + (static_cast<std::size_t>(y) * w + x) * per + a;
          for (int c = 0; c < 4; ++c) dhead.at(a * 4 + c, y, x) = doffsets[anchor * 4 + c];
        }
    loc_heads_[k].backward(fmap, dhead, &dtmp, true);
    for (std::size_t i = 0; i < dmap.size(); ++i) dmap[i] += dtmp[i];

    if (k < dfeatures.size() && !dfeatures[k].empty()) {
      require_shape(dfeatures[k].shape(), fmap.shape(), "detector backward feature gradient");
      for (std::size_t i = 0; i < dmap.size(); ++i) dmap[i] += dfeatures[k][i];
    }
    if (!carry.empty()) {
      for (std::size_t i = 0; i < dmap.size(); ++i) dmap[i] += carry[i];
    }
    Tensor next;
    segments_[k].backward(trace.segments[k], dmap, k > 0 ? &next : nullptr, true);
    carry = std::move(next);
  }
}

std::vector<nn::ParamRef<float>> DetectorModel::params() {
  std::vector<nn::ParamRef<float>> out;
  for (auto& s : segments_) s.collect(out);
  for (std::size_t k = 0; k < cls_heads_.size(); ++k) {
    cls_heads_[k].collect(out, "cls" + std::to_string(k));
    loc_heads_[k].collect(out, "loc" + std::to_string(k));
  }
  return out;
}

std::size_t DetectorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.parameter_count();
  for (std::size_t k = 0; k < cls_heads_.size(); ++k) {
    n += cls_heads_[k].weight().size() + cls_heads_[k].bias().size();
    n += loc_heads_[k].weight().size() + loc_heads_[k].bias().size();
  }
  return n;
}

void DetectorModel::zero_grad() {
  auto p = params();
  nn::zero_grads(p);
}

std::string DetectorModel::checksum() const {
  auto p = const_cast<DetectorModel*>(this)->params();
  std::uint32_t crc = 0;
  for (const auto& r : p) crc = crc32_bytes(r.value.data(), r.value.size_bytes(), crc);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

SsdTargets make_targets(const AnchorSet& anchors, std::span<const GroundTruth> gts, double pos_iou) {
  const MatchAssignment m = match_anchors(anchors, gts, pos_iou);
  SsdTargets t;
  t.labels.assign(anchors.size(), 0);
  t.is_positive = m.is_positive;
  t.offsets.assign(anchors.size() * 4, 0.0);
  t.num_positives = m.num_positives;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (!m.is_positive[a]) continue;
    const GroundTruth& g = gts[m.matched_gt_index[a]];
    t.labels[a] = g.class_id;
    const Offsets o = encode_offsets(g.box, anchors.anchors[a], anchors.config.variances);
    for (int i = 0; i < 4; ++i) t.offsets[a * 4 + i] = o[i];
  }
  return t;
}

SsdLossResult<float> ssd_loss(const DetectorOutputs& outputs, std::span<const GroundTruth> gts, const AnchorSet& anchors,
                              std::span<const char> eligibility, double alpha, int neg_ratio, std::span<float> dlogits,
                              std::span<float> doffsets) {
  const SsdTargets t = make_targets(anchors, gts);
  return ssd_loss<float>(outputs.class_logits, outputs.box_offsets, outputs.num_classes, t, eligibility, alpha, neg_ratio,
                         dlogits, doffsets);
}

std::vector<Detection> decode_detections(const DetectorOutputs& outputs, const AnchorSet& anchors, double score_floor) {
  const std::vector<float> probs = outputs.probabilities();
  const std::size_t row = static_cast<std::size_t>(outputs.num_classes) + 1;
  std::vector<Detection> dets;
  for (std::size_t a = 0; a < outputs.num_anchors(); ++a) {
    bool decoded = false;
    Box box;
    for (std::size_t c = 1; c < row; ++c) {
      const double s = probs[a * row + c];
      if (s < score_floor) continue;
      if (!decoded) {
        const Offsets o{outputs.box_offsets[a * 4], outputs.box_offsets[a * 4 + 1], outputs.box_offsets[a * 4 + 2],
                        outputs.box_offsets[a * 4 + 3]};
        box = decode_offsets(o, anchors.anchors[a], anchors.config.variances);
        decoded = true;
      }
      dets.push_back({box, static_cast<int>(c), s});
    }
  }
  return dets;
}

std::vector<Detection> detect(const DetectorOutputs& outputs, const AnchorSet& anchors, double score_floor, double nms_iou) {
  return nms(decode_detections(outputs, anchors, score_floor), nms_iou);
}

}  // namespace uda
