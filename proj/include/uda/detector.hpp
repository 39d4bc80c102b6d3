#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uda/anchors.hpp"
#include "uda/detector_losses.hpp"
#include "uda/geometry.hpp"
#include "uda/nn.hpp"
#include "uda/tensor.hpp"

namespace uda {

// K detector feature maps, the inputs of the class/offset heads.
struct FeatureMapSet {
  std::vector<Tensor> maps;
  std::size_t size() const { return maps.size(); }
};

struct DetectorOutputs {
  std::vector<float> class_logits;  // A x (1 + num_classes), anchor order
  std::vector<float> box_offsets;   // A x 4
  FeatureMapSet feature_maps;
  int num_classes = 0;

  std::size_t num_anchors() const { return box_offsets.size() / 4; }
  std::span<const float> logits_row(std::size_t a) const {
    return {class_logits.data() + a * (num_classes + 1), static_cast<std::size_t>(num_classes) + 1};
  }
  // Softmax probabilities, same layout as class_logits.
  std::vector<float> probabilities() const;
};

struct ConvStage {
  int out_channels = 0;
  int stride = 1;
  int kernel = 3;
  int pad = 1;
  bool tap = false;  // output feeds a detection head
};

// Architecture descriptor: a plain chain of conv+ReLU stages, some tapped
// as feature maps. The tapped maps must line up with the anchor preset.
struct DetectorArch {
  std::string name;
  int input_size = 128;
  int input_channels = 3;
  int num_classes = 3;
  std::string anchor_preset = "toy128";
  std::vector<ConvStage> stages;
  bool pretrained_backbone = false;  // declared only; weights come from a checkpoint
};

DetectorArch detector_arch_preset(const std::string& name, int num_classes);

struct DetectorTrace {
  std::vector<nn::Trace<float>> segments;
  FeatureMapSet feature_maps;
};

class DetectorModel {
 public:
  DetectorModel() = default;
  DetectorModel(DetectorArch arch, std::uint64_t seed);

  const DetectorArch& arch() const { return arch_; }
  const AnchorSet& anchors() const { return anchors_; }
  int num_classes() const { return arch_.num_classes; }

  // Throws uda::Error(invalid_argument) on an input shape mismatch.
  DetectorOutputs forward(const Tensor& image, DetectorTrace* trace = nullptr) const;
  std::vector<DetectorOutputs> forward_batch(std::span<const Tensor> images) const;

  // Accumulates parameter gradients. `dfeatures` may be empty (no direct
  // feature-map gradient) or hold one tensor per map (empty tensors allowed).
  void backward(const DetectorTrace& trace, std::span<const float> dlogits, std::span<const float> doffsets,
                const std::vector<Tensor>& dfeatures);

  std::vector<nn::ParamRef<float>> params();
  std::size_t parameter_count() const;
  void zero_grad();
  // CRC32 over all parameter bytes, hex encoded.
  std::string checksum() const;

 private:
  void build(std::uint64_t seed);

  DetectorArch arch_;
  AnchorSet anchors_;
  std::vector<nn::Sequential<float>> segments_;
  std::vector<nn::Conv2d<float>> cls_heads_;
  std::vector<nn::Conv2d<float>> loc_heads_;
};

// Match ground truth to anchors and encode offsets for the positives.
SsdTargets make_targets(const AnchorSet& anchors, std::span<const GroundTruth> gts, double pos_iou = kDefaultPositiveIou);

// SSD loss of one image's outputs; eligibility may be empty (all eligible).
SsdLossResult<float> ssd_loss(const DetectorOutputs& outputs, std::span<const GroundTruth> gts, const AnchorSet& anchors,
                              std::span<const char> eligibility = {}, double alpha = 1.0, int neg_ratio = kDefaultNegRatio,
                              std::span<float> dlogits = {}, std::span<float> doffsets = {});

// Decoded per-class detections before NMS, keeping scores >= score_floor.
std::vector<Detection> decode_detections(const DetectorOutputs& outputs, const AnchorSet& anchors, double score_floor);

// decode_detections followed by per-class NMS.
std::vector<Detection> detect(const DetectorOutputs& outputs, const AnchorSet& anchors, double score_floor, double nms_iou);

std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t seed = 0);

}  // namespace uda
