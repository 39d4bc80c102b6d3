#pragma once

#include <string>
#include <vector>

#include "uda/geometry.hpp"
#include "uda/tensor.hpp"

namespace uda {

// One image (CHW, RGB in [0, 1]) with its ground truth. Unlabelled target
// samples carry an empty gts list that training never reads.
struct Sample {
  std::string id;
  Tensor image;
  std::vector<GroundTruth> gts;
};

struct Dataset {
  std::string name;
  std::vector<std::string> class_names;  // class id k is class_names[k - 1]
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
};

}  // namespace uda
