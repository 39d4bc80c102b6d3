#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uda/dataset.hpp"

namespace uda {

enum class ToyShape { circle = 1, square = 2, triangle = 3 };

// Geometry of one rendered object in pixel units (pixel centers at +0.5).
struct ToyObject {
  ToyShape shape = ToyShape::circle;
  double cx = 0, cy = 0;
  double radius = 0;    // circumradius
  double rotation = 0;  // radians
  int polygon_sides = 0;  // > 0 renders a circle as a regular polygon
};

// Regular polygon vertices of a toy object in pixel units.
std::vector<std::array<double, 2>> toy_polygon(const ToyObject& obj);
bool toy_contains(const ToyObject& obj, double px, double py);

struct ToySample {
  Sample sample;
  std::vector<ToyObject> objects;  // aligned with sample.gts
};

struct ToyDomains {
  Dataset source_train;
  Dataset target_train;  // ground truth kept for analysis only
  Dataset target_test;
  std::vector<std::vector<ToyObject>> source_objects, target_train_objects, target_test_objects;
};

enum class ToyStyle { source, target };

inline constexpr int kToyImageSize = 128;
const std::vector<std::string>& toy_class_names();

// Renders one image. Source: flat colours on a plain background. Target:
// the same geometry distribution with textured fills (noise, stripes or
// dots, chosen per image), hue-shifted palettes, dark outline strokes,
// pixel noise, and circles simplified to octagons.
ToySample render_toy_sample(std::mt19937_64& rng, ToyStyle style, const std::string& id, int image_size = kToyImageSize);

// Deterministic for a given seed.
ToyDomains generate_toy_domains(std::uint64_t seed, int n_train_s, int n_train_t, int n_test_t, int image_size = kToyImageSize);

}  // namespace uda
