#pragma once

#include <cstdint>
#include <string>

#include "saldrn/tensor.hpp"

namespace saldrn {

/// Procedural overhead scene: fractal terrain, a smooth water body, roads,
/// building blocks with shadows and scattered tree crowns. 1 x 3 x h x w in
/// [0, 1], quantized to 8 bits.
Tensor<float> synthetic_scene(int h, int w, std::uint64_t seed);

/// Writes `<root>/train/scene_NNN.png` and `<root>/test/scene_NNN.png`.
void write_toy_corpus(const std::string& root, int n_train, int n_test, int size, std::uint64_t seed);

}  // namespace saldrn
