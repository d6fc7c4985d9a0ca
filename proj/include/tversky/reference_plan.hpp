#pragma once

// Published layer table for the full-size network (128x224x256 input, three
// channels, 16 base features, four poolings), in execution order.

#include <string>
#include <vector>

#include "tversky/unet.hpp"

namespace tversky::unet {

struct ReferenceRow {
  std::string label;
  Dims input;
  Dims output;
};

inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows{
      {"C1", {128, 224, 256, 3}, {128, 224, 256, 16}},
      {"C2", {128, 224, 256, 16}, {128, 224, 256, 16}},
      {"C3-Pooling", {128, 224, 256, 16}, {64, 112, 128, 16}},
      {"C4", {64, 112, 128, 16}, {64, 112, 128, 32}},
      {"C5", {64, 112, 128, 32}, {64, 112, 128, 32}},
      {"C6-Pooling", {64, 112, 128, 32}, {32, 56, 64, 32}},
      {"C7", {32, 56, 64, 32}, {32, 56, 64, 64}},
      {"C8", {32, 56, 64, 64}, {32, 56, 64, 64}},
      {"C9-Pooling", {32, 56, 64, 64}, {16, 28, 32, 64}},
      {"C10", {16, 28, 32, 64}, {16, 28, 32, 128}},
      {"C11", {16, 28, 32, 128}, {16, 28, 32, 128}},
      {"C12-Pooling", {16, 28, 32, 128}, {8, 14, 16, 128}},
      {"C13", {8, 14, 16, 128}, {8, 14, 16, 256}},
      {"C14", {8, 14, 16, 256}, {8, 14, 16, 256}},
      {"E1", {8, 14, 16, 256}, {16, 28, 32, 384}},
      {"E2", {16, 28, 32, 384}, {16, 28, 32, 128}},
      {"E3", {16, 28, 32, 128}, {16, 28, 32, 128}},
      {"E4", {16, 28, 32, 128}, {32, 56, 64, 192}},
      {"E5", {32, 56, 64, 192}, {32, 56, 64, 64}},
      {"E6", {32, 56, 64, 64}, {32, 56, 64, 64}},
      {"E7", {32, 56, 64, 64}, {64, 112, 128, 96}},
      {"E8", {64, 112, 128, 96}, {64, 112, 128, 32}},
      {"E9", {64, 112, 128, 32}, {64, 112, 128, 32}},
      {"E10", {64, 112, 128, 32}, {128, 224, 256, 48}},
      {"E11", {128, 224, 256, 48}, {128, 224, 256, 48}},
      {"E12", {128, 224, 256, 48}, {128, 224, 256, 2}},
  };
  return rows;
}

/// Row-by-row differences between a plan and the reference table; empty
/// when they agree exactly.
inline std::vector<std::string> diff_against_reference(const ShapePlan& plan) {
  std::vector<std::string> out;
  const auto& ref = reference_rows();
  if (plan.layers.size() != ref.size()) {
    out.push_back("plan has " + std::to_string(plan.layers.size()) + " layers, reference has " +
                  std::to_string(ref.size()));
  }
  for (std::size_t i = 0; i < std::min(plan.layers.size(), ref.size()); ++i) {
    const auto& l = plan.layers[i];
    if (l.label() != ref[i].label || l.input != ref[i].input || l.output != ref[i].output) {
      out.push_back("row " + std::to_string(i + 1) + ": got " + l.label() + " " + dims_str(l.input) + " -> " +
                    dims_str(l.output) + ", expected " + ref[i].label + " " + dims_str(ref[i].input) + " -> " +
                    dims_str(ref[i].output));
    }
  }
  return out;
}

}  // namespace tversky::unet
