#pragma once

#include "sem/linalg.hpp"

namespace sem {

struct GridShape {
  int width = 0;
  int height = 0;

  int cell_count() const { return width * height; }
  int index(int x, int y) const { return y * width + x; }
  Vec2 coord(int i) const { return Vec2(i % width, i / width); }
  bool operator==(const GridShape& o) const {
    return width == o.width && height == o.height;
  }
};

// Dual-softmax matching matrix over flattened coarse grids. Row i indexes a
// reference cell, column j a source cell; entries live in [0, 1].
struct MatchMatrix {
  Matrix scores;
  GridShape ref_dims;
  GridShape src_dims;
  double temperature = 1.0;

  int rows() const { return scores.rows(); }
  int cols() const { return scores.cols(); }
};

}  // namespace sem
