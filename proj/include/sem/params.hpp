#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sem/errors.hpp"

namespace sem {

struct Tensor {
  std::vector<int> dims;
  std::vector<double> values;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }
};

// Shape of the full parameter set. One store carries every learnable tensor
// of the pipeline: extractor convolutions, cross-scale 1x1 fusions, the
// attention blocks and the structured-feature MLP. Weights are shared across
// pipeline iterations.
struct ModelShape {
  int channels = 32;       // 1/8- and 1/32-scale feature width
  int fine_channels = 16;  // 1/2-scale feature width
  int anchor_count = 32;   // widest structured-feature block the MLP accepts
  int head_count = 1;
};

// Named tensor table, serialized as "SEMP" files.
class ParamStore {
 public:
  void put(const std::string& name, std::vector<int> dims, std::vector<double> values);

  bool has(const std::string& name) const { return table_.count(name) != 0; }

  // Shape-checked fetch; throws ParamShapeMismatch on absence or disagreement.
  const Tensor& get(const std::string& name, const std::vector<int>& dims) const;
  const Tensor& get(const std::string& name) const;

  const std::map<std::string, Tensor>& tensors() const { return table_; }
  ModelShape shape() const { return shape_; }
  void set_shape(const ModelShape& s) { shape_ = s; }

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

  // Deterministic random initialization: weights ~ N(0, 1/fan_in), biases 0.
  // Each tensor draws from its own name-keyed stream, so the result does not
  // depend on generation order.
  static ParamStore seeded(const ModelShape& shape, std::uint64_t seed);

 private:
  std::map<std::string, Tensor> table_;
  ModelShape shape_;
};

}  // namespace sem
