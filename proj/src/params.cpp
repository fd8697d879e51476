#include "sem/params.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace sem {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::string out = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

// Every tensor in the store, with its shape and fan-in for initialization.
// Output layers of residual branches carry a reduced gain so that untrained
// updates perturb rather than overwrite the incoming features.
struct TensorSpec {
  std::string name;
  std::vector<int> dims;
  int fan_in;
  bool is_bias;
  double gain = 1.0;
};

constexpr double kResidualGain = 0.1;

std::vector<TensorSpec> tensor_specs(const ModelShape& s) {
  std::vector<TensorSpec> specs;
  const int c = s.channels;
  const int cf = s.fine_channels;
  const int half = c / 2;

  auto conv = [&](const std::string& name, int oc, int ic) {
    specs.push_back({name + ".w", {oc, ic, 3, 3}, ic * 9, false});
    specs.push_back({name + ".b", {oc}, 0, true});
  };
  auto linear = [&](const std::string& name, int out, int in, double gain = 1.0) {
    specs.push_back({name + ".w", {out, in}, in, false, gain});
    specs.push_back({name + ".b", {out}, 0, true});
  };
  auto projection = [&](const std::string& name, int out, int in) {
    specs.push_back({name, {out, in}, in, false});
  };

  conv("enc.stage1", half, 1);
  conv("enc.stage2", c, half);
  conv("enc.stage3", c, c);
  conv("enc.stage4", c, c);
  conv("enc.stage5", c, c);
  conv("enc.fine", cf, 1);

  linear("fuse.down", c, c, kResidualGain);
  linear("fuse.up", c, c, kResidualGain);

  for (const std::string prefix :
       {"att32.self", "att32.cross", "att8.self", "att8.cross", "epi.cross"}) {
    projection(prefix + ".wq", c, c);
    projection(prefix + ".wk", c, c);
    projection(prefix + ".wv", c, c);
    projection(prefix + ".wo", c, c);
    linear(prefix + ".mlp1", c, c);
    linear(prefix + ".mlp2", c, c, kResidualGain);
  }

  linear("sf.mlp1", c, c + 3 * s.anchor_count);
  linear("sf.mlp2", c, c, kResidualGain);
  return specs;
}

}  // namespace

void ParamStore::put(const std::string& name, std::vector<int> dims,
                     std::vector<double> values) {
  Tensor t;
  t.dims = std::move(dims);
  t.values = std::move(values);
  if (t.size() != static_cast<std::int64_t>(t.values.size()))
    throw ParamShapeMismatch("ParamStore::put: " + name + " has " +
                             std::to_string(t.values.size()) + " values for shape " +
                             dims_to_string(t.dims));
  table_[name] = std::move(t);
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = table_.find(name);
  if (it == table_.end())
    throw ParamShapeMismatch("ParamStore: missing tensor " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name,
                              const std::vector<int>& dims) const {
  const Tensor& t = get(name);
  if (t.dims != dims)
    throw ParamShapeMismatch("ParamStore: tensor " + name + " has shape " +
                             dims_to_string(t.dims) + ", expected " +
                             dims_to_string(dims));
  return t;
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("SEMP", 4);
  write_u32(os, 1);  // version
  write_u32(os, static_cast<std::uint32_t>(shape_.channels));
  write_u32(os, static_cast<std::uint32_t>(shape_.fine_channels));
  write_u32(os, static_cast<std::uint32_t>(shape_.anchor_count));
  write_u32(os, static_cast<std::uint32_t>(shape_.head_count));
  write_u32(os, static_cast<std::uint32_t>(table_.size()));
  for (const auto& [name, t] : table_) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.values) {
      const float f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEMP", 4) != 0)
    throw ParseError("bad parameter file (expected SEMP magic): " + path);
  const std::uint32_t version = read_u32(is);
  if (version != 1)
    throw ParseError("unsupported SEMP version " + std::to_string(version));

  ParamStore store;
  store.shape_.channels = static_cast<int>(read_u32(is));
  store.shape_.fine_channels = static_cast<int>(read_u32(is));
  store.shape_.anchor_count = static_cast<int>(read_u32(is));
  store.shape_.head_count = static_cast<int>(read_u32(is));

  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count && is; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndims = read_u32(is);
    std::vector<int> dims(ndims);
    std::int64_t n = 1;
    for (auto& d : dims) {
      d = static_cast<int>(read_u32(is));
      n *= d;
    }
    std::vector<double> values(static_cast<size_t>(n));
    for (auto& v : values) {
      float f = 0.0f;
      is.read(reinterpret_cast<char*>(&f), sizeof(f));
      v = static_cast<double>(f);
    }
    if (!is) throw ParseError("truncated SEMP file: " + path);
    store.put(name, std::move(dims), std::move(values));
  }
  return store;
}

ParamStore ParamStore::seeded(const ModelShape& shape, std::uint64_t seed) {
  ParamStore store;
  store.shape_ = shape;
  for (const TensorSpec& spec : tensor_specs(shape)) {
    std::vector<double> values(static_cast<size_t>([&] {
      std::int64_t n = 1;
      for (int d : spec.dims) n *= d;
      return n;
    }()));
    if (!spec.is_bias) {
      std::mt19937_64 rng(seed ^ fnv1a(spec.name));
      std::normal_distribution<double> gauss(
          0.0, spec.gain / std::sqrt(double(spec.fan_in)));
      for (auto& v : values) v = gauss(rng);
    }
    store.put(spec.name, spec.dims, std::move(values));
  }
  return store;
}

}  // namespace sem
