#include "sem/attention.hpp"

#include <algorithm>
#include <cmath>

namespace sem {
namespace {

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.dims[0], t.dims[1]);
  for (int r = 0; r < t.dims[0]; ++r)
    for (int c = 0; c < t.dims[1]; ++c)
      m.at(r, c) = t.values[static_cast<size_t>(r) * t.dims[1] + c];
  return m;
}

// Y = X * W^T, the row-vector form of y = W x.
Matrix project(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.cols())
    throw ShapeMismatch("projection: input width " + std::to_string(x.cols()) +
                        " vs weight fan-in " + std::to_string(w.cols()));
  Matrix y(x.rows(), w.rows());
  for (int i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i);
    double* yi = y.row(i);
    for (int o = 0; o < w.rows(); ++o) {
      const double* wo = w.row(o);
      double acc = 0.0;
      for (int c = 0; c < x.cols(); ++c) acc += wo[c] * xi[c];
      yi[o] = acc;
    }
  }
  return y;
}

Matrix slice_cols(const Matrix& m, int begin, int count) {
  Matrix out(m.rows(), count);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = m.at(i, begin + j);
  return out;
}

void paste_cols(Matrix& dst, const Matrix& src, int begin) {
  for (int i = 0; i < src.rows(); ++i)
    for (int j = 0; j < src.cols(); ++j) dst.at(i, begin + j) = src.at(i, j);
}

double phi(double u) { return u > 0.0 ? u + 1.0 : std::exp(u); }

}  // namespace

AttentionParams AttentionParams::from_store(const ParamStore& store,
                                            const std::string& prefix) {
  const int c = store.shape().channels;
  AttentionParams p;
  p.wq = to_matrix(store.get(prefix + ".wq", {c, c}));
  p.wk = to_matrix(store.get(prefix + ".wk", {c, c}));
  p.wv = to_matrix(store.get(prefix + ".wv", {c, c}));
  p.wo = to_matrix(store.get(prefix + ".wo", {c, c}));
  p.mlp_w1 = to_matrix(store.get(prefix + ".mlp1.w", {c, c}));
  p.mlp_b1 = store.get(prefix + ".mlp1.b", {c}).values;
  p.mlp_w2 = to_matrix(store.get(prefix + ".mlp2.w", {c, c}));
  p.mlp_b2 = store.get(prefix + ".mlp2.b", {c}).values;
  p.head_count = store.shape().head_count;
  return p;
}

Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionMask* mask) {
  if (q.cols() != k.cols())
    throw ShapeMismatch("attention: query dim " + std::to_string(q.cols()) +
                        " vs key dim " + std::to_string(k.cols()));
  if (mask && (mask->rows != q.rows() || mask->cols != k.rows()))
    throw ShapeMismatch("attention: mask shape does not match Q x K");

  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix w(q.rows(), k.rows());
  std::vector<double> logits(static_cast<size_t>(k.rows()));

  for (int i = 0; i < q.rows(); ++i) {
    const double* qi = q.row(i);
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < k.rows(); ++j) {
      if (mask && !mask->at(i, j)) continue;
      const double* kj = k.row(j);
      double dot = 0.0;
      for (int c = 0; c < q.cols(); ++c) dot += qi[c] * kj[c];
      logits[j] = dot * scale;
      best = std::max(best, logits[j]);
      any = true;
    }
    if (!any) throw EmptyRow("attention: mask row " + std::to_string(i) + " is empty");

    double denom = 0.0;
    for (int j = 0; j < k.rows(); ++j) {
      if (mask && !mask->at(i, j)) continue;
      logits[j] = std::exp(logits[j] - best);
      denom += logits[j];
    }
    for (int j = 0; j < k.rows(); ++j) {
      if (mask && !mask->at(i, j)) continue;
      w.at(i, j) = logits[j] / denom;
    }
  }
  return w;
}

Matrix vanilla_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                         const AttentionMask* mask) {
  if (k.rows() != v.rows())
    throw ShapeMismatch("attention: key count " + std::to_string(k.rows()) +
                        " vs value count " + std::to_string(v.rows()));
  return attention_weights(q, k, mask).multiply(v);
}

Matrix linear_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols())
    throw ShapeMismatch("linear_attention: query dim vs key dim");
  if (k.rows() != v.rows())
    throw ShapeMismatch("linear_attention: key count vs value count");

  const int d = k.cols();
  const int dv = v.cols();

  // One pass over the keys accumulates phi(K)^T V and phi(K)^T 1.
  Matrix kv(d, dv);
  std::vector<double> z(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < k.rows(); ++j) {
    const double* kj = k.row(j);
    const double* vj = v.row(j);
    for (int a = 0; a < d; ++a) {
      const double f = phi(kj[a]);
      z[a] += f;
      double* kva = kv.row(a);
      for (int b = 0; b < dv; ++b) kva[b] += f * vj[b];
    }
  }

  Matrix out(q.rows(), dv);
  for (int i = 0; i < q.rows(); ++i) {
    const double* qi = q.row(i);
    double* oi = out.row(i);
    double denom = 0.0;
    for (int a = 0; a < d; ++a) {
      const double f = phi(qi[a]);
      denom += f * z[a];
      const double* kva = kv.row(a);
      for (int b = 0; b < dv; ++b) oi[b] += f * kva[b];
    }
    for (int b = 0; b < dv; ++b) oi[b] /= denom;
  }
  return out;
}

Matrix attention_update(const Matrix& x_q, const Matrix& x_kv,
                        const AttentionParams& p, AttentionKind kind,
                        const AttentionMask* mask) {
  const int c = x_q.cols();
  if (x_kv.cols() != c)
    throw ShapeMismatch("attention_update: channel counts differ");
  if (p.head_count < 1 || c % p.head_count != 0)
    throw ShapeMismatch("attention_update: channels not divisible by head count");

  const Matrix q = project(x_q, p.wq);
  const Matrix k = project(x_kv, p.wk);
  const Matrix v = project(x_kv, p.wv);

  Matrix merged(x_q.rows(), c);
  const int dh = c / p.head_count;
  for (int h = 0; h < p.head_count; ++h) {
    const Matrix qh = slice_cols(q, h * dh, dh);
    const Matrix kh = slice_cols(k, h * dh, dh);
    const Matrix vh = slice_cols(v, h * dh, dh);
    const Matrix mh = kind == AttentionKind::kVanilla
                          ? vanilla_attention(qh, kh, vh, mask)
                          : linear_attention(qh, kh, vh);
    paste_cols(merged, mh, h * dh);
  }

  const Matrix o = project(merged, p.wo);
  Matrix hidden = project(o, p.mlp_w1);
  for (int i = 0; i < hidden.rows(); ++i) {
    double* hi = hidden.row(i);
    for (int j = 0; j < hidden.cols(); ++j)
      hi[j] = std::max(0.0, hi[j] + p.mlp_b1[j]);
  }
  Matrix delta = project(hidden, p.mlp_w2);

  Matrix out = x_q;
  for (int i = 0; i < out.rows(); ++i) {
    double* oi = out.row(i);
    const double* di = delta.row(i);
    for (int j = 0; j < c; ++j) oi[j] += di[j] + p.mlp_b2[j];
  }
  return out;
}

FeatureMap epipolar_cross_attention(const FeatureMap& f_q, const FeatureMap& f_kv,
                                    const std::vector<EpipolarBand>& bands,
                                    const AttentionParams& p) {
  const int n_q = f_q.pixel_count();
  const int n_k = f_kv.pixel_count();
  if (static_cast<int>(bands.size()) != n_q)
    throw ShapeMismatch("epipolar_cross_attention: band list size " +
                        std::to_string(bands.size()) + " vs query pixels " +
                        std::to_string(n_q));

  AttentionMask mask(n_q, n_k, false);
  for (int i = 0; i < n_q; ++i) {
    const EpipolarBand& band = bands[i];
    bool any = false;
    if (band.valid) {
      for (int y = 0; y < f_kv.height; ++y)
        for (int x = 0; x < f_kv.width; ++x)
          if (band.contains(Vec2(x, y))) {
            mask.set(i, f_kv.grid().index(x, y), true);
            any = true;
          }
    }
    if (!any)
      for (int j = 0; j < n_k; ++j) mask.set(i, j, true);  // full-attention fallback
  }

  const Matrix out =
      attention_update(flatten(f_q), flatten(f_kv), p, AttentionKind::kVanilla, &mask);
  return unflatten(out, f_q);
}

std::pair<FeatureMap, FeatureMap> self_cross_block(
    const FeatureMap& f_a, const FeatureMap& f_b, const SelfCrossParams& p,
    AttentionKind kind, const AttentionMask* mask_ab, const AttentionMask* mask_ba) {
  if (f_a.channels != f_b.channels)
    throw ShapeMismatch("self_cross_block: channel counts differ");

  const Matrix a_self = attention_update(flatten(f_a), flatten(f_a), p.self, kind);
  const Matrix b_self = attention_update(flatten(f_b), flatten(f_b), p.self, kind);
  const Matrix a_out = attention_update(a_self, b_self, p.cross, kind, mask_ab);
  const Matrix b_out = attention_update(b_self, a_self, p.cross, kind, mask_ba);
  return {unflatten(a_out, f_a), unflatten(b_out, f_b)};
}

Matrix flatten(const FeatureMap& f) {
  Matrix m(f.pixel_count(), f.channels);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const double* px = f.pixel(y, x);
      double* row = m.row(f.grid().index(x, y));
      std::copy(px, px + f.channels, row);
    }
  return m;
}

FeatureMap unflatten(const Matrix& m, const FeatureMap& like) {
  if (m.rows() != like.pixel_count() || m.cols() != like.channels)
    throw ShapeMismatch("unflatten: matrix shape does not match template map");
  FeatureMap f(like.height, like.width, like.channels, like.scale);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const double* row = m.row(f.grid().index(x, y));
      std::copy(row, row + f.channels, f.pixel(y, x));
    }
  return f;
}

}  // namespace sem
