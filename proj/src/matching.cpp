#include "sem/matching.hpp"

#include <algorithm>
#include <cmath>

#include "sem/attention.hpp"

namespace sem {
namespace {

// Row-wise and column-wise softmax restricted to a support set (nullptr =
// full support). Entries off the support are zero.
Matrix dual_softmax_on_support(const Matrix& s, const std::vector<std::uint8_t>* support) {
  const int rows = s.rows();
  const int cols = s.cols();
  auto on = [&](int i, int j) {
    return !support || (*support)[static_cast<size_t>(i) * cols + j] != 0;
  };

  Matrix row_sm(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j)
      if (on(i, j)) best = std::max(best, s.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < cols; ++j)
      if (on(i, j)) {
        row_sm.at(i, j) = std::exp(s.at(i, j) - best);
        denom += row_sm.at(i, j);
      }
    for (int j = 0; j < cols; ++j)
      if (on(i, j)) row_sm.at(i, j) /= denom;
  }

  Matrix out(rows, cols);
  for (int j = 0; j < cols; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows; ++i)
      if (on(i, j)) best = std::max(best, s.at(i, j));
    double denom = 0.0;
    for (int i = 0; i < rows; ++i)
      if (on(i, j)) denom += std::exp(s.at(i, j) - best);
    for (int i = 0; i < rows; ++i)
      if (on(i, j)) out.at(i, j) = row_sm.at(i, j) * (std::exp(s.at(i, j) - best) / denom);
  }
  return out;
}

}  // namespace

MatchMatrix dual_softmax_from_scores(const Matrix& s, GridShape ref_dims,
                                     GridShape src_dims, double tau) {
  if (s.rows() != ref_dims.cell_count() || s.cols() != src_dims.cell_count())
    throw ShapeMismatch("dual_softmax: score matrix does not match grid shapes");
  MatchMatrix m;
  m.ref_dims = ref_dims;
  m.src_dims = src_dims;
  m.temperature = tau;
  m.scores = dual_softmax_on_support(s, nullptr);
  return m;
}

MatchMatrix dual_softmax(const FeatureMap& f_ref, const FeatureMap& f_src, double tau) {
  if (f_ref.channels != f_src.channels)
    throw ShapeMismatch("dual_softmax: channel counts differ");
  if (tau <= 0.0) throw Error("dual_softmax: temperature must be positive");

  const Matrix a = flatten(f_ref);
  const Matrix b = flatten(f_src);
  Matrix s(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    for (int j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j);
      double dot = 0.0;
      for (int c = 0; c < a.cols(); ++c) dot += ai[c] * bj[c];
      s.at(i, j) = tau * dot;
    }
  }
  return dual_softmax_from_scores(s, f_ref.grid(), f_src.grid(), tau);
}

MatchMatrix epipolar_rewrite(const MatchMatrix& m, const FeatureMap& f_ref,
                             const FeatureMap& f_src,
                             const std::vector<EpipolarBand>& bands_ref,
                             const std::vector<EpipolarBand>& bands_src, double tau) {
  const int rows = f_ref.pixel_count();
  const int cols = f_src.pixel_count();
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeMismatch("epipolar_rewrite: matrix does not match feature grids");
  if (static_cast<int>(bands_ref.size()) != rows ||
      static_cast<int>(bands_src.size()) != cols)
    throw ShapeMismatch("epipolar_rewrite: band lists do not match grids");
  if (tau <= 0.0) throw Error("epipolar_rewrite: temperature must be positive");

  const GridShape ref_dims = f_ref.grid();
  const GridShape src_dims = f_src.grid();

  // Union support: (i, j) is a candidate if either direction's band admits
  // it; an invalid band admits its entire row/column.
  std::vector<std::uint8_t> support(static_cast<size_t>(rows) * cols, 0);
  for (int i = 0; i < rows; ++i) {
    const bool row_full = !bands_ref[i].valid;
    for (int j = 0; j < cols; ++j) {
      const bool col_full = !bands_src[j].valid;
      const bool in_ref = bands_ref[i].contains(src_dims.coord(j));
      const bool in_src = bands_src[j].contains(ref_dims.coord(i));
      if (row_full || col_full || in_ref || in_src)
        support[static_cast<size_t>(i) * cols + j] = 1;
    }
  }
  // A band can miss every cell center; restore full support for such rows
  // and columns so the softmaxes stay defined.
  for (int i = 0; i < rows; ++i) {
    bool any = false;
    for (int j = 0; j < cols; ++j) any = any || support[static_cast<size_t>(i) * cols + j];
    if (!any)
      for (int j = 0; j < cols; ++j) support[static_cast<size_t>(i) * cols + j] = 1;
  }
  for (int j = 0; j < cols; ++j) {
    bool any = false;
    for (int i = 0; i < rows; ++i) any = any || support[static_cast<size_t>(i) * cols + j];
    if (!any)
      for (int i = 0; i < rows; ++i) support[static_cast<size_t>(i) * cols + j] = 1;
  }

  const Matrix a = flatten(f_ref);
  const Matrix b = flatten(f_src);
  Matrix s(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a.row(i);
    for (int j = 0; j < cols; ++j) {
      if (!support[static_cast<size_t>(i) * cols + j]) continue;
      const double* bj = b.row(j);
      double dot = 0.0;
      for (int c = 0; c < a.cols(); ++c) dot += ai[c] * bj[c];
      s.at(i, j) = tau * dot;
    }
  }

  MatchMatrix out;
  out.ref_dims = ref_dims;
  out.src_dims = src_dims;
  out.temperature = tau;
  out.scores = dual_softmax_on_support(s, &support);
  return out;
}

MatchSet extract_matches(const MatchMatrix& m, double theta) {
  if (theta <= 0.0 || theta >= 1.0)
    throw Error("extract_matches: threshold must lie in (0, 1)");

  MatchSet set;
  set.ref_dims = m.ref_dims;
  set.src_dims = m.src_dims;

  std::vector<int> col_argmax(static_cast<size_t>(m.cols()), 0);
  for (int j = 0; j < m.cols(); ++j) {
    double best = -1.0;
    for (int i = 0; i < m.rows(); ++i)
      if (m.scores.at(i, j) > best) {
        best = m.scores.at(i, j);
        col_argmax[j] = i;
      }
  }

  for (int i = 0; i < m.rows(); ++i) {
    const double* row = m.scores.row(i);
    int best_j = 0;
    double best = row[0];
    for (int j = 1; j < m.cols(); ++j)
      if (row[j] > best) {
        best = row[j];
        best_j = j;
      }
    if (best < theta || col_argmax[best_j] != i) continue;

    Match match;
    const Vec2 r = m.ref_dims.coord(i);
    const Vec2 s = m.src_dims.coord(best_j);
    match.ref_x = static_cast<int>(r.x);
    match.ref_y = static_cast<int>(r.y);
    match.src_x = static_cast<int>(s.x);
    match.src_y = static_cast<int>(s.y);
    match.confidence = best;
    match.src_refined = {s.x * set.coarse_scale + (set.coarse_scale - 1) / 2.0,
                         s.y * set.coarse_scale + (set.coarse_scale - 1) / 2.0};
    set.matches.push_back(match);
  }
  return set;
}

Refinement refine_match(const Match& coarse, const FeatureMap& fine_ref,
                        const FeatureMap& fine_src, int coarse_scale,
                        const RefineParams& rp) {
  if (rp.window < 1 || rp.window % 2 == 0)
    throw Error("refine_match: window must be odd and positive");
  if (fine_ref.channels != fine_src.channels)
    throw ShapeMismatch("refine_match: fine map channels differ");

  const int fs = fine_ref.scale;
  const double tau = rp.temperature > 0.0
                         ? rp.temperature
                         : 1.0 / std::sqrt(static_cast<double>(fine_ref.channels));

  auto fine_center = [&](int cell, int extent) {
    const double img = coarse_scale * cell + (coarse_scale - 1) / 2.0;
    const double g = (img - (fs - 1) / 2.0) / fs;
    return std::clamp(static_cast<int>(std::lround(g)), 0, extent - 1);
  };

  const int rcx = fine_center(coarse.ref_x, fine_ref.width);
  const int rcy = fine_center(coarse.ref_y, fine_ref.height);
  const double* ref_desc = fine_ref.pixel(rcy, rcx);

  const int r = (rp.window - 1) / 2;
  const int cx = std::clamp(fine_center(coarse.src_x, fine_src.width), std::min(r, fine_src.width - 1 - r),
                            std::max(r, fine_src.width - 1 - r));
  const int cy = std::clamp(fine_center(coarse.src_y, fine_src.height), std::min(r, fine_src.height - 1 - r),
                            std::max(r, fine_src.height - 1 - r));
  const int x0 = std::max(0, cx - r), x1 = std::min(fine_src.width - 1, cx + r);
  const int y0 = std::max(0, cy - r), y1 = std::min(fine_src.height - 1, cy + r);

  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> logits;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double* d = fine_src.pixel(y, x);
      double dot = 0.0;
      for (int c = 0; c < fine_src.channels; ++c) dot += ref_desc[c] * d[c];
      logits.push_back(tau * dot);
      best = std::max(best, logits.back());
    }

  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - best);
    denom += l;
  }

  double ex = 0.0, ey = 0.0, e2 = 0.0;
  size_t idx = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x, ++idx) {
      const double p = logits[idx] / denom;
      ex += p * x;
      ey += p * y;
      e2 += p * (static_cast<double>(x) * x + static_cast<double>(y) * y);
    }

  Refinement out;
  out.sigma2 = std::max(0.0, e2 - (ex * ex + ey * ey));
  out.src_px = {fs * ex + (fs - 1) / 2.0, fs * ey + (fs - 1) / 2.0};
  return out;
}

}  // namespace sem
