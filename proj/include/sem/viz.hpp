#pragma once

#include <string>
#include <vector>

#include "sem/geometry.hpp"
#include "sem/match_matrix.hpp"

namespace sem {

// Per-cell grayscale shading for one panel; intensity in [0, 1], row-major.
struct PanelShading {
  GridShape dims;
  int scale = 8;  // image pixels per cell
  std::vector<double> intensity;

  int width_px() const { return dims.width * scale; }
  int height_px() const { return dims.height * scale; }
};

struct VizMatch {
  Vec2 ref_px, src_px;  // image pixels in their own panels
  double confidence = 0.0;
};

// Band overlay: a query cell on one panel and its candidate-region mask over
// the opposite panel's cells.
struct VizBand {
  int query_x = 0, query_y = 0;
  bool query_on_ref = true;
  BoolGrid mask;
};

// Side-by-side SVG: shaded cell panels, match lines colored by confidence,
// optional band overlays. Pure string composition, deterministic formatting.
std::string render_match_svg(const PanelShading& ref_panel,
                             const PanelShading& src_panel,
                             const std::vector<VizMatch>& matches,
                             const std::vector<VizBand>& bands);

}  // namespace sem
