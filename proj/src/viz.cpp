#include "sem/viz.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sem {
namespace {

constexpr double kPanelGap = 24.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void emit_panel(std::ostringstream& svg, const PanelShading& panel, double x_off) {
  svg << "<g>\n";
  for (int y = 0; y < panel.dims.height; ++y)
    for (int x = 0; x < panel.dims.width; ++x) {
      const double v =
          panel.intensity.empty()
              ? 0.12
              : std::clamp(panel.intensity[static_cast<size_t>(y) * panel.dims.width + x],
                           0.0, 1.0);
      const int gray = static_cast<int>(30 + 200 * v);
      svg << "<rect x=\"" << num(x_off + x * panel.scale) << "\" y=\""
          << num(y * panel.scale) << "\" width=\"" << panel.scale << "\" height=\""
          << panel.scale << "\" fill=\"rgb(" << gray << "," << gray << "," << gray
          << ")\"/>\n";
    }
  svg << "<rect x=\"" << num(x_off) << "\" y=\"0\" width=\"" << panel.width_px()
      << "\" height=\"" << panel.height_px()
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "</g>\n";
}

void emit_band(std::ostringstream& svg, const VizBand& band, const PanelShading& q_panel,
               const PanelShading& kv_panel, double q_off, double kv_off) {
  for (int y = 0; y < band.mask.height; ++y)
    for (int x = 0; x < band.mask.width; ++x) {
      if (!band.mask.at(x, y)) continue;
      svg << "<rect x=\"" << num(kv_off + x * kv_panel.scale) << "\" y=\""
          << num(y * kv_panel.scale) << "\" width=\"" << kv_panel.scale
          << "\" height=\"" << kv_panel.scale
          << "\" fill=\"rgb(70,130,220)\" fill-opacity=\"0.35\"/>\n";
    }
  svg << "<rect x=\"" << num(q_off + band.query_x * q_panel.scale) << "\" y=\""
      << num(band.query_y * q_panel.scale) << "\" width=\"" << q_panel.scale
      << "\" height=\"" << q_panel.scale
      << "\" fill=\"none\" stroke=\"rgb(70,130,220)\" stroke-width=\"2\"/>\n";
}

}  // namespace

std::string render_match_svg(const PanelShading& ref_panel,
                             const PanelShading& src_panel,
                             const std::vector<VizMatch>& matches,
                             const std::vector<VizBand>& bands) {
  const double src_off = ref_panel.width_px() + kPanelGap;
  const double total_w = src_off + src_panel.width_px();
  const double total_h = std::max(ref_panel.height_px(), src_panel.height_px());

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(total_w)
      << "\" height=\"" << num(total_h) << "\" viewBox=\"0 0 " << num(total_w) << " "
      << num(total_h) << "\">\n";

  emit_panel(svg, ref_panel, 0.0);
  emit_panel(svg, src_panel, src_off);

  for (const VizBand& band : bands) {
    if (band.query_on_ref)
      emit_band(svg, band, ref_panel, src_panel, 0.0, src_off);
    else
      emit_band(svg, band, src_panel, ref_panel, src_off, 0.0);
  }

  for (const VizMatch& m : matches) {
    const double c = std::clamp(m.confidence, 0.0, 1.0);
    const int r = static_cast<int>(230 * (1.0 - c));
    const int g = static_cast<int>(30 + 200 * c);
    svg << "<line x1=\"" << num(m.ref_px.x) << "\" y1=\"" << num(m.ref_px.y)
        << "\" x2=\"" << num(src_off + m.src_px.x) << "\" y2=\"" << num(m.src_px.y)
        << "\" stroke=\"rgb(" << r << "," << g << ",40)\" stroke-width=\"1\"/>\n";
    svg << "<circle cx=\"" << num(m.ref_px.x) << "\" cy=\"" << num(m.ref_px.y)
        << "\" r=\"2\" fill=\"rgb(" << r << "," << g << ",40)\"/>\n";
    svg << "<circle cx=\"" << num(src_off + m.src_px.x) << "\" cy=\"" << num(m.src_px.y)
        << "\" r=\"2\" fill=\"rgb(" << r << "," << g << ",40)\"/>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace sem
