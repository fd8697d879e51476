#pragma once

#include <vector>

#include "sem/match_matrix.hpp"

namespace sem {

struct CellPair {
  int ref_x = 0, ref_y = 0, src_x = 0, src_y = 0;
  auto operator<=>(const CellPair&) const = default;
};

struct CellMetrics {
  int pred_count = 0;
  int gt_count = 0;
  int hits = 0;
  double precision = 0.0;  // 0 by convention when there are no predictions
  double recall = 0.0;
  bool empty_predictions = false;
};

CellMetrics score_cells(const std::vector<CellPair>& predictions,
                        const std::vector<CellPair>& ground_truth);

// Area under the cumulative pose-error curve up to the threshold, computed
// exactly for a finite batch: mean over errors of max(0, 1 - e/t).
double pose_auc(const std::vector<double>& errors_deg, double threshold_deg);

}  // namespace sem
