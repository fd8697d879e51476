#include "sem/metrics.hpp"

#include <algorithm>
#include <set>

namespace sem {

CellMetrics score_cells(const std::vector<CellPair>& predictions,
                        const std::vector<CellPair>& ground_truth) {
  CellMetrics m;
  const std::set<CellPair> truth(ground_truth.begin(), ground_truth.end());
  const std::set<CellPair> preds(predictions.begin(), predictions.end());
  m.pred_count = static_cast<int>(preds.size());
  m.gt_count = static_cast<int>(truth.size());
  for (const CellPair& p : preds) m.hits += truth.count(p) ? 1 : 0;

  m.empty_predictions = preds.empty();
  m.precision = preds.empty() ? 0.0 : static_cast<double>(m.hits) / preds.size();
  m.recall = truth.empty() ? 0.0 : static_cast<double>(m.hits) / truth.size();
  return m;
}

double pose_auc(const std::vector<double>& errors_deg, double threshold_deg) {
  if (errors_deg.empty() || threshold_deg <= 0.0) return 0.0;
  double sum = 0.0;
  for (double e : errors_deg) sum += std::max(0.0, 1.0 - e / threshold_deg);
  return sum / static_cast<double>(errors_deg.size());
}

}  // namespace sem
