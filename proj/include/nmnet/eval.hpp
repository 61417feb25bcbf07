#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nmnet/geom.hpp"
#include "nmnet/synth.hpp"

namespace nmnet {

struct SelectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

/// Precision, recall and F-measure of `pred` against `gt`. P is 0 when
/// nothing is predicted, R is 0 when there is no positive.
SelectionMetrics prf(const LabelVector& pred, const LabelVector& gt);

/// min(|E - G|_F, |E + G|_F) for unit-norm E, G; lies in [0, 2].
double essential_deviation(const EssentialMatrix& e_est, const EssentialMatrix& e_gt);

struct EDeviationStats {
  double mse = 0.0;
  double mae = 0.0;
  double median = 0.0;
  double max = 0.0;
  double min = 0.0;
};

/// Throws EmptyInput on an empty list. Even-length medians take the lower
/// middle element.
EDeviationStats aggregate_deviation(std::span<const double> values);

/// Per-scene row of a report.
struct SceneRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  SelectionMetrics metrics;
  std::optional<double> deviation;  ///< empty when E could not be estimated
  std::string flag;                 ///< empty, or why the row is flagged
};

struct SelectorReport {
  std::string selector;
  std::vector<SceneRow> rows;
  /// Means of the per-scene P, R and F over all rows.
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::optional<EDeviationStats> deviation;  ///< over unflagged rows only
  std::size_t flagged = 0;
};

/// Maps a scene to predicted labels. May throw; the row is then flagged and
/// the prediction taken as all zeros.
using Selector = std::function<LabelVector(const ScenePair&)>;

/// Scores one selector over a labeled dataset. E is re-estimated with the
/// eight-point solver on the selected correspondences; rows with fewer than 8
/// selections or a degenerate solve are flagged NoEstimate.
SelectorReport evaluate_selector(std::span<const ScenePair> dataset, const std::string& name,
                                 const Selector& selector);

/// Recomputes the aggregate block of a report from its rows.
SelectorReport summarize(std::string selector, std::vector<SceneRow> rows);

struct EvaluationReport {
  std::vector<SelectorReport> selectors;
};

/// Structured-text report: per-scene rows and an aggregate block per selector.
std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

/// Aligned plain-text comparison table.
void print_table(std::ostream& out, const EvaluationReport& report);

}  // namespace nmnet
