#include "nmnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include <json.hpp>

#include "nmnet/error.hpp"
#include "nmnet/ransac.hpp"

namespace nmnet {

SelectionMetrics prf(const LabelVector& pred, const LabelVector& gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::ShapeError, "prediction and ground truth differ in length");
  }
  SelectionMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++m.tp;
    else if (p) ++m.fp;
    else if (g) ++m.fn;
    else ++m.tn;
  }
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  const double sum = m.precision + m.recall;
  m.f_measure = sum > 0.0 ? 2.0 * m.precision * m.recall / sum : 0.0;
  return m;
}

double essential_deviation(const EssentialMatrix& e_est, const EssentialMatrix& e_gt) {
  return std::min((e_est.matrix() - e_gt.matrix()).norm(), (e_est.matrix() + e_gt.matrix()).norm());
}

EDeviationStats aggregate_deviation(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no deviations to aggregate");
  EDeviationStats s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (double v : values) {
    s.mse += v * v;
    s.mae += std::abs(v);
  }
  const auto n = static_cast<double>(values.size());
  s.mse /= n;
  s.mae /= n;
  s.median = sorted[(sorted.size() - 1) / 2];
  s.min = sorted.front();
  s.max = sorted.back();
  return s;
}

SelectorReport summarize(std::string selector, std::vector<SceneRow> rows) {
  SelectorReport rep;
  rep.selector = std::move(selector);
  std::vector<double> deviations;
  for (const auto& r : rows) {
    rep.precision += r.metrics.precision;
    rep.recall += r.metrics.recall;
    rep.f_measure += r.metrics.f_measure;
    if (!r.flag.empty()) ++rep.flagged;
    if (r.flag.empty() && r.deviation) deviations.push_back(*r.deviation);
  }
  if (!rows.empty()) {
    const auto n = static_cast<double>(rows.size());
    rep.precision /= n;
    rep.recall /= n;
    rep.f_measure /= n;
  }
  if (!deviations.empty()) rep.deviation = aggregate_deviation(deviations);
  rep.rows = std::move(rows);
  return rep;
}

SelectorReport evaluate_selector(std::span<const ScenePair> dataset, const std::string& name,
                                 const Selector& selector) {
  std::vector<SceneRow> rows;
  rows.reserve(dataset.size());
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    const ScenePair& scene = dataset[s];
    SceneRow row;
    row.index = s;
    row.seed = scene.seed;
    LabelVector pred;
    try {
      pred = selector(scene);
      if (pred.size() != scene.size()) throw Error(ErrorCode::ShapeError, "selector returned wrong length");
    } catch (const Error& e) {
      pred.assign(scene.size(), 0);
      row.flag = std::string("SelectorFailed: ") + e.what();
    }
    row.metrics = prf(pred, scene.labels_gt);

    std::vector<Correspondence> selected;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (pred[i]) selected.push_back(scene.correspondences[i]);
    }
    try {
      row.deviation = essential_deviation(eight_point(selected), scene.e_gt);
    } catch (const Error&) {
      if (row.flag.empty()) row.flag = "NoEstimate";
    }
    rows.push_back(std::move(row));
  }
  return summarize(name, std::move(rows));
}

namespace {

nlohmann::ordered_json metrics_json(const SelectionMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f_measure", m.f_measure},
          {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn},
          {"tn", m.tn}};
}

}  // namespace

std::string report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  auto& sels = doc["selectors"] = nlohmann::ordered_json::array();
  for (const auto& rep : report.selectors) {
    nlohmann::ordered_json s;
    s["selector"] = rep.selector;
    auto& rows = s["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.rows) {
      nlohmann::ordered_json row;
      row["index"] = r.index;
      row["seed"] = r.seed;
      row["metrics"] = metrics_json(r.metrics);
      row["deviation"] = r.deviation ? nlohmann::ordered_json(*r.deviation) : nlohmann::ordered_json();
      row["flag"] = r.flag;
      rows.push_back(std::move(row));
    }
    nlohmann::ordered_json agg;
    agg["precision"] = rep.precision;
    agg["recall"] = rep.recall;
    agg["f_measure"] = rep.f_measure;
    agg["flagged"] = rep.flagged;
    if (rep.deviation) {
      agg["deviation"] = {{"mse", rep.deviation->mse},       {"mae", rep.deviation->mae},
                          {"median", rep.deviation->median}, {"max", rep.deviation->max},
                          {"min", rep.deviation->min}};
    } else {
      agg["deviation"] = nullptr;
    }
    s["aggregate"] = std::move(agg);
    sels.push_back(std::move(s));
  }
  return doc.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
  EvaluationReport report;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& s : doc.at("selectors")) {
      std::vector<SceneRow> rows;
      for (const auto& r : s.at("rows")) {
        SceneRow row;
        row.index = r.at("index").get<std::size_t>();
        row.seed = r.at("seed").get<std::uint64_t>();
        const auto& m = r.at("metrics");
        row.metrics.precision = m.at("precision").get<double>();
        row.metrics.recall = m.at("recall").get<double>();
        row.metrics.f_measure = m.at("f_measure").get<double>();
        row.metrics.tp = m.at("tp").get<std::size_t>();
        row.metrics.fp = m.at("fp").get<std::size_t>();
        row.metrics.fn = m.at("fn").get<std::size_t>();
        row.metrics.tn = m.at("tn").get<std::size_t>();
        if (!r.at("deviation").is_null()) row.deviation = r.at("deviation").get<double>();
        row.flag = r.at("flag").get<std::string>();
        rows.push_back(std::move(row));
      }
      report.selectors.push_back(summarize(s.at("selector").get<std::string>(), std::move(rows)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return report;
}

void print_table(std::ostream& out, const EvaluationReport& report) {
  const auto flags = out.flags();
  out << std::left << std::setw(12) << "selector" << std::right << std::setw(10) << "P(%)" << std::setw(10)
      << "R(%)" << std::setw(10) << "F(%)" << std::setw(10) << "MSE" << std::setw(10) << "MAE" << std::setw(10)
      << "median" << std::setw(10) << "max" << std::setw(10) << "min" << std::setw(9) << "flagged" << '\n';
  out << std::fixed;
  for (const auto& rep : report.selectors) {
    out << std::left << std::setw(12) << rep.selector << std::right << std::setprecision(3) << std::setw(10)
        << 100.0 * rep.precision << std::setw(10) << 100.0 * rep.recall << std::setw(10) << 100.0 * rep.f_measure;
    if (rep.deviation) {
      const auto& d = *rep.deviation;
      out << std::setprecision(4) << std::setw(10) << d.mse << std::setw(10) << d.mae << std::setw(10) << d.median
          << std::setw(10) << d.max << std::setw(10) << d.min;
    } else {
      for (int i = 0; i < 5; ++i) out << std::setw(10) << "n/a";
    }
    out << std::setw(9) << rep.flagged << '\n';
  }
  out.flags(flags);
}

}  // namespace nmnet
