#pragma once

// Forecast accuracy metrics over horizon steps with night masking, plus the
// serialization used by the evaluation CLI: per-node CSV, per-step summary
// JSON, model-vs-baseline comparison, and nearest-neighbor distance tables.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvgnn/errors.hpp"
#include "pvgnn/graph.hpp"

namespace pvgnn {

// Root-mean-square error over unmasked samples, as a fraction of the node's
// peak power. `night[i]` non-zero excludes sample i.
inline double nrmse_series(std::span<const double> pred, std::span<const double> truth,
                           double p_max, std::span<const char> night) {
  check_arg(pred.size() == truth.size() && pred.size() == night.size(),
            "nrmse: series lengths differ");
  check_arg(p_max > 0.0, "nrmse: p_max must be positive");
  double sq = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (night[i]) continue;
    double d = (pred[i] - truth[i]) / p_max;
    sq += d * d;
    ++count;
  }
  if (count == 0) throw UndefinedMetricError("nrmse over an all-masked series");
  return std::sqrt(sq / static_cast<double>(count));
}

// Total absolute error as a fraction of total production over unmasked
// samples.
inline double nmae_series(std::span<const double> pred, std::span<const double> truth,
                          std::span<const char> night) {
  check_arg(pred.size() == truth.size() && pred.size() == night.size(),
            "nmae: series lengths differ");
  double abs_sum = 0.0, truth_sum = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (night[i]) continue;
    abs_sum += std::fabs(pred[i] - truth[i]);
    truth_sum += truth[i];
    ++count;
  }
  if (count == 0) throw UndefinedMetricError("nmae over an all-masked series");
  if (truth_sum <= 0.0) throw UndefinedMetricError("nmae with zero total production");
  return abs_sum / truth_sum;
}

// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
  check_arg(!values.empty(), "quantile of an empty set");
  check_arg(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct MetricsReport {
  int n_nodes = 0;
  int horizon = 0;
  int64_t step_seconds = 900;
  std::vector<double> nrmse;  // N × H row-major
  std::vector<double> nmae;   // N × H
  std::vector<double> nrmse_median, nrmse_q25, nrmse_q75;  // per step, over nodes
  std::vector<double> nmae_median, nmae_q25, nmae_q75;

  double nrmse_at(int v, int h) const { return nrmse[static_cast<size_t>(v) * horizon + h]; }
  double nmae_at(int v, int h) const { return nmae[static_cast<size_t>(v) * horizon + h]; }
  int horizon_minutes(int h) const {
    return static_cast<int>((h + 1) * step_seconds / 60);
  }
};

// Streams (pred, truth) samples per (node, horizon step), skipping night
// samples, and finalizes into a MetricsReport once the per-node evaluation
// maxima are known.
class MetricAccumulator {
 public:
  MetricAccumulator(int n_nodes, int horizon)
      : n_(n_nodes), h_(horizon), sq_(size(), 0.0), abs_(size(), 0.0), truth_(size(), 0.0),
        count_(size(), 0) {
    check_arg(n_nodes >= 1 && horizon >= 1, "metrics need at least one node and one step");
  }

  void add(int v, int h, double pred, double truth, bool night) {
    if (night) return;
    size_t i = static_cast<size_t>(v) * h_ + static_cast<size_t>(h);
    double d = pred - truth;
    sq_[i] += d * d;
    abs_[i] += std::fabs(d);
    truth_[i] += truth;
    count_[i] += 1;
  }

  int64_t samples(int v, int h) const {
    return count_[static_cast<size_t>(v) * h_ + static_cast<size_t>(h)];
  }

  MetricsReport finalize(const std::vector<double>& p_max, int64_t step_seconds = 900) const {
    check_arg(static_cast<int>(p_max.size()) == n_, "p_max size does not match node count");
    MetricsReport r;
    r.n_nodes = n_;
    r.horizon = h_;
    r.step_seconds = step_seconds;
    r.nrmse.resize(size());
    r.nmae.resize(size());
    for (int v = 0; v < n_; ++v) {
      check_arg(p_max[static_cast<size_t>(v)] > 0.0,
                "node " + std::to_string(v) + " has non-positive evaluation maximum");
      for (int h = 0; h < h_; ++h) {
        size_t i = static_cast<size_t>(v) * h_ + static_cast<size_t>(h);
        if (count_[i] == 0)
          throw UndefinedMetricError("no daytime samples for node " + std::to_string(v) +
                                     " at step " + std::to_string(h + 1));
        if (truth_[i] <= 0.0)
          throw UndefinedMetricError("zero production for node " + std::to_string(v) +
                                     " at step " + std::to_string(h + 1));
        double mean_sq = sq_[i] / static_cast<double>(count_[i]);
        r.nrmse[i] = std::sqrt(mean_sq) / p_max[static_cast<size_t>(v)];
        r.nmae[i] = abs_[i] / truth_[i];
      }
    }
    for (int h = 0; h < h_; ++h) {
      std::vector<double> col_rmse(static_cast<size_t>(n_)), col_mae(static_cast<size_t>(n_));
      for (int v = 0; v < n_; ++v) {
        col_rmse[static_cast<size_t>(v)] = r.nrmse_at(v, h);
        col_mae[static_cast<size_t>(v)] = r.nmae_at(v, h);
      }
      r.nrmse_median.push_back(quantile(col_rmse, 0.5));
      r.nrmse_q25.push_back(quantile(col_rmse, 0.25));
      r.nrmse_q75.push_back(quantile(col_rmse, 0.75));
      r.nmae_median.push_back(quantile(col_mae, 0.5));
      r.nmae_q25.push_back(quantile(col_mae, 0.25));
      r.nmae_q75.push_back(quantile(col_mae, 0.75));
    }
    return r;
  }

 private:
  size_t size() const { return static_cast<size_t>(n_) * static_cast<size_t>(h_); }

  int n_, h_;
  std::vector<double> sq_, abs_, truth_;
  std::vector<int64_t> count_;
};

inline void save_metrics_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << "node,step,horizon_minutes,nrmse,nmae\n";
  char buf[64];
  for (int v = 0; v < r.n_nodes; ++v)
    for (int h = 0; h < r.horizon; ++h) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.8f,%.8f", v, h + 1, r.horizon_minutes(h),
                    r.nrmse_at(v, h), r.nmae_at(v, h));
      out << buf << "\n";
    }
}

inline nlohmann::json metrics_summary_json(const MetricsReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (int h = 0; h < r.horizon; ++h)
    steps.push_back({{"step", h + 1},
                     {"horizon_minutes", r.horizon_minutes(h)},
                     {"nrmse", {{"median", r.nrmse_median[static_cast<size_t>(h)]},
                                {"q25", r.nrmse_q25[static_cast<size_t>(h)]},
                                {"q75", r.nrmse_q75[static_cast<size_t>(h)]}}},
                     {"nmae", {{"median", r.nmae_median[static_cast<size_t>(h)]},
                               {"q25", r.nmae_q25[static_cast<size_t>(h)]},
                               {"q75", r.nmae_q75[static_cast<size_t>(h)]}}}});
  return {{"n_nodes", r.n_nodes}, {"horizon_steps", r.horizon}, {"per_step", steps}};
}

// Side-by-side per-step medians of the model against both persistence
// baselines, ready for plotting.
inline void save_comparison_csv(const MetricsReport& model, const MetricsReport& persistence,
                                const MetricsReport& csi, const std::string& path) {
  check_arg(model.horizon == persistence.horizon && model.horizon == csi.horizon,
            "comparison: reports cover different horizons");
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << "step,horizon_minutes,model_nrmse,persistence_nrmse,csi_persistence_nrmse,"
         "model_nmae,persistence_nmae,csi_persistence_nmae\n";
  char buf[192];
  for (int h = 0; h < model.horizon; ++h) {
    size_t i = static_cast<size_t>(h);
    std::snprintf(buf, sizeof(buf), "%d,%d,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f", h + 1,
                  model.horizon_minutes(h), model.nrmse_median[i], persistence.nrmse_median[i],
                  csi.nrmse_median[i], model.nmae_median[i], persistence.nmae_median[i],
                  csi.nmae_median[i]);
    out << buf << "\n";
  }
}

// Per-node distance to the closest other site, paired with that node's error
// at the 1 h, 3 h, and 6 h marks (or the last step if the horizon is shorter).
struct DistanceErrorRow {
  int node = 0;
  double nn_distance_km = 0.0;
  double nrmse_1h = 0.0, nrmse_3h = 0.0, nrmse_6h = 0.0;
};

inline std::vector<DistanceErrorRow> distance_error_analysis(const MetricsReport& r,
                                                             const Graph& g) {
  check_arg(g.n_nodes == r.n_nodes, "graph and report node counts differ");
  check_arg(g.n_nodes >= 2, "distance analysis needs at least two nodes");
  auto step_index = [&](int one_based) { return std::min(one_based, r.horizon) - 1; };
  int s1 = step_index(4), s3 = step_index(12), s6 = step_index(24);
  std::vector<DistanceErrorRow> rows;
  rows.reserve(static_cast<size_t>(g.n_nodes));
  for (int v = 0; v < g.n_nodes; ++v) {
    DistanceErrorRow row;
    row.node = v;
    row.nn_distance_km = 1e300;
    for (int u = 0; u < g.n_nodes; ++u)
      if (u != v)
        row.nn_distance_km =
            std::min(row.nn_distance_km,
                     haversine_km(g.locations[static_cast<size_t>(v)],
                                  g.locations[static_cast<size_t>(u)]));
    row.nrmse_1h = r.nrmse_at(v, s1);
    row.nrmse_3h = r.nrmse_at(v, s3);
    row.nrmse_6h = r.nrmse_at(v, s6);
    rows.push_back(row);
  }
  return rows;
}

inline void save_distance_csv(const std::vector<DistanceErrorRow>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << "node,nn_distance_km,nrmse_1h,nrmse_3h,nrmse_6h\n";
  char buf[128];
  for (const DistanceErrorRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.4f,%.8f,%.8f,%.8f", r.node, r.nn_distance_km,
                  r.nrmse_1h, r.nrmse_3h, r.nrmse_6h);
    out << buf << "\n";
  }
}

}  // namespace pvgnn
