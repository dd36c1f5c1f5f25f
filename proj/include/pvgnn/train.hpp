#pragma once

// Training and evaluation drivers. Both networks train on sliding windows of
// a normalized power dataset with Adam and gradient accumulation, and are
// scored against persistence baselines over a held-out tail of the data.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pvgnn/datagen.hpp"
#include "pvgnn/errors.hpp"
#include "pvgnn/gclstm.hpp"
#include "pvgnn/gctrafo.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/metrics.hpp"
#include "pvgnn/optimizer.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

enum class ModelKind { kGCLSTM, kGCTrafo };

inline std::string model_kind_name(ModelKind k) {
  return k == ModelKind::kGCLSTM ? "gclstm" : "gctrafo";
}

inline ModelKind model_kind_from_name(const std::string& s) {
  if (s == "gclstm") return ModelKind::kGCLSTM;
  if (s == "gctrafo") return ModelKind::kGCTrafo;
  throw ParseError("unknown model kind: " + s);
}

struct TrainConfig {
  ModelKind kind = ModelKind::kGCLSTM;
  int iterations = 50000;
  int batch_size = 64;
  double lr = 1e-4;
  int M = 16;
  int H = 24;
  int k_neighbors = 15;
  int order = 4;
  int lat = 32;
  int n_heads = 8;      // attention model only
  int embed = 8;        // attention model only
  int kernel = 4;       // attention model only
  bool scale_attention = false;
  uint64_t seed = 1;
  double train_fraction = 0.7;
  int trace_every = 100;
};

// Reference hyperparameters per architecture. `desk_scale` shrinks the run to
// something a single CPU core finishes in minutes while keeping the same
// training dynamics (smaller batch, narrower model, fewer iterations).
inline TrainConfig default_train_config(ModelKind kind, bool desk_scale = false) {
  TrainConfig c;
  c.kind = kind;
  if (kind == ModelKind::kGCLSTM) {
    c.iterations = 50000;
    c.k_neighbors = 15;
    c.order = 4;
    c.lat = 32;
  } else {
    c.iterations = 70000;
    c.k_neighbors = 24;
    c.order = 2;
    c.lat = 8;
    c.n_heads = 8;
  }
  if (desk_scale) {
    c.iterations = 5000;
    c.batch_size = 16;
    c.k_neighbors = 5;
    if (kind == ModelKind::kGCLSTM) {
      c.lat = 8;
      c.order = 3;
    } else {
      c.n_heads = 2;
    }
  }
  return c;
}

inline void validate_train_config(const TrainConfig& c) {
  check_arg(c.iterations >= 1, "iterations must be >= 1");
  check_arg(c.batch_size >= 1, "batch size must be >= 1");
  check_arg(c.lr >= 0.0, "learning rate must be >= 0");
  check_arg(c.M >= 1 && c.H >= 1, "window lengths must be >= 1");
  check_arg(c.k_neighbors >= 1, "k_neighbors must be >= 1");
  check_arg(c.order >= 1, "graph filter order must be >= 1");
  check_arg(c.lat >= 1, "latent width must be >= 1");
  check_arg(c.train_fraction > 0.0 && c.train_fraction < 1.0,
            "train fraction must lie in (0, 1)");
  check_arg(c.trace_every >= 1, "trace interval must be >= 1");
  if (c.kind == ModelKind::kGCTrafo) {
    check_arg(c.n_heads >= 1, "attention needs at least one head");
    check_arg(c.embed >= 1 && c.kernel >= 1, "embedding width and kernel must be >= 1");
  }
}

// Day-aligned chronological split: the first `train_fraction` of whole days
// feed training windows, the rest are held out. A window belongs to the
// training set only if every target step lies before the boundary, and to the
// evaluation set only if every target step lies at or after it.
struct DataSplit {
  size_t train_end_step = 0;  // first dataset step of the evaluation segment
  std::vector<size_t> train_windows, eval_windows;
};

inline DataSplit split_windows(const Dataset& ds, const WindowSet& ws, int M, int H,
                               double train_fraction) {
  size_t steps_per_day = static_cast<size_t>(86400 / ds.step_seconds);
  size_t n_days = ds.steps() / steps_per_day;
  size_t train_days = static_cast<size_t>(train_fraction * static_cast<double>(n_days));
  check_arg(train_days >= 1 && train_days < n_days,
            "split leaves an empty training or evaluation segment");
  DataSplit split;
  split.train_end_step = train_days * steps_per_day;
  for (size_t i = 0; i < ws.size(); ++i) {
    size_t dec0 = ws.start_of(i) + static_cast<size_t>(M);
    if (dec0 + static_cast<size_t>(H) <= split.train_end_step)
      split.train_windows.push_back(i);
    else if (dec0 >= split.train_end_step)
      split.eval_windows.push_back(i);
  }
  check_arg(!split.train_windows.empty(), "no complete training windows in the split");
  check_arg(!split.eval_windows.empty(), "no complete evaluation windows in the split");
  return split;
}

struct TrainedModel {
  TrainConfig config;
  Graph graph;
  ScaledLaplacian lap;
  ParamStore store;
  std::optional<GCLSTMModel> gclstm;
  std::optional<GCTrafoModel> gctrafo;
  std::vector<std::pair<int, double>> trace;  // (iteration, batch loss)
};

inline Tensor model_forward(Tape& tape, const TrainedModel& m, const FeatureFrame& frame) {
  if (m.gclstm) return gclstm_forward(tape, *m.gclstm, frame);
  return gctrafo_forward(tape, *m.gctrafo, frame);
}

// Builds the k-nearest-neighbor graph and instantiates an untrained model in
// `out.store` with weights drawn from the seeded generator.
inline TrainedModel make_model(const TrainConfig& config, const std::vector<PlantSpec>& plants) {
  validate_train_config(config);
  validate_plants(plants);
  int n = static_cast<int>(plants.size());
  TrainedModel m;
  m.config = config;
  m.config.k_neighbors = std::min(config.k_neighbors, n - 1);
  m.graph = build_knn_graph(plant_locations(plants), m.config.k_neighbors);
  m.lap = scale_laplacian(laplacian(m.graph), n);
  std::mt19937_64 gen(config.seed);
  if (config.kind == ModelKind::kGCLSTM) {
    GCLSTMConfig mc;
    mc.n_nodes = n;
    mc.lat = config.lat;
    mc.order = config.order;
    mc.M = config.M;
    mc.H = config.H;
    m.gclstm = make_gclstm(m.store, mc, m.lap, gen);
  } else {
    GCTrafoConfig mc;
    mc.n_nodes = n;
    mc.lat = config.lat;
    mc.embed = config.embed;
    mc.order = config.order;
    mc.n_heads = config.n_heads;
    mc.kernel = config.kernel;
    mc.M = config.M;
    mc.H = config.H;
    mc.scale_attention = config.scale_attention;
    m.gctrafo = make_gctrafo(m.store, mc, m.lap, gen);
  }
  return m;
}

// Squared-error sum over all horizon steps and nodes of one window, in
// normalized power units.
inline Tensor window_loss(Tape& tape, Tensor pred, const FeatureFrame& frame) {
  Tensor target = tape.constant(Shape{frame.H, frame.n_nodes},
                                std::span<const double>(frame.target));
  return scale(mse_loss(pred, target), static_cast<double>(frame.H) * frame.n_nodes);
}

// Trains on uniformly sampled training windows. Each iteration accumulates
// gradients over `batch_size` windows (one tape pass per window, loss scaled
// by 1/batch) and applies one Adam step, so memory stays at a single window
// regardless of batch size. Fully deterministic for a fixed config and
// dataset. Normalizes `ds` by its training-segment maxima if the caller has
// not already done so.
inline TrainedModel train_model(const TrainConfig& config, Dataset& ds,
                                const std::vector<PlantSpec>& plants,
                                std::ostream* log = nullptr) {
  check_arg(static_cast<int>(plants.size()) == ds.n_nodes,
            "plant list does not match dataset node count");
  TrainedModel m = make_model(config, plants);

  size_t steps_per_day = static_cast<size_t>(86400 / ds.step_seconds);
  size_t n_days = ds.steps() / steps_per_day;
  size_t train_days =
      static_cast<size_t>(config.train_fraction * static_cast<double>(n_days));
  check_arg(train_days >= 1 && train_days < n_days,
            "dataset too short for the requested train/eval split");
  if (!ds.normalized()) normalize(ds, 0, train_days * steps_per_day);

  SkyTable sky = build_sky_table(ds, plant_locations(plants));
  WindowSet ws(ds, sky, config.M, config.H, 1);
  check_arg(ws.size() > 0, "dataset too short to form any training window");
  DataSplit split = split_windows(ds, ws, config.M, config.H, config.train_fraction);

  AdamState adam;
  adam.config.lr = config.lr;
  std::mt19937_64 sampler(config.seed ^ 0x9e3779b97f4a7c15ull);
  Tape tape;
  double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  for (int iter = 0; iter < config.iterations; ++iter) {
    m.store.zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      size_t widx = split.train_windows[sampler() % split.train_windows.size()];
      FeatureFrame frame = ws.frame(widx);
      tape.reset();
      Tensor pred = model_forward(tape, m, frame);
      Tensor loss = scale(window_loss(tape, pred, frame), inv_batch);
      batch_loss += tape.value(loss)[0];
      tape.backward(loss);
    }
    if (!std::isfinite(batch_loss))
      throw NumericError("non-finite training loss at iteration " + std::to_string(iter));
    adam_step(m.store, adam);
    if (iter % config.trace_every == 0 || iter + 1 == config.iterations) {
      m.trace.emplace_back(iter, batch_loss);
      if (log) *log << "iter " << iter << " loss " << batch_loss << "\n";
    }
  }
  return m;
}

enum class BaselineKind { kPowerPersistence, kCsiPersistence };

// Reference forecasts in kW over an H-step horizon beginning at
// `first_decoder_step`, from the last observed step alone. Power persistence
// repeats the last power; clear-sky-index persistence scales the node's
// clear-sky irradiance curve by the last observed power-to-irradiance ratio
// (floored at 1 W/m², so a night start yields an all-zero forecast).
inline std::vector<double> baseline_forecast(BaselineKind kind, const Dataset& ds,
                                             const SkyTable& sky, size_t first_decoder_step,
                                             int H) {
  check_arg(H >= 1, "horizon must be >= 1");
  check_arg(first_decoder_step >= 1, "baseline needs one observed step before the horizon");
  check_arg(first_decoder_step + static_cast<size_t>(H) <= ds.steps(),
            "horizon runs past the end of the dataset");
  size_t n = static_cast<size_t>(ds.n_nodes);
  std::vector<double> out(static_cast<size_t>(H) * n);
  size_t t_prev = first_decoder_step - 1;
  for (int v = 0; v < ds.n_nodes; ++v) {
    double p_prev = ds.at(t_prev, v);
    double kappa = p_prev / std::max(sky.ghi_at(t_prev, v), 1.0);
    for (int h = 0; h < H; ++h) {
      size_t t = first_decoder_step + static_cast<size_t>(h);
      out[static_cast<size_t>(h) * n + static_cast<size_t>(v)] =
          kind == BaselineKind::kPowerPersistence ? p_prev : kappa * sky.ghi_at(t, v);
    }
  }
  return out;
}

struct EvalReports {
  MetricsReport model;
  MetricsReport persistence;      // repeats the last observed power
  MetricsReport csi_persistence;  // scales clear-sky irradiance by the last clear-sky index
  std::vector<double> p_max_eval;  // per-node peak power over the evaluation segment, kW
  size_t n_windows = 0;
};

// Scores the model and both baselines over the held-out windows. All three
// consume the identical window sequence and night mask, in physical kW, with
// negative model outputs clipped to zero. Error normalization uses each
// node's peak over the evaluation segment, not the training maxima used for
// feature scaling.
inline EvalReports evaluate_model(const TrainedModel& m, Dataset& ds,
                                  const std::vector<PlantSpec>& plants) {
  const TrainConfig& config = m.config;
  check_arg(static_cast<int>(plants.size()) == ds.n_nodes,
            "plant list does not match dataset node count");

  size_t steps_per_day = static_cast<size_t>(86400 / ds.step_seconds);
  size_t n_days = ds.steps() / steps_per_day;
  size_t train_days =
      static_cast<size_t>(config.train_fraction * static_cast<double>(n_days));
  check_arg(train_days >= 1 && train_days < n_days,
            "dataset too short for the requested train/eval split");
  if (!ds.normalized()) normalize(ds, 0, train_days * steps_per_day);

  SkyTable sky = build_sky_table(ds, plant_locations(plants));
  WindowSet ws(ds, sky, config.M, config.H, 1);
  DataSplit split = split_windows(ds, ws, config.M, config.H, config.train_fraction);

  int n = ds.n_nodes, H = config.H;
  EvalReports out;
  out.p_max_eval.assign(static_cast<size_t>(n), 0.0);
  for (size_t t = split.train_end_step; t < ds.steps(); ++t)
    for (int v = 0; v < n; ++v)
      out.p_max_eval[static_cast<size_t>(v)] =
          std::max(out.p_max_eval[static_cast<size_t>(v)], ds.at(t, v));

  MetricAccumulator acc_model(n, H), acc_persist(n, H), acc_csi(n, H);
  Tape tape;
  std::vector<double> pred;
  for (size_t idx : split.eval_windows) {
    FeatureFrame frame = ws.frame(idx);
    tape.reset();
    Tensor p = model_forward(tape, m, frame);
    std::span<const double> pv = tape.value(p);
    pred.assign(pv.begin(), pv.end());
    std::vector<double> persist =
        baseline_forecast(BaselineKind::kPowerPersistence, ds, sky, frame.first_decoder_step, H);
    std::vector<double> csi =
        baseline_forecast(BaselineKind::kCsiPersistence, ds, sky, frame.first_decoder_step, H);
    for (int v = 0; v < n; ++v) {
      double pmax_train = ds.per_node_max[static_cast<size_t>(v)];
      for (int h = 0; h < H; ++h) {
        size_t t = frame.first_decoder_step + static_cast<size_t>(h);
        size_t i = static_cast<size_t>(h) * n + static_cast<size_t>(v);
        double truth = ds.at(t, v);
        bool night = sky.night(t, v);
        acc_model.add(v, h, std::max(0.0, pred[i] * pmax_train), truth, night);
        acc_persist.add(v, h, persist[i], truth, night);
        acc_csi.add(v, h, csi[i], truth, night);
      }
    }
    ++out.n_windows;
  }
  out.model = acc_model.finalize(out.p_max_eval, ds.step_seconds);
  out.persistence = acc_persist.finalize(out.p_max_eval, ds.step_seconds);
  out.csi_persistence = acc_csi.finalize(out.p_max_eval, ds.step_seconds);
  return out;
}

}  // namespace pvgnn
