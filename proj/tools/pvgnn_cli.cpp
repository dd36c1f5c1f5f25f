// Command-line front end for the forecasting pipeline: synthetic data
// generation, model training, and evaluation against persistence baselines.
// Exit codes: 0 success, 1 usage or input error, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pvgnn/checkpoint.hpp"
#include "pvgnn/datagen.hpp"
#include "pvgnn/manifest.hpp"
#include "pvgnn/metrics.hpp"
#include "pvgnn/timeutil.hpp"
#include "pvgnn/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long to_long(const std::string& value, const std::string& key, long row) {
  try {
    size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw pvgnn::ParseError("config value for " + key + " is not an integer: " + value, row);
  }
}

double to_double(const std::string& value, const std::string& key, long row) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw pvgnn::ParseError("config value for " + key + " is not a number: " + value, row);
  }
}

bool to_bool(const std::string& value, const std::string& key, long row) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw pvgnn::ParseError("config value for " + key + " is not a boolean: " + value, row);
}

// key=value lines, # comments, blank lines ignored
std::vector<std::tuple<long, std::string, std::string>> read_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw pvgnn::ParseError("cannot open config file: " + path);
  std::vector<std::tuple<long, std::string, std::string>> entries;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string s = trimmed(line);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw pvgnn::ParseError("config line must be key=value: " + s, row);
    std::string key = trimmed(s.substr(0, eq));
    std::string value = trimmed(s.substr(eq + 1));
    if (key.empty() || value.empty())
      throw pvgnn::ParseError("config line must be key=value: " + s, row);
    entries.emplace_back(row, key, value);
  }
  return entries;
}

void apply_config_entry(pvgnn::TrainConfig& c, const std::string& key, const std::string& value,
                        long row) {
  if (key == "model")
    c.kind = pvgnn::model_kind_from_name(value);
  else if (key == "iterations")
    c.iterations = static_cast<int>(to_long(value, key, row));
  else if (key == "batch_size")
    c.batch_size = static_cast<int>(to_long(value, key, row));
  else if (key == "lr")
    c.lr = to_double(value, key, row);
  else if (key == "encoder_steps")
    c.M = static_cast<int>(to_long(value, key, row));
  else if (key == "horizon_steps")
    c.H = static_cast<int>(to_long(value, key, row));
  else if (key == "k_neighbors")
    c.k_neighbors = static_cast<int>(to_long(value, key, row));
  else if (key == "order")
    c.order = static_cast<int>(to_long(value, key, row));
  else if (key == "lat")
    c.lat = static_cast<int>(to_long(value, key, row));
  else if (key == "n_heads")
    c.n_heads = static_cast<int>(to_long(value, key, row));
  else if (key == "embed")
    c.embed = static_cast<int>(to_long(value, key, row));
  else if (key == "kernel")
    c.kernel = static_cast<int>(to_long(value, key, row));
  else if (key == "scale_attention")
    c.scale_attention = to_bool(value, key, row);
  else if (key == "seed")
    c.seed = static_cast<uint64_t>(to_long(value, key, row));
  else if (key == "train_fraction")
    c.train_fraction = to_double(value, key, row);
  else if (key == "trace_every")
    c.trace_every = static_cast<int>(to_long(value, key, row));
  else
    throw pvgnn::ParseError("unknown config key: " + key, row);
}

struct GenDataArgs {
  int nodes = 12;
  int days = 30;
  uint64_t seed = 7;
  double wind_kmh = 20.0;
  double wind_north_kmh = 5.0;
  int clouds = 12;
  double region_km = 100.0;
  std::string start = "2017-06-01T00:00:00Z";
  std::string out = ".";
};

int run_gen_data(const GenDataArgs& a) {
  std::vector<pvgnn::PlantSpec> plants = pvgnn::random_plants(a.nodes, a.seed, a.region_km);
  pvgnn::CloudField field =
      pvgnn::random_cloud_field(a.clouds, a.seed + 1, a.region_km, a.wind_kmh,
                                a.wind_north_kmh);
  pvgnn::Dataset ds =
      pvgnn::simulate_power(plants, field, pvgnn::parse_iso8601(a.start), a.days);
  fs::create_directories(a.out);
  pvgnn::save_csv(ds, (fs::path(a.out) / "dataset.csv").string());
  pvgnn::save_plants_json(plants, (fs::path(a.out) / "plants.json").string());

  nlohmann::json config = {{"nodes", a.nodes},         {"days", a.days},
                           {"seed", a.seed},           {"wind_kmh", a.wind_kmh},
                           {"wind_north_kmh", a.wind_north_kmh},
                           {"clouds", a.clouds},       {"region_km", a.region_km},
                           {"start", a.start}};
  pvgnn::write_run_manifest(a.out, "gen-data", config, {},
                            {"dataset.csv", "plants.json"});

  double cap_min = 1e300, cap_max = 0.0, cap_sum = 0.0;
  for (const pvgnn::PlantSpec& p : plants) {
    cap_min = std::min(cap_min, p.capacity_kw);
    cap_max = std::max(cap_max, p.capacity_kw);
    cap_sum += p.capacity_kw;
  }
  std::printf("generated %zu steps x %d nodes (%d days at 15 min)\n", ds.steps(), ds.n_nodes,
              a.days);
  std::printf("capacity kW: min %.2f mean %.2f max %.2f\n", cap_min,
              cap_sum / static_cast<double>(plants.size()), cap_max);
  std::printf("wrote %s and %s\n", (fs::path(a.out) / "dataset.csv").string().c_str(),
              (fs::path(a.out) / "plants.json").string().c_str());
  return 0;
}

struct IoArgs {
  std::string dataset;
  std::string plants;
  std::string out = ".";
};

int run_train(const IoArgs& io, const pvgnn::TrainConfig& config) {
  std::vector<pvgnn::PlantSpec> plants = pvgnn::load_plants_json(io.plants);
  pvgnn::Dataset ds = pvgnn::load_csv(io.dataset);
  pvgnn::TrainedModel m = pvgnn::train_model(config, ds, plants, &std::cout);

  fs::create_directories(io.out);
  pvgnn::save_checkpoint(m, (fs::path(io.out) / "checkpoint.json").string(),
                         (fs::path(io.out) / "checkpoint.bin").string());
  std::string trace_path = (fs::path(io.out) / "loss_trace.csv").string();
  {
    std::ofstream trace(trace_path);
    pvgnn::check_arg(trace.good(), "cannot open for writing: " + trace_path);
    trace << "iteration,loss\n";
    char buf[64];
    for (auto [iter, loss] : m.trace) {
      std::snprintf(buf, sizeof(buf), "%d,%.10g", iter, loss);
      trace << buf << "\n";
    }
  }
  pvgnn::write_run_manifest(io.out, "train", pvgnn::train_config_to_json(config),
                            {io.dataset, io.plants},
                            {"checkpoint.json", "checkpoint.bin", "loss_trace.csv"});
  std::printf("trained %s for %d iterations, final batch loss %.6g\n",
              pvgnn::model_kind_name(config.kind).c_str(), config.iterations,
              m.trace.back().second);
  std::printf("wrote checkpoint to %s\n", (fs::path(io.out) / "checkpoint.json").string().c_str());
  return 0;
}

int run_eval(const IoArgs& io, const std::string& checkpoint, bool horizon_given, int horizon) {
  std::vector<pvgnn::PlantSpec> plants = pvgnn::load_plants_json(io.plants);
  pvgnn::Dataset ds = pvgnn::load_csv(io.dataset);
  std::string blob = fs::path(checkpoint).replace_extension(".bin").string();
  pvgnn::TrainedModel m = pvgnn::load_checkpoint(checkpoint, blob, plants);
  if (horizon_given && horizon != m.config.H)
    throw std::invalid_argument("horizon mismatch: checkpoint predicts " +
                                std::to_string(m.config.H) + " steps, requested " +
                                std::to_string(horizon));

  pvgnn::EvalReports r = pvgnn::evaluate_model(m, ds, plants);

  fs::create_directories(io.out);
  pvgnn::save_metrics_csv(r.model, (fs::path(io.out) / "metrics_model.csv").string());
  pvgnn::save_metrics_csv(r.persistence,
                          (fs::path(io.out) / "metrics_persistence.csv").string());
  pvgnn::save_metrics_csv(r.csi_persistence,
                          (fs::path(io.out) / "metrics_csi_persistence.csv").string());
  pvgnn::save_comparison_csv(r.model, r.persistence, r.csi_persistence,
                             (fs::path(io.out) / "comparison.csv").string());
  pvgnn::save_distance_csv(pvgnn::distance_error_analysis(r.model, m.graph),
                           (fs::path(io.out) / "distance_errors.csv").string());

  std::vector<int> snapshot_steps;
  for (int s : {1, 4, 12, 24})
    if (s <= r.model.horizon) snapshot_steps.push_back(s);
  nlohmann::json snapshots = nlohmann::json::array();
  std::printf("median NRMSE by lead time (%zu evaluation windows)\n", r.n_windows);
  std::printf("%6s %8s %10s %12s %16s\n", "step", "lead", "model", "persistence",
              "csi-persistence");
  for (int s : snapshot_steps) {
    size_t i = static_cast<size_t>(s - 1);
    snapshots.push_back({{"step", s},
                         {"horizon_minutes", r.model.horizon_minutes(s - 1)},
                         {"model_nrmse_median", r.model.nrmse_median[i]},
                         {"persistence_nrmse_median", r.persistence.nrmse_median[i]},
                         {"csi_persistence_nrmse_median", r.csi_persistence.nrmse_median[i]},
                         {"model_nmae_median", r.model.nmae_median[i]},
                         {"persistence_nmae_median", r.persistence.nmae_median[i]},
                         {"csi_persistence_nmae_median", r.csi_persistence.nmae_median[i]}});
    std::printf("%6d %6d m %10.4f %12.4f %16.4f\n", s, r.model.horizon_minutes(s - 1),
                r.model.nrmse_median[i], r.persistence.nrmse_median[i],
                r.csi_persistence.nrmse_median[i]);
  }
  nlohmann::json summary = {{"n_windows", r.n_windows},
                            {"snapshots", snapshots},
                            {"model", pvgnn::metrics_summary_json(r.model)},
                            {"persistence", pvgnn::metrics_summary_json(r.persistence)},
                            {"csi_persistence", pvgnn::metrics_summary_json(r.csi_persistence)}};
  std::string summary_path = (fs::path(io.out) / "summary.json").string();
  {
    std::ofstream out(summary_path);
    pvgnn::check_arg(out.good(), "cannot open for writing: " + summary_path);
    out << summary.dump(2) << "\n";
  }
  pvgnn::write_run_manifest(io.out, "eval", pvgnn::train_config_to_json(m.config),
                            {io.dataset, io.plants, checkpoint, blob},
                            {"metrics_model.csv", "metrics_persistence.csv",
                             "metrics_csi_persistence.csv", "comparison.csv",
                             "distance_errors.csv", "summary.json"});
  std::printf("wrote reports to %s\n", io.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-site photovoltaic power forecasting with graph neural networks"};
  app.require_subcommand(1);

  GenDataArgs ga;
  CLI::App* gen = app.add_subcommand("gen-data", "simulate a multi-site power dataset");
  gen->add_option("--nodes", ga.nodes, "number of plants")->capture_default_str();
  gen->add_option("--days", ga.days, "simulated days")->capture_default_str();
  gen->add_option("--seed", ga.seed, "random seed")->capture_default_str();
  gen->add_option("--wind-kmh", ga.wind_kmh, "eastward cloud drift")->capture_default_str();
  gen->add_option("--wind-north-kmh", ga.wind_north_kmh, "northward cloud drift")
      ->capture_default_str();
  gen->add_option("--clouds", ga.clouds, "number of cloud blobs")->capture_default_str();
  gen->add_option("--region-km", ga.region_km, "site region side length")
      ->capture_default_str();
  gen->add_option("--start", ga.start, "first timestamp, ISO 8601 UTC")->capture_default_str();
  gen->add_option("--out", ga.out, "output directory")->capture_default_str();

  IoArgs ta;
  std::string model_name = "gclstm";
  bool desk_scale = false;
  std::string config_file;
  int iters = 0, batch = 0, M = 0, H = 0, k = 0, order = 0, lat = 0, heads = 0, embed = 0,
      kernel = 0, trace_every = 0;
  double lr = 0.0, train_fraction = 0.0;
  uint64_t seed = 0;
  CLI::App* tr = app.add_subcommand("train", "train a forecasting model");
  tr->add_option("--dataset", ta.dataset, "power CSV")->required();
  tr->add_option("--plants", ta.plants, "plants JSON")->required();
  tr->add_option("--model", model_name, "gclstm or gctrafo")->capture_default_str();
  tr->add_flag("--desk-scale", desk_scale, "reduced dimensions for a single CPU core");
  tr->add_option("--config", config_file, "key=value file overriding defaults");
  tr->add_option("--out", ta.out, "output directory")->capture_default_str();
  CLI::Option* o_iters = tr->add_option("--iters", iters, "training iterations");
  CLI::Option* o_batch = tr->add_option("--batch", batch, "windows per batch");
  CLI::Option* o_lr = tr->add_option("--lr", lr, "Adam learning rate");
  CLI::Option* o_M = tr->add_option("--encoder-steps", M, "observed steps fed to the encoder");
  CLI::Option* o_H = tr->add_option("--horizon", H, "forecast steps");
  CLI::Option* o_k = tr->add_option("--k", k, "graph neighbors per node");
  CLI::Option* o_order = tr->add_option("--order", order, "graph filter order");
  CLI::Option* o_lat = tr->add_option("--lat", lat, "latent width");
  CLI::Option* o_heads = tr->add_option("--heads", heads, "attention heads");
  CLI::Option* o_embed = tr->add_option("--embed", embed, "temporal embedding width");
  CLI::Option* o_kernel = tr->add_option("--kernel", kernel, "temporal kernel taps");
  CLI::Option* o_seed = tr->add_option("--seed", seed, "random seed");
  CLI::Option* o_frac = tr->add_option("--train-fraction", train_fraction,
                                       "fraction of days used for training");
  CLI::Option* o_trace = tr->add_option("--trace-every", trace_every, "loss trace interval");

  IoArgs ea;
  std::string checkpoint;
  int eval_horizon = 0;
  CLI::App* ev = app.add_subcommand("eval", "score a checkpoint against the baselines");
  ev->add_option("--dataset", ea.dataset, "power CSV")->required();
  ev->add_option("--plants", ea.plants, "plants JSON")->required();
  ev->add_option("--checkpoint", checkpoint, "checkpoint manifest JSON")->required();
  CLI::Option* o_eh = ev->add_option("--horizon", eval_horizon, "expected forecast steps");
  ev->add_option("--out", ea.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(ga);
    if (tr->parsed()) {
      pvgnn::ModelKind kind = pvgnn::model_kind_from_name(model_name);
      std::vector<std::tuple<long, std::string, std::string>> entries;
      if (!config_file.empty()) {
        entries = read_config_file(config_file);
        // the model choice in the file shifts the defaults, so resolve it
        // before everything else unless --model was given explicitly
        for (auto& [row, key, value] : entries)
          if (key == "model" && tr->count("--model") == 0)
            kind = pvgnn::model_kind_from_name(value);
      }
      pvgnn::TrainConfig cfg = pvgnn::default_train_config(kind, desk_scale);
      for (auto& [row, key, value] : entries)
        if (key != "model") apply_config_entry(cfg, key, value, row);
      cfg.kind = kind;
      if (o_iters->count()) cfg.iterations = iters;
      if (o_batch->count()) cfg.batch_size = batch;
      if (o_lr->count()) cfg.lr = lr;
      if (o_M->count()) cfg.M = M;
      if (o_H->count()) cfg.H = H;
      if (o_k->count()) cfg.k_neighbors = k;
      if (o_order->count()) cfg.order = order;
      if (o_lat->count()) cfg.lat = lat;
      if (o_heads->count()) cfg.n_heads = heads;
      if (o_embed->count()) cfg.embed = embed;
      if (o_kernel->count()) cfg.kernel = kernel;
      if (o_seed->count()) cfg.seed = seed;
      if (o_frac->count()) cfg.train_fraction = train_fraction;
      if (o_trace->count()) cfg.trace_every = trace_every;
      return run_train(ta, cfg);
    }
    if (ev->parsed()) return run_eval(ea, checkpoint, o_eh->count() > 0, eval_horizon);
  } catch (const pvgnn::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
