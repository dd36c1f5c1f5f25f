#pragma once

// Model checkpoints: a JSON manifest (training configuration plus the name,
// shape, and blob offset of every parameter) next to a flat binary blob of
// raw float64 values in store order. Loading rebuilds the graph and model
// skeleton from the manifest configuration and the plant list, then overlays
// the saved values, so a checkpoint plus the plants file fully determines the
// network.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvgnn/errors.hpp"
#include "pvgnn/train.hpp"

namespace pvgnn {

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"model", model_kind_name(c.kind)},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"encoder_steps", c.M},
          {"horizon_steps", c.H},
          {"k_neighbors", c.k_neighbors},
          {"order", c.order},
          {"lat", c.lat},
          {"n_heads", c.n_heads},
          {"embed", c.embed},
          {"kernel", c.kernel},
          {"scale_attention", c.scale_attention},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"trace_every", c.trace_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.kind = model_kind_from_name(j.at("model").get<std::string>());
    c.iterations = j.at("iterations").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.M = j.at("encoder_steps").get<int>();
    c.H = j.at("horizon_steps").get<int>();
    c.k_neighbors = j.at("k_neighbors").get<int>();
    c.order = j.at("order").get<int>();
    c.lat = j.at("lat").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.embed = j.at("embed").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.scale_attention = j.at("scale_attention").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.trace_every = j.at("trace_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad training configuration: ") + e.what());
  }
  validate_train_config(c);
  return c;
}

inline void save_checkpoint(const TrainedModel& m, const std::string& manifest_path,
                            const std::string& blob_path) {
  nlohmann::json params = nlohmann::json::array();
  std::ofstream blob(blob_path, std::ios::binary);
  check_arg(blob.good(), "cannot open for writing: " + blob_path);
  int64_t offset = 0;
  for (size_t i = 0; i < m.store.size(); ++i) {
    const Parameter& p = m.store[i];
    std::vector<int> dims(p.shape.d.begin(), p.shape.d.begin() + p.shape.rank);
    params.push_back({{"name", p.name}, {"shape", dims}, {"offset", offset}});
    blob.write(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    offset += p.numel();
  }
  check_arg(blob.good(), "failed writing parameter blob: " + blob_path);
  blob.close();

  nlohmann::json manifest = {{"format", "pv-forecast-checkpoint"},
                             {"version", 1},
                             {"config", train_config_to_json(m.config)},
                             {"n_nodes", m.graph.n_nodes},
                             {"laplacian_nnz", m.lap.pattern.nnz()},
                             {"total_values", offset},
                             {"params", params}};
  std::ofstream out(manifest_path);
  check_arg(out.good(), "cannot open for writing: " + manifest_path);
  out << manifest.dump(2) << "\n";
}

inline TrainedModel load_checkpoint(const std::string& manifest_path,
                                    const std::string& blob_path,
                                    const std::vector<PlantSpec>& plants) {
  std::ifstream in(manifest_path);
  if (!in.good()) throw ParseError("cannot open checkpoint manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "pv-forecast-checkpoint")
    throw ParseError("not a checkpoint manifest: " + manifest_path);

  TrainConfig config = train_config_from_json(manifest.at("config"));
  TrainedModel m = make_model(config, plants);
  int n_nodes = manifest.at("n_nodes").get<int>();
  if (n_nodes != m.graph.n_nodes)
    throw ParseError("checkpoint was trained on " + std::to_string(n_nodes) +
                     " nodes but the plant list has " + std::to_string(m.graph.n_nodes));
  if (manifest.at("laplacian_nnz").get<int>() != m.lap.pattern.nnz())
    throw ParseError("checkpoint graph structure does not match the plant list");

  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob.good()) throw ParseError("cannot open checkpoint blob: " + blob_path);
  blob.seekg(0, std::ios::end);
  int64_t bytes = static_cast<int64_t>(blob.tellg());
  int64_t expect = manifest.at("total_values").get<int64_t>();
  if (bytes != expect * static_cast<int64_t>(sizeof(double)))
    throw ParseError("checkpoint blob has " + std::to_string(bytes) + " bytes, expected " +
                     std::to_string(expect * static_cast<int64_t>(sizeof(double))));

  const nlohmann::json& params = manifest.at("params");
  if (params.size() != m.store.size())
    throw ParseError("checkpoint holds " + std::to_string(params.size()) +
                     " parameters, model has " + std::to_string(m.store.size()));
  for (const nlohmann::json& entry : params) {
    std::string name = entry.at("name").get<std::string>();
    Parameter* p = m.store.find(name);
    if (!p) throw ParseError("checkpoint parameter not in model: " + name);
    std::vector<int> dims = entry.at("shape").get<std::vector<int>>();
    if (dims.empty() || dims.size() > 4)
      throw ParseError("checkpoint parameter " + name + " has unsupported rank");
    Shape shape;
    for (int d : dims) shape.d[shape.rank++] = d;
    if (shape != p->shape)
      throw ParseError("checkpoint parameter " + name + " has shape " + shape.str() +
                       ", model expects " + p->shape.str());
    int64_t offset = entry.at("offset").get<int64_t>();
    if (offset < 0 || offset + p->numel() > expect)
      throw ParseError("checkpoint parameter " + name + " lies outside the blob");
    blob.seekg(offset * static_cast<int64_t>(sizeof(double)));
    blob.read(reinterpret_cast<char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!blob.good()) throw ParseError("failed reading checkpoint values for " + name);
  }
  return m;
}

}  // namespace pvgnn
