#pragma once

// Synthetic multi-site PV production with advecting cloud fields, CSV
// ingestion, and assembly of normalized encoder/decoder feature windows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvgnn/clearsky.hpp"
#include "pvgnn/errors.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/timeutil.hpp"

namespace pvgnn {

struct PlantSpec {
  NodeLocation location;
  double capacity_kw = 0.0;
};

inline void validate_plants(const std::vector<PlantSpec>& plants) {
  check_arg(!plants.empty(), "plant list is empty");
  for (size_t i = 0; i < plants.size(); ++i) {
    validate_location(plants[i].location);
    check_arg(plants[i].capacity_kw > 0.0,
              "plant " + std::to_string(i) + " capacity must be positive");
  }
}

inline std::vector<NodeLocation> plant_locations(const std::vector<PlantSpec>& plants) {
  std::vector<NodeLocation> out;
  out.reserve(plants.size());
  for (const PlantSpec& p : plants) out.push_back(p.location);
  return out;
}

struct CloudBlob {
  double x_km = 0.0;  // local east coordinate relative to the plant centroid
  double y_km = 0.0;  // local north coordinate
  double radius_km = 1.0;
  double opacity = 0.5;  // in [0, 0.9]; never a full blackout
};

struct CloudField {
  std::vector<CloudBlob> blobs;
  double wind_east_kmh = 0.0;
  double wind_north_kmh = 0.0;
  uint64_t seed = 0;
};

inline void validate_cloud_field(const CloudField& field) {
  for (const CloudBlob& b : field.blobs) {
    check_arg(b.radius_km > 0.0, "cloud blob radius must be positive");
    check_arg(b.opacity >= 0.0 && b.opacity <= 0.9, "cloud blob opacity must lie in [0, 0.9]");
  }
}

struct Dataset {
  std::vector<int64_t> timestamps;  // uniform grid, UTC seconds
  int n_nodes = 0;
  int64_t step_seconds = 900;
  std::vector<double> power;        // T × N row-major, kW
  std::vector<double> per_node_max; // set by normalize(); empty before
  std::vector<PlantSpec> plants;    // attached by the simulator; may be empty

  size_t steps() const { return timestamps.size(); }
  double at(size_t t, int v) const { return power[t * n_nodes + v]; }
  double& at(size_t t, int v) { return power[t * n_nodes + v]; }
  bool normalized() const { return !per_node_max.empty(); }
};

// Local equirectangular km frame centred on the location centroid; good to
// well under a percent over the ~100 km regions simulated here.
struct LocalFrame {
  double lat0 = 0.0, lon0 = 0.0;
  double km_per_deg_lat = kEarthRadiusKm * std::numbers::pi / 180.0;
  double km_per_deg_lon = 0.0;

  explicit LocalFrame(const std::vector<NodeLocation>& locs) {
    check_arg(!locs.empty(), "empty location list");
    for (const NodeLocation& l : locs) {
      lat0 += l.latitude_deg;
      lon0 += l.longitude_deg;
    }
    lat0 /= static_cast<double>(locs.size());
    lon0 /= static_cast<double>(locs.size());
    km_per_deg_lon = km_per_deg_lat * std::cos(lat0 * std::numbers::pi / 180.0);
  }

  std::pair<double, double> to_km(const NodeLocation& l) const {
    return {(l.longitude_deg - lon0) * km_per_deg_lon,
            (l.latitude_deg - lat0) * km_per_deg_lat};
  }
};

// Product of per-blob attenuations at a point; each blob removes an
// opacity-scaled Gaussian bump of irradiance around its centre.
inline double cloud_transmittance(double x_km, double y_km, const CloudField& field,
                                  double hours_elapsed, double wrap_x0, double wrap_x1,
                                  double wrap_y0, double wrap_y1) {
  double trans = 1.0;
  double spanx = wrap_x1 - wrap_x0;
  double spany = wrap_y1 - wrap_y0;
  for (const CloudBlob& b : field.blobs) {
    double cx = b.x_km + field.wind_east_kmh * hours_elapsed;
    double cy = b.y_km + field.wind_north_kmh * hours_elapsed;
    cx -= spanx * std::floor((cx - wrap_x0) / spanx);
    cy -= spany * std::floor((cy - wrap_y0) / spany);
    double dx = x_km - cx;
    double dy = y_km - cy;
    double d2 = dx * dx + dy * dy;
    trans *= 1.0 - b.opacity * std::exp(-d2 / (2.0 * b.radius_km * b.radius_km));
  }
  return trans;
}

// power_vn(t) = capacity_n · transmittance_n(t) · ghi_n(t) / 1000. Blobs
// advect with the wind and wrap around a padded bounding box of the plants so
// cloud cover keeps arriving over long simulations.
inline Dataset simulate_power(const std::vector<PlantSpec>& plants, const CloudField& field,
                              int64_t start_utc, int days, int64_t step_seconds = 900,
                              double linke_turbidity = 3.0) {
  validate_plants(plants);
  validate_cloud_field(field);
  check_arg(plants.size() >= 2, "need at least two plants");
  check_arg(days >= 4, "need days >= 4 (the 72 h rolling-mean warm-up consumes 3 days)");
  check_arg(step_seconds > 0 && 86400 % step_seconds == 0,
            "step must evenly divide one day");

  int n = static_cast<int>(plants.size());
  LocalFrame frame(plant_locations(plants));
  std::vector<std::pair<double, double>> xy(n);
  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  double max_radius = 1.0;
  for (const CloudBlob& b : field.blobs) max_radius = std::max(max_radius, b.radius_km);
  for (int v = 0; v < n; ++v) {
    xy[v] = frame.to_km(plants[v].location);
    minx = std::min(minx, xy[v].first);
    maxx = std::max(maxx, xy[v].first);
    miny = std::min(miny, xy[v].second);
    maxy = std::max(maxy, xy[v].second);
  }
  double pad = 3.0 * max_radius + 20.0;
  minx -= pad;
  maxx += pad;
  miny -= pad;
  maxy += pad;

  size_t T = static_cast<size_t>(days) * static_cast<size_t>(86400 / step_seconds);
  Dataset ds;
  ds.n_nodes = n;
  ds.step_seconds = step_seconds;
  ds.plants = plants;
  ds.timestamps.resize(T);
  ds.power.resize(T * static_cast<size_t>(n));
  for (size_t t = 0; t < T; ++t) {
    int64_t ts = start_utc + static_cast<int64_t>(t) * step_seconds;
    ds.timestamps[t] = ts;
    double hours = static_cast<double>(ts - start_utc) / 3600.0;
    for (int v = 0; v < n; ++v) {
      double ghi = clearsky_at(ts, plants[v].location, linke_turbidity).ghi;
      double trans = ghi > 0.0 ? cloud_transmittance(xy[v].first, xy[v].second, field, hours,
                                                     minx, maxx, miny, maxy)
                               : 1.0;
      ds.at(t, v) = plants[v].capacity_kw * trans * ghi / 1000.0;
    }
  }
  return ds;
}

// Seeded helpers used by the data-generation CLI.
inline std::vector<PlantSpec> random_plants(int n, uint64_t seed, double region_km = 100.0,
                                            NodeLocation center = {46.8, 7.8, 0.0}) {
  check_arg(n >= 2, "need at least two plants");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> off(-region_km / 2.0, region_km / 2.0);
  std::uniform_real_distribution<double> alt(300.0, 1500.0);
  std::uniform_real_distribution<double> cap(5.0, 20.0);
  double km_lat = kEarthRadiusKm * std::numbers::pi / 180.0;
  double km_lon = km_lat * std::cos(center.latitude_deg * std::numbers::pi / 180.0);
  std::vector<PlantSpec> out(static_cast<size_t>(n));
  for (PlantSpec& p : out) {
    p.location.latitude_deg = center.latitude_deg + off(gen) / km_lat;
    p.location.longitude_deg = center.longitude_deg + off(gen) / km_lon;
    p.location.altitude_m = alt(gen);
    p.capacity_kw = cap(gen);
  }
  return out;
}

inline CloudField random_cloud_field(int n_blobs, uint64_t seed, double region_km = 100.0,
                                     double wind_east_kmh = 20.0, double wind_north_kmh = 5.0) {
  check_arg(n_blobs >= 0, "blob count must be non-negative");
  CloudField field;
  field.seed = seed;
  field.wind_east_kmh = wind_east_kmh;
  field.wind_north_kmh = wind_north_kmh;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pos(-region_km, region_km);
  std::uniform_real_distribution<double> radius(5.0, 25.0);
  std::uniform_real_distribution<double> opacity(0.3, 0.9);
  field.blobs.resize(static_cast<size_t>(n_blobs));
  for (CloudBlob& b : field.blobs) {
    b.x_km = pos(gen);
    b.y_km = pos(gen);
    b.radius_km = radius(gen);
    b.opacity = opacity(gen);
  }
  return field;
}

// ---------------------------------------------------------------------------
// Rolling mean, normalization, feature windows.
// ---------------------------------------------------------------------------

// Mean power per node over the half-open window [t-72h, t-24h).
inline std::vector<double> rolling_mean(const Dataset& ds, size_t t) {
  size_t n72 = static_cast<size_t>(72 * 3600 / ds.step_seconds);
  size_t n24 = static_cast<size_t>(24 * 3600 / ds.step_seconds);
  if (t < n72)
    throw WindowError("rolling mean needs 72 h of history (step " + std::to_string(t) + ")");
  check_arg(t <= ds.steps(), "rolling mean index beyond dataset");
  std::vector<double> out(static_cast<size_t>(ds.n_nodes), 0.0);
  size_t begin = t - n72, end = t - n24;
  for (size_t s = begin; s < end; ++s)
    for (int v = 0; v < ds.n_nodes; ++v) out[static_cast<size_t>(v)] += ds.at(s, v);
  double inv = 1.0 / static_cast<double>(end - begin);
  for (double& x : out) x *= inv;
  return out;
}

// Sets per_node_max from the training range [begin, end). Power stays in
// physical units; feature assembly divides by these maxima and evaluation
// multiplies them back.
inline void normalize(Dataset& ds, size_t train_begin, size_t train_end) {
  check_arg(train_begin < train_end && train_end <= ds.steps(),
            "invalid training range for normalization");
  ds.per_node_max.assign(static_cast<size_t>(ds.n_nodes), 0.0);
  for (size_t t = train_begin; t < train_end; ++t)
    for (int v = 0; v < ds.n_nodes; ++v)
      ds.per_node_max[static_cast<size_t>(v)] =
          std::max(ds.per_node_max[static_cast<size_t>(v)], ds.at(t, v));
  for (int v = 0; v < ds.n_nodes; ++v)
    if (ds.per_node_max[static_cast<size_t>(v)] <= 0.0)
      throw DegenerateNodeError(
          "node " + std::to_string(v) + " has zero maximum power over the training range", v);
}

// Clear-sky geometry cached for every (timestep, node) pair of a dataset:
// global and direct irradiance plus the solar zenith used for night masking.
struct SkyTable {
  int n_nodes = 0;
  std::vector<double> ghi;     // T × N, W/m²
  std::vector<double> dni;     // T × N, W/m²
  std::vector<double> zenith;  // T × N, degrees

  double ghi_at(size_t t, int v) const { return ghi[t * n_nodes + v]; }
  double dni_at(size_t t, int v) const { return dni[t * n_nodes + v]; }
  bool night(size_t t, int v) const { return zenith[t * n_nodes + v] >= 90.0; }
};

inline SkyTable build_sky_table(const Dataset& ds, const std::vector<NodeLocation>& locations,
                                double linke_turbidity = 3.0) {
  check_arg(static_cast<int>(locations.size()) == ds.n_nodes,
            "location count does not match dataset");
  SkyTable sky;
  sky.n_nodes = ds.n_nodes;
  size_t total = ds.steps() * static_cast<size_t>(ds.n_nodes);
  sky.ghi.resize(total);
  sky.dni.resize(total);
  sky.zenith.resize(total);
  for (size_t t = 0; t < ds.steps(); ++t)
    for (int v = 0; v < ds.n_nodes; ++v) {
      SolarPosition pos = solar_position(ds.timestamps[t], locations[static_cast<size_t>(v)]);
      ClearSkySample cs = clearsky_ineichen(pos, locations[static_cast<size_t>(v)],
                                            linke_turbidity);
      size_t idx = t * static_cast<size_t>(ds.n_nodes) + static_cast<size_t>(v);
      sky.ghi[idx] = cs.ghi;
      sky.dni[idx] = cs.dni;
      sky.zenith[idx] = pos.zenith_deg;
    }
  return sky;
}

// One training/evaluation sample. Encoder channels are (p, p̄, g), decoder
// channels (g, d, p̄); power channels are divided by the node's training
// maximum and irradiance by 1000 W/m² to keep all inputs near unit scale.
struct FeatureFrame {
  int M = 0, H = 0, n_nodes = 0;
  size_t first_decoder_step = 0;       // dataset index of decoder step 0
  std::vector<double> encoder_x;       // M × N × 3
  std::vector<double> decoder_y;       // H × N × 3
  std::vector<double> target;          // H × N, normalized power
};

class WindowSet {
 public:
  WindowSet(const Dataset& ds, const SkyTable& sky, int M, int H, size_t stride)
      : ds_(&ds), sky_(&sky), M_(M), H_(H), stride_(stride) {
    check_arg(M >= 1 && H >= 1, "window lengths must be >= 1");
    check_arg(stride >= 1, "stride must be >= 1");
    check_arg(ds.normalized(), "dataset must be normalized before windowing");
    warmup_ = static_cast<size_t>(72 * 3600 / ds.step_seconds);
    size_t need = warmup_ + static_cast<size_t>(M) + static_cast<size_t>(H);
    count_ = ds.steps() >= need ? (ds.steps() - need) / stride + 1 : 0;
    // Prefix sums over time for O(1) rolling means: prefix_[(t+1)*N+v] is the
    // sum of power at node v over steps [0, t].
    size_t n = static_cast<size_t>(ds.n_nodes);
    prefix_.assign((ds.steps() + 1) * n, 0.0);
    for (size_t t = 0; t < ds.steps(); ++t)
      for (size_t v = 0; v < n; ++v)
        prefix_[(t + 1) * n + v] = prefix_[t * n + v] + ds.power[t * n + v];
  }

  size_t size() const { return count_; }
  size_t warmup() const { return warmup_; }
  size_t start_of(size_t i) const { return warmup_ + i * stride_; }

  FeatureFrame frame(size_t i) const {
    check_arg(i < count_, "window index out of range");
    const Dataset& ds = *ds_;
    size_t n = static_cast<size_t>(ds.n_nodes);
    size_t t0 = start_of(i);
    FeatureFrame f;
    f.M = M_;
    f.H = H_;
    f.n_nodes = ds.n_nodes;
    f.first_decoder_step = t0 + static_cast<size_t>(M_);
    f.encoder_x.resize(static_cast<size_t>(M_) * n * 3);
    f.decoder_y.resize(static_cast<size_t>(H_) * n * 3);
    f.target.resize(static_cast<size_t>(H_) * n);
    for (int m = 0; m < M_; ++m) {
      size_t t = t0 + static_cast<size_t>(m);
      for (size_t v = 0; v < n; ++v) {
        double pmax = ds.per_node_max[v];
        double* row = f.encoder_x.data() + (static_cast<size_t>(m) * n + v) * 3;
        row[0] = ds.power[t * n + v] / pmax;
        row[1] = mean_at(t, v) / pmax;
        row[2] = sky_->ghi_at(t, static_cast<int>(v)) / 1000.0;
      }
    }
    for (int h = 0; h < H_; ++h) {
      size_t t = f.first_decoder_step + static_cast<size_t>(h);
      for (size_t v = 0; v < n; ++v) {
        double pmax = ds.per_node_max[v];
        double* row = f.decoder_y.data() + (static_cast<size_t>(h) * n + v) * 3;
        row[0] = sky_->ghi_at(t, static_cast<int>(v)) / 1000.0;
        row[1] = sky_->dni_at(t, static_cast<int>(v)) / 1000.0;
        row[2] = mean_at(t, v) / pmax;
        f.target[static_cast<size_t>(h) * n + v] = ds.power[t * n + v] / pmax;
      }
    }
    return f;
  }

 private:
  double mean_at(size_t t, size_t v) const {
    size_t n = static_cast<size_t>(ds_->n_nodes);
    size_t n72 = warmup_;
    size_t n24 = static_cast<size_t>(24 * 3600 / ds_->step_seconds);
    double s = prefix_[(t - n24) * n + v] - prefix_[(t - n72) * n + v];
    return s / static_cast<double>(n72 - n24);
  }

  const Dataset* ds_;
  const SkyTable* sky_;
  int M_, H_;
  size_t stride_;
  size_t warmup_ = 0;
  size_t count_ = 0;
  std::vector<double> prefix_;
};

// ---------------------------------------------------------------------------
// CSV and plant-list JSON serialization.
// ---------------------------------------------------------------------------

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << "timestamp_utc";
  for (int v = 0; v < ds.n_nodes; ++v) out << ",node_" << v;
  out << "\n";
  char buf[40];
  for (size_t t = 0; t < ds.steps(); ++t) {
    out << format_iso8601(ds.timestamps[t]);
    for (int v = 0; v < ds.n_nodes; ++v) {
      std::snprintf(buf, sizeof(buf), "%.10g", ds.at(t, v));
      out << ',' << buf;
    }
    out << "\n";
  }
}

// Loads the production CSV: uniform 15-minute grid, gaps of at most four
// missing steps are linearly interpolated (with a warning), anything longer
// is rejected naming the gap.
inline Dataset load_csv(const std::string& path, std::ostream& warnings = std::cerr) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV: " + path, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "timestamp_utc")
    throw ParseError("CSV header must start with 'timestamp_utc'", 1);
  if (header.size() < 2) throw ParseError("CSV needs at least one node column", 1);
  int n = static_cast<int>(header.size()) - 1;

  Dataset ds;
  ds.n_nodes = n;
  ds.step_seconds = 900;
  size_t row = 1;
  std::vector<double> values(static_cast<size_t>(n));
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw ParseError("missing timestamp", row);
    int64_t ts;
    try {
      ts = parse_iso8601(cell);
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()), row);
    }
    for (int v = 0; v < n; ++v) {
      if (!std::getline(ss, cell, ','))
        throw ParseError("expected " + std::to_string(n) + " node columns", row);
      try {
        size_t used = 0;
        values[static_cast<size_t>(v)] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("invalid power value '" + cell + "'", row);
      }
      double p = values[static_cast<size_t>(v)];
      if (!std::isfinite(p)) throw ParseError("non-finite power value", row);
      if (p < 0.0)
        throw ParseError("negative power " + std::to_string(p) + " at node " + std::to_string(v),
                         row);
    }
    if (std::getline(ss, cell, ',')) throw ParseError("too many columns", row);

    if (!ds.timestamps.empty()) {
      int64_t prev = ds.timestamps.back();
      int64_t delta = ts - prev;
      if (delta <= 0) throw ParseError("timestamps must be strictly increasing", row);
      if (delta % ds.step_seconds != 0)
        throw ParseError("timestamp off the 15-minute grid: " + format_iso8601(ts), row);
      int64_t missing = delta / ds.step_seconds - 1;
      if (missing > 4)
        throw ParseError("gap of " + std::to_string(missing) + " steps between " +
                             format_iso8601(prev) + " and " + format_iso8601(ts),
                         row);
      if (missing > 0) {
        warnings << "warning: interpolating " << missing << " missing step(s) before "
                 << format_iso8601(ts) << "\n";
        size_t base = ds.steps() - 1;
        for (int64_t g = 1; g <= missing; ++g) {
          double w = static_cast<double>(g) / static_cast<double>(missing + 1);
          ds.timestamps.push_back(prev + g * ds.step_seconds);
          for (int v = 0; v < n; ++v) {
            double a = ds.power[base * static_cast<size_t>(n) + static_cast<size_t>(v)];
            ds.power.push_back(a + w * (values[static_cast<size_t>(v)] - a));
          }
        }
      }
    }
    ds.timestamps.push_back(ts);
    for (int v = 0; v < n; ++v) ds.power.push_back(values[static_cast<size_t>(v)]);
  }
  if (ds.steps() < 2) throw ParseError("CSV needs at least two data rows", row);
  return ds;
}

inline nlohmann::json plants_to_json(const std::vector<PlantSpec>& plants) {
  validate_plants(plants);
  nlohmann::json doc = nlohmann::json::array();
  for (const PlantSpec& p : plants)
    doc.push_back({{"lat", p.location.latitude_deg},
                   {"lon", p.location.longitude_deg},
                   {"alt_m", p.location.altitude_m},
                   {"capacity_kw", p.capacity_kw}});
  return doc;
}

inline std::vector<PlantSpec> plants_from_json(const nlohmann::json& doc) {
  std::vector<PlantSpec> out;
  try {
    for (const auto& item : doc) {
      PlantSpec p;
      p.location.latitude_deg = item.at("lat").get<double>();
      p.location.longitude_deg = item.at("lon").get<double>();
      p.location.altitude_m = item.value("alt_m", 0.0);
      p.capacity_kw = item.at("capacity_kw").get<double>();
      out.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed plants JSON: ") + e.what());
  }
  validate_plants(out);
  return out;
}

inline void save_plants_json(const std::vector<PlantSpec>& plants, const std::string& path) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << plants_to_json(plants).dump(2) << "\n";
}

inline std::vector<PlantSpec> load_plants_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open plants JSON: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed plants JSON: ") + e.what());
  }
  return plants_from_json(doc);
}

}  // namespace pvgnn
