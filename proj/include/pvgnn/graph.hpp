#pragma once

// PV-plant graph construction: great-circle kNN adjacency, combinatorial
// Laplacian, spectral scaling for Chebyshev filters, and JSON serialization.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvgnn/errors.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

struct NodeLocation {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;
};

inline void validate_location(const NodeLocation& loc) {
  check_arg(loc.latitude_deg >= -90.0 && loc.latitude_deg <= 90.0,
            "latitude out of [-90, 90]: " + std::to_string(loc.latitude_deg));
  check_arg(loc.longitude_deg >= -180.0 && loc.longitude_deg <= 180.0,
            "longitude out of [-180, 180]: " + std::to_string(loc.longitude_deg));
  check_arg(loc.altitude_m >= -500.0,
            "altitude below -500 m: " + std::to_string(loc.altitude_m));
}

constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(const NodeLocation& a, const NodeLocation& b) {
  constexpr double rad = std::numbers::pi / 180.0;
  double phi1 = a.latitude_deg * rad;
  double phi2 = b.latitude_deg * rad;
  double dphi = (b.latitude_deg - a.latitude_deg) * rad;
  double dlam = (b.longitude_deg - a.longitude_deg) * rad;
  double s1 = std::sin(dphi / 2.0);
  double s2 = std::sin(dlam / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Undirected weighted graph over plant locations; adjacency kept dense (the
// node counts here are at most a few hundred).
struct Graph {
  int n_nodes = 0;
  std::vector<NodeLocation> locations;
  std::vector<double> adjacency;  // row-major n×n, symmetric, zero diagonal

  double at(int i, int j) const { return adjacency[static_cast<size_t>(i) * n_nodes + j]; }
  double& at(int i, int j) { return adjacency[static_cast<size_t>(i) * n_nodes + j]; }
};

inline void validate_graph(const Graph& g) {
  check_arg(g.n_nodes >= 1, "graph must have at least one node");
  check_arg(static_cast<int>(g.locations.size()) == g.n_nodes, "locations size mismatch");
  check_arg(g.adjacency.size() == static_cast<size_t>(g.n_nodes) * g.n_nodes,
            "adjacency size mismatch");
  for (const NodeLocation& loc : g.locations) validate_location(loc);
  for (int i = 0; i < g.n_nodes; ++i) {
    check_arg(g.at(i, i) == 0.0, "adjacency diagonal must be zero");
    for (int j = 0; j < g.n_nodes; ++j) {
      check_arg(std::isfinite(g.at(i, j)) && g.at(i, j) >= 0.0,
                "adjacency entries must be finite and non-negative");
      check_arg(g.at(i, j) == g.at(j, i), "adjacency must be symmetric");
    }
  }
}

// A_ij = 1 when j is among the k nearest neighbours of i or i among the k
// nearest of j (union symmetrization). Great-circle distance, ties broken by
// node index, altitude ignored.
inline Graph build_knn_graph(const std::vector<NodeLocation>& locations, int k) {
  int n = static_cast<int>(locations.size());
  check_arg(n >= 2, "need at least two locations");
  check_arg(k >= 1 && k < n, "k must satisfy 1 <= k < n_nodes, got k=" + std::to_string(k) +
                                 ", n=" + std::to_string(n));
  for (const NodeLocation& loc : locations) validate_location(loc);
  Graph g;
  g.n_nodes = n;
  g.locations = locations;
  g.adjacency.assign(static_cast<size_t>(n) * n, 0.0);
  std::vector<std::pair<double, int>> order(n - 1);
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.emplace_back(haversine_km(locations[i], locations[j]), j);
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    for (int e = 0; e < k; ++e) {
      int j = order[e].second;
      g.at(i, j) = 1.0;
      g.at(j, i) = 1.0;
    }
  }
  return g;
}

// L = D − A with D the diagonal degree matrix; dense row-major.
inline std::vector<double> laplacian(const Graph& g) {
  int n = g.n_nodes;
  std::vector<double> L(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) {
      deg += g.at(i, j);
      L[static_cast<size_t>(i) * n + j] = -g.at(i, j);
    }
    L[static_cast<size_t>(i) * n + i] = deg;
  }
  return L;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration from a
// fixed seeded start vector (the all-ones vector lies in the null space of a
// Laplacian, so a deterministic pseudo-random start is used instead).
inline double estimate_lambda_max(const std::vector<double>& L, int n, double tol = 1e-9,
                                  int max_iter = 500) {
  std::mt19937_64 gen(0x5eedu);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> x(n), y(n);
  double norm = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = dist(gen);
    norm += x[i] * x[i];
  }
  norm = std::sqrt(norm);
  for (int i = 0; i < n; ++i) x[i] /= norm;
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      const double* row = L.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) s += row[j] * x[j];
      y[i] = s;
    }
    double rayleigh = 0.0, ynorm = 0.0;
    for (int i = 0; i < n; ++i) {
      rayleigh += x[i] * y[i];
      ynorm += y[i] * y[i];
    }
    ynorm = std::sqrt(ynorm);
    if (ynorm < 1e-300) return 0.0;  // start vector in the null space of L
    for (int i = 0; i < n; ++i) x[i] = y[i] / ynorm;
    if (it > 0 && std::fabs(rayleigh - lambda) <= tol * std::max(std::fabs(rayleigh), 1e-30)) {
      return rayleigh;
    }
    lambda = rayleigh;
  }
  return lambda;
}

// Scaled Laplacian in fixed-structure CSR form. The pattern is the non-zero
// structure of L plus the full diagonal; it never changes once built even if
// the values are later trained to zero.
struct ScaledLaplacian {
  SparsePattern pattern;
  std::vector<double> values;
  double lambda_max = 0.0;

  double dense_entry(int i, int j) const {
    for (int e = pattern.row_ptr[i]; e < pattern.row_ptr[i + 1]; ++e)
      if (pattern.col[e] == j) return values[e];
    return 0.0;
  }
};

inline ScaledLaplacian scale_laplacian(const std::vector<double>& L, int n, double tol = 1e-9) {
  check_arg(n >= 1 && L.size() == static_cast<size_t>(n) * n, "laplacian size mismatch");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double a = L[static_cast<size_t>(i) * n + j];
      double b = L[static_cast<size_t>(j) * n + i];
      check_arg(std::fabs(a - b) <= 1e-9 * std::max({std::fabs(a), std::fabs(b), 1.0}),
                "scale_laplacian requires a symmetric matrix");
    }
  double lambda = estimate_lambda_max(L, n, tol);
  ScaledLaplacian out;
  out.pattern.n = n;
  out.pattern.row_ptr.assign(n + 1, 0);
  bool degenerate = lambda < 1e-12;
  out.lambda_max = degenerate ? 0.0 : lambda;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && L[static_cast<size_t>(i) * n + j] == 0.0) continue;
      out.pattern.col.push_back(j);
      double lt = degenerate ? 0.0 : 2.0 * L[static_cast<size_t>(i) * n + j] / lambda;
      if (i == j) lt -= 1.0;
      out.values.push_back(lt);
    }
    out.pattern.row_ptr[i + 1] = static_cast<int>(out.pattern.col.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization: {n_nodes, locations[], edges[{i, j, w}]}.
// ---------------------------------------------------------------------------

inline nlohmann::json graph_to_json(const Graph& g) {
  validate_graph(g);
  nlohmann::json doc;
  doc["n_nodes"] = g.n_nodes;
  doc["locations"] = nlohmann::json::array();
  for (const NodeLocation& loc : g.locations)
    doc["locations"].push_back(
        {{"lat", loc.latitude_deg}, {"lon", loc.longitude_deg}, {"alt_m", loc.altitude_m}});
  doc["edges"] = nlohmann::json::array();
  for (int i = 0; i < g.n_nodes; ++i)
    for (int j = i + 1; j < g.n_nodes; ++j)
      if (g.at(i, j) != 0.0) doc["edges"].push_back({{"i", i}, {"j", j}, {"w", g.at(i, j)}});
  return doc;
}

inline Graph graph_from_json(const nlohmann::json& doc) {
  Graph g;
  try {
    g.n_nodes = doc.at("n_nodes").get<int>();
    if (g.n_nodes < 1) throw ParseError("n_nodes must be positive");
    for (const auto& item : doc.at("locations")) {
      NodeLocation loc;
      loc.latitude_deg = item.at("lat").get<double>();
      loc.longitude_deg = item.at("lon").get<double>();
      loc.altitude_m = item.value("alt_m", 0.0);
      g.locations.push_back(loc);
    }
    if (static_cast<int>(g.locations.size()) != g.n_nodes)
      throw ParseError("locations count does not match n_nodes");
    g.adjacency.assign(static_cast<size_t>(g.n_nodes) * g.n_nodes, 0.0);
    for (const auto& item : doc.at("edges")) {
      int i = item.at("i").get<int>();
      int j = item.at("j").get<int>();
      double w = item.at("w").get<double>();
      if (i < 0 || i >= g.n_nodes || j < 0 || j >= g.n_nodes)
        throw ParseError("edge index out of range: (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
      if (i == j) throw ParseError("self-loop edge not allowed: node " + std::to_string(i));
      if (!std::isfinite(w) || w < 0.0)
        throw ParseError("edge weight must be finite and non-negative");
      if (g.at(i, j) != 0.0) throw ParseError("duplicate edge (" + std::to_string(i) + ", " +
                                              std::to_string(j) + ")");
      g.at(i, j) = w;
      g.at(j, i) = w;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed graph JSON: ") + e.what());
  }
  validate_graph(g);
  return g;
}

inline void save_graph_json(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << graph_to_json(g).dump(2) << "\n";
}

inline Graph load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open graph JSON: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed graph JSON: ") + e.what());
  }
  return graph_from_json(doc);
}

}  // namespace pvgnn
