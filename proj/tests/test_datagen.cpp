#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pvgnn/clearsky.hpp"
#include "pvgnn/datagen.hpp"
#include "testutil.hpp"

using namespace pvgnn;

namespace {

constexpr double kLat0 = 46.8;
constexpr double kLon0 = 7.8;

// Two plants at the same latitude separated by east_km in the local frame.
std::vector<PlantSpec> east_west_pair(double east_km, double capacity0 = 10.0,
                                      double capacity1 = 14.0) {
  double km_per_deg_lat = kEarthRadiusKm * std::numbers::pi / 180.0;
  double km_per_deg_lon = km_per_deg_lat * std::cos(kLat0 * std::numbers::pi / 180.0);
  std::vector<PlantSpec> plants(2);
  plants[0] = {{kLat0, kLon0, 500.0}, capacity0};
  plants[1] = {{kLat0, kLon0 + east_km / km_per_deg_lon, 500.0}, capacity1};
  return plants;
}

Dataset random_power_dataset(int n_nodes, size_t steps, uint64_t seed,
                             int64_t start = utc_timestamp(2017, 6, 1)) {
  Dataset ds;
  ds.n_nodes = n_nodes;
  ds.step_seconds = 900;
  ds.timestamps.resize(steps);
  for (size_t t = 0; t < steps; ++t) ds.timestamps[t] = start + static_cast<int64_t>(t) * 900;
  ds.power.resize(steps * static_cast<size_t>(n_nodes));
  auto gen = testutil::rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 12.0);
  for (double& p : ds.power) p = dist(gen);
  return ds;
}

std::string write_temp_csv(const std::string& body) {
  std::string path = "tmp_datagen_test.csv";
  std::ofstream out(path);
  out << body;
  out.close();
  return path;
}

}  // namespace

TEST_CASE("cloud transmittance matches the per-blob Gaussian product") {
  CloudField field;
  field.blobs.push_back({3.0, -4.0, 6.0, 0.5});
  field.blobs.push_back({-10.0, 2.0, 3.0, 0.8});
  // Wrap box far away so positions are unaffected.
  double lo = -1e4, hi = 1e4;
  auto gen = testutil::rng(11);
  std::uniform_real_distribution<double> pos(-30.0, 30.0);
  for (int trial = 0; trial < 50; ++trial) {
    double x = pos(gen), y = pos(gen);
    double expected = 1.0;
    for (const CloudBlob& b : field.blobs) {
      double d2 = (x - b.x_km) * (x - b.x_km) + (y - b.y_km) * (y - b.y_km);
      expected *= 1.0 - b.opacity * std::exp(-d2 / (2.0 * b.radius_km * b.radius_km));
    }
    REQUIRE(cloud_transmittance(x, y, field, 0.0, lo, hi, lo, hi) ==
            Catch::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("simulation with no clouds equals capacity-scaled clear-sky power exactly") {
  auto plants = east_west_pair(25.0);
  CloudField clear_field;
  Dataset ds = simulate_power(plants, clear_field, utc_timestamp(2017, 6, 21), 4);
  REQUIRE(ds.steps() == 4 * 96);
  REQUIRE(ds.n_nodes == 2);
  for (size_t t = 0; t < ds.steps(); t += 7) {
    for (int v = 0; v < 2; ++v) {
      double ghi = clearsky_at(ds.timestamps[t], plants[static_cast<size_t>(v)].location).ghi;
      REQUIRE(ds.at(t, v) == plants[static_cast<size_t>(v)].capacity_kw * ghi / 1000.0);
    }
  }
}

TEST_CASE("a parked opaque blob over one plant leaves a distant plant untouched") {
  auto plants = east_west_pair(30.0);
  LocalFrame frame(plant_locations(plants));
  auto [x0, y0] = frame.to_km(plants[0].location);

  CloudField field;
  field.blobs.push_back({x0, y0, 2.0, 0.9});
  Dataset cloudy = simulate_power(plants, field, utc_timestamp(2017, 6, 21), 4);
  CloudField none;
  Dataset clear = simulate_power(plants, none, utc_timestamp(2017, 6, 21), 4);

  bool attenuated = false;
  for (size_t t = 0; t < cloudy.steps(); ++t) {
    // 30 km at radius 2 km: the Gaussian underflows, so node 1 is bit-identical.
    REQUIRE(cloudy.at(t, 1) == clear.at(t, 1));
    REQUIRE(cloudy.at(t, 0) <= clear.at(t, 0));
    if (clear.at(t, 0) > 0.0) {
      REQUIRE(cloudy.at(t, 0) == Catch::Approx(0.1 * clear.at(t, 0)).epsilon(1e-12));
      attenuated = true;
    }
  }
  REQUIRE(attenuated);
}

TEST_CASE("a blob advected by the wind reaches the downwind plant one hour later") {
  auto plants = east_west_pair(20.0);
  LocalFrame frame(plant_locations(plants));
  auto [xa, ya] = frame.to_km(plants[0].location);

  // Start 06:00 UTC; the blob crosses plant 0 at +1.5 h and plant 1 at +2.5 h
  // (20 km/h east wind over 20 km spacing), both in full daylight.
  CloudField field;
  field.wind_east_kmh = 20.0;
  field.blobs.push_back({xa - 30.0, ya, 6.0, 0.9});
  int64_t start = utc_timestamp(2017, 6, 21, 6);
  Dataset ds = simulate_power(plants, field, start, 4);

  int argmin[2] = {-1, -1};
  for (int v = 0; v < 2; ++v) {
    double best = 2.0;
    for (int s = 2; s <= 14; ++s) {
      double ghi = clearsky_at(ds.timestamps[static_cast<size_t>(s)],
                               plants[static_cast<size_t>(v)].location)
                       .ghi;
      REQUIRE(ghi > 100.0);
      double kappa = ds.at(static_cast<size_t>(s), v) /
                     (plants[static_cast<size_t>(v)].capacity_kw * ghi / 1000.0);
      if (kappa < best) {
        best = kappa;
        argmin[v] = s;
      }
    }
    REQUIRE(best < 0.2);  // the blob really passed overhead
  }
  int lag = argmin[1] - argmin[0];
  REQUIRE(lag >= 3);
  REQUIRE(lag <= 5);
}

TEST_CASE("clear-sky-index cross-correlation between wind-aligned plants peaks at distance/speed") {
  auto plants = east_west_pair(20.0);
  CloudField field = random_cloud_field(12, 7, 100.0, 20.0, 0.0);
  Dataset ds = simulate_power(plants, field, utc_timestamp(2017, 6, 1), 8);

  // Attenuation series 1 - kappa on samples where both nodes see real daylight.
  size_t T = ds.steps();
  std::vector<double> a0(T, std::nan("")), a1(T, std::nan(""));
  for (size_t t = 0; t < T; ++t) {
    double g0 = clearsky_at(ds.timestamps[t], plants[0].location).ghi;
    double g1 = clearsky_at(ds.timestamps[t], plants[1].location).ghi;
    if (g0 > 150.0 && g1 > 150.0) {
      a0[t] = 1.0 - ds.at(t, 0) / (plants[0].capacity_kw * g0 / 1000.0);
      a1[t] = 1.0 - ds.at(t, 1) / (plants[1].capacity_kw * g1 / 1000.0);
    }
  }

  auto pearson_at_lag = [&](int lag) {
    std::vector<double> u, w;
    for (size_t t = 0; t + static_cast<size_t>(lag) < T; ++t) {
      double x = a0[t], y = a1[t + static_cast<size_t>(lag)];
      if (!std::isnan(x) && !std::isnan(y)) {
        u.push_back(x);
        w.push_back(y);
      }
    }
    REQUIRE(u.size() > 100);
    double mu = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
    double mw = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double num = 0.0, du = 0.0, dw = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
      num += (u[i] - mu) * (w[i] - mw);
      du += (u[i] - mu) * (u[i] - mu);
      dw += (w[i] - mw) * (w[i] - mw);
    }
    REQUIRE(du > 1e-6);  // the field actually shaded the plants
    return num / std::sqrt(du * dw);
  };

  int best_lag = -1;
  double best = -2.0;
  for (int lag = 0; lag <= 12; ++lag) {
    double r = pearson_at_lag(lag);
    if (r > best) {
      best = r;
      best_lag = lag;
    }
  }
  // 20 km at 20 km/h = 1 h = 4 steps.
  REQUIRE(best > 0.5);
  REQUIRE(best_lag >= 3);
  REQUIRE(best_lag <= 5);
}

TEST_CASE("generated power is exactly zero whenever the sun is below the horizon") {
  auto plants = east_west_pair(15.0);
  CloudField field = random_cloud_field(6, 3, 80.0);
  Dataset ds = simulate_power(plants, field, utc_timestamp(2017, 3, 10), 4);
  size_t night_samples = 0;
  for (size_t t = 0; t < ds.steps(); ++t)
    for (int v = 0; v < ds.n_nodes; ++v)
      if (solar_position(ds.timestamps[t], plants[static_cast<size_t>(v)].location).zenith_deg >=
          90.0) {
        REQUIRE(ds.at(t, v) == 0.0);
        ++night_samples;
      }
  REQUIRE(night_samples > 200);
}

TEST_CASE("simulation is deterministic and seeded generators reproduce") {
  auto plants_a = random_plants(5, 42);
  auto plants_b = random_plants(5, 42);
  auto plants_c = random_plants(5, 43);
  REQUIRE(plants_a.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    REQUIRE(plants_a[i].location.latitude_deg == plants_b[i].location.latitude_deg);
    REQUIRE(plants_a[i].location.longitude_deg == plants_b[i].location.longitude_deg);
    REQUIRE(plants_a[i].capacity_kw == plants_b[i].capacity_kw);
    validate_location(plants_a[i].location);
    REQUIRE(plants_a[i].capacity_kw >= 5.0);
    REQUIRE(plants_a[i].capacity_kw <= 20.0);
  }
  bool any_diff = false;
  for (size_t i = 0; i < 5; ++i)
    any_diff |= plants_a[i].location.latitude_deg != plants_c[i].location.latitude_deg;
  REQUIRE(any_diff);

  CloudField f1 = random_cloud_field(8, 9), f2 = random_cloud_field(8, 9);
  REQUIRE(f1.blobs.size() == 8);
  for (size_t i = 0; i < 8; ++i) {
    REQUIRE(f1.blobs[i].x_km == f2.blobs[i].x_km);
    REQUIRE(f1.blobs[i].opacity == f2.blobs[i].opacity);
    REQUIRE(f1.blobs[i].opacity <= 0.9);
    REQUIRE(f1.blobs[i].radius_km > 0.0);
  }

  Dataset d1 = simulate_power(plants_a, f1, utc_timestamp(2018, 5, 1), 4);
  Dataset d2 = simulate_power(plants_a, f1, utc_timestamp(2018, 5, 1), 4);
  REQUIRE(d1.power == d2.power);
  REQUIRE(d1.timestamps == d2.timestamps);
}

TEST_CASE("simulation rejects invalid configurations") {
  auto plants = east_west_pair(10.0);
  CloudField ok;
  REQUIRE_THROWS_AS(simulate_power({plants[0]}, ok, utc_timestamp(2017, 6, 1), 4),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(simulate_power(plants, ok, utc_timestamp(2017, 6, 1), 3),
                    std::invalid_argument);
  CloudField bad_opacity;
  bad_opacity.blobs.push_back({0.0, 0.0, 5.0, 0.95});
  REQUIRE_THROWS_AS(simulate_power(plants, bad_opacity, utc_timestamp(2017, 6, 1), 4),
                    std::invalid_argument);
  CloudField bad_radius;
  bad_radius.blobs.push_back({0.0, 0.0, 0.0, 0.5});
  REQUIRE_THROWS_AS(simulate_power(plants, bad_radius, utc_timestamp(2017, 6, 1), 4),
                    std::invalid_argument);
  std::vector<PlantSpec> bad_capacity = plants;
  bad_capacity[1].capacity_kw = 0.0;
  REQUIRE_THROWS_AS(simulate_power(bad_capacity, ok, utc_timestamp(2017, 6, 1), 4),
                    std::invalid_argument);
}

TEST_CASE("rolling mean of a constant series is that constant") {
  Dataset ds = random_power_dataset(3, 500, 1);
  for (double& p : ds.power) p = 7.25;
  auto mean = rolling_mean(ds, 300);
  for (int v = 0; v < 3; ++v) REQUIRE(mean[static_cast<size_t>(v)] == Catch::Approx(7.25));
}

TEST_CASE("rolling mean of a linear-in-time series is the window midpoint value") {
  Dataset ds = random_power_dataset(2, 500, 2);
  for (size_t t = 0; t < ds.steps(); ++t)
    for (int v = 0; v < 2; ++v) ds.at(t, v) = 3.0 + 0.01 * static_cast<double>(t) * (v + 1);
  // Samples [t-288, t-96): mean index = t - 192.5.
  for (size_t t : {288u, 300u, 499u}) {
    auto mean = rolling_mean(ds, t);
    for (int v = 0; v < 2; ++v) {
      double expected = 3.0 + 0.01 * (static_cast<double>(t) - 192.5) * (v + 1);
      REQUIRE(mean[static_cast<size_t>(v)] == Catch::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("rolling mean matches a brute-force mean over the 72h-to-24h slice") {
  Dataset ds = random_power_dataset(4, 5 * 96, 3);
  for (size_t t : {288u, 289u, 350u, 479u}) {
    auto mean = rolling_mean(ds, t);
    for (int v = 0; v < 4; ++v) {
      double sum = 0.0;
      size_t count = 0;
      for (size_t s = t - 288; s < t - 96; ++s) {
        sum += ds.at(s, v);
        ++count;
      }
      REQUIRE(count == 192);
      REQUIRE(mean[static_cast<size_t>(v)] == Catch::Approx(sum / 192.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("rolling mean requires 72 hours of history") {
  Dataset ds = random_power_dataset(2, 400, 4);
  REQUIRE_THROWS_AS(rolling_mean(ds, 287), WindowError);
  REQUIRE_NOTHROW(rolling_mean(ds, 288));
}

TEST_CASE("rolling mean is translation-consistent under whole-step shifts") {
  Dataset ds = random_power_dataset(2, 420, 5);
  size_t shift = 17;
  Dataset shifted = random_power_dataset(2, 420 + shift, 6);
  for (size_t t = 0; t < ds.steps(); ++t)
    for (int v = 0; v < 2; ++v) shifted.at(t + shift, v) = ds.at(t, v);
  for (size_t t : {288u, 310u, 419u}) {
    auto a = rolling_mean(ds, t);
    auto b = rolling_mean(shifted, t + shift);
    for (int v = 0; v < 2; ++v)
      REQUIRE(a[static_cast<size_t>(v)] == b[static_cast<size_t>(v)]);
  }
}

TEST_CASE("normalize records per-node training maxima and rejects dead nodes") {
  Dataset ds = random_power_dataset(3, 400, 7);
  ds.at(50, 1) = 99.5;   // inside training range
  ds.at(350, 2) = 77.0;  // outside training range; must not affect the max
  normalize(ds, 0, 300);
  REQUIRE(ds.per_node_max[1] == 99.5);
  double m0 = 0.0, m2 = 0.0;
  for (size_t t = 0; t < 300; ++t) {
    m0 = std::max(m0, ds.at(t, 0));
    m2 = std::max(m2, ds.at(t, 2));
  }
  REQUIRE(ds.per_node_max[0] == m0);
  REQUIRE(ds.per_node_max[2] == m2);

  Dataset dead = random_power_dataset(3, 400, 8);
  for (size_t t = 0; t < 400; ++t) dead.at(t, 1) = 0.0;
  try {
    normalize(dead, 0, 400);
    FAIL("expected DegenerateNodeError");
  } catch (const DegenerateNodeError& e) {
    REQUIRE(e.node() == 1);
    REQUIRE(std::string(e.what()).find("node 1") != std::string::npos);
  }
}

TEST_CASE("window counts match exhaustive enumeration") {
  for (size_t T : {380u, 407u, 480u}) {
    Dataset ds = random_power_dataset(2, T, 100 + T);
    normalize(ds, 0, T);
    SkyTable sky = build_sky_table(ds, {{kLat0, kLon0, 500.0}, {kLat0, kLon0 + 0.2, 600.0}});
    for (int M : {4, 16}) {
      for (int H : {6, 24}) {
        for (size_t stride : {size_t{1}, size_t{3}, size_t{7}, size_t{96}, T}) {
          WindowSet ws(ds, sky, M, H, stride);
          size_t expected = 0;
          for (size_t i = 0;; ++i) {
            size_t t0 = 288 + i * stride;
            if (t0 + static_cast<size_t>(M) + static_cast<size_t>(H) > T) break;
            ++expected;
          }
          REQUIRE(ws.size() == expected);
        }
      }
    }
    // Stride spanning the whole series yields exactly one window.
    WindowSet one(ds, sky, 16, 24, T);
    REQUIRE(one.size() == 1);
  }
}

TEST_CASE("feature frames carry the documented channels") {
  auto plants = east_west_pair(18.0);
  CloudField field = random_cloud_field(5, 21, 60.0);
  Dataset ds = simulate_power(plants, field, utc_timestamp(2017, 7, 1), 6);
  normalize(ds, 0, ds.steps());
  SkyTable sky = build_sky_table(ds, plant_locations(plants));
  WindowSet ws(ds, sky, 16, 24, 5);
  REQUIRE(ws.size() > 3);

  FeatureFrame f = ws.frame(2);
  size_t t0 = 288 + 2 * 5;
  REQUIRE(f.first_decoder_step == t0 + 16);
  REQUIRE(f.encoder_x.size() == 16u * 2u * 3u);
  REQUIRE(f.decoder_y.size() == 24u * 2u * 3u);
  REQUIRE(f.target.size() == 24u * 2u);

  for (int m = 0; m < 16; ++m) {
    size_t t = t0 + static_cast<size_t>(m);
    auto pbar = rolling_mean(ds, t);
    for (int v = 0; v < 2; ++v) {
      const double* row = f.encoder_x.data() + (static_cast<size_t>(m) * 2 + v) * 3;
      double pmax = ds.per_node_max[static_cast<size_t>(v)];
      ClearSkySample cs = clearsky_at(ds.timestamps[t], plants[static_cast<size_t>(v)].location);
      REQUIRE(row[0] == Catch::Approx(ds.at(t, v) / pmax).epsilon(1e-13));
      REQUIRE(row[1] ==
              Catch::Approx(pbar[static_cast<size_t>(v)] / pmax).epsilon(1e-10).margin(1e-12));
      REQUIRE(row[2] == Catch::Approx(cs.ghi / 1000.0).margin(1e-13));
    }
  }
  for (int h = 0; h < 24; ++h) {
    size_t t = f.first_decoder_step + static_cast<size_t>(h);
    auto pbar = rolling_mean(ds, t);
    for (int v = 0; v < 2; ++v) {
      const double* row = f.decoder_y.data() + (static_cast<size_t>(h) * 2 + v) * 3;
      double pmax = ds.per_node_max[static_cast<size_t>(v)];
      ClearSkySample cs = clearsky_at(ds.timestamps[t], plants[static_cast<size_t>(v)].location);
      REQUIRE(row[0] == Catch::Approx(cs.ghi / 1000.0).margin(1e-13));
      REQUIRE(row[1] == Catch::Approx(cs.dni / 1000.0).margin(1e-13));
      REQUIRE(row[2] ==
              Catch::Approx(pbar[static_cast<size_t>(v)] / pmax).epsilon(1e-10).margin(1e-12));
      REQUIRE(f.target[static_cast<size_t>(h) * 2 + v] ==
              Catch::Approx(ds.at(t, v) / pmax).epsilon(1e-13));
    }
  }
}

TEST_CASE("normalized targets round-trip to physical power and may exceed one") {
  Dataset ds = random_power_dataset(2, 420, 9);
  ds.at(400, 0) = 30.0;  // beyond anything in the training range
  normalize(ds, 0, 380);
  SkyTable sky = build_sky_table(ds, {{kLat0, kLon0, 500.0}, {kLat0, kLon0 + 0.1, 500.0}});
  WindowSet ws(ds, sky, 16, 24, 1);
  bool exceeded = false;
  for (size_t i = 0; i < ws.size(); ++i) {
    FeatureFrame f = ws.frame(i);
    for (int h = 0; h < f.H; ++h)
      for (int v = 0; v < 2; ++v) {
        size_t t = f.first_decoder_step + static_cast<size_t>(h);
        double back = f.target[static_cast<size_t>(h) * 2 + v] *
                      ds.per_node_max[static_cast<size_t>(v)];
        REQUIRE(back == Catch::Approx(ds.at(t, v)).epsilon(1e-12));
        if (f.target[static_cast<size_t>(h) * 2 + v] > 1.0) exceeded = true;
      }
  }
  REQUIRE(exceeded);
}

TEST_CASE("windowing requires a normalized dataset and valid geometry") {
  Dataset ds = random_power_dataset(2, 400, 10);
  SkyTable sky = build_sky_table(ds, {{kLat0, kLon0, 500.0}, {kLat0, kLon0 + 0.1, 500.0}});
  REQUIRE_THROWS_AS(WindowSet(ds, sky, 16, 24, 1), std::invalid_argument);
  normalize(ds, 0, 400);
  WindowSet ws(ds, sky, 16, 24, 1);
  REQUIRE_THROWS_AS(ws.frame(ws.size()), std::invalid_argument);
  REQUIRE_THROWS_AS(WindowSet(ds, sky, 0, 24, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(WindowSet(ds, sky, 16, 24, 0), std::invalid_argument);
}

TEST_CASE("CSV round-trip preserves timestamps and power") {
  auto plants = east_west_pair(12.0);
  CloudField field = random_cloud_field(4, 12, 50.0);
  Dataset ds = simulate_power(plants, field, utc_timestamp(2019, 4, 1), 4);
  save_csv(ds, "tmp_roundtrip.csv");
  Dataset back = load_csv("tmp_roundtrip.csv");
  REQUIRE(back.steps() == ds.steps());
  REQUIRE(back.n_nodes == ds.n_nodes);
  REQUIRE(back.timestamps == ds.timestamps);
  for (size_t i = 0; i < ds.power.size(); ++i)
    REQUIRE(back.power[i] == Catch::Approx(ds.power[i]).epsilon(1e-9).margin(1e-12));
  std::remove("tmp_roundtrip.csv");
}

TEST_CASE("CSV loader interpolates short gaps linearly and warns") {
  std::string path = write_temp_csv(
      "timestamp_utc,node_0,node_1\n"
      "2020-05-01T10:00:00Z,4.0,8.0\n"
      "2020-05-01T10:15:00Z,5.0,9.0\n"
      "2020-05-01T11:00:00Z,8.0,3.0\n"  // two missing steps, linear bridge
      "2020-05-01T11:15:00Z,8.5,2.0\n");
  std::ostringstream warn;
  Dataset ds = load_csv(path, warn);
  REQUIRE(ds.steps() == 6);
  REQUIRE(warn.str().find("interpolating 2 missing step(s)") != std::string::npos);
  REQUIRE(ds.timestamps[2] == parse_iso8601("2020-05-01T10:30:00Z"));
  REQUIRE(ds.at(2, 0) == Catch::Approx(6.0));
  REQUIRE(ds.at(3, 0) == Catch::Approx(7.0));
  REQUIRE(ds.at(2, 1) == Catch::Approx(7.0));
  REQUIRE(ds.at(3, 1) == Catch::Approx(5.0));
  std::remove(path.c_str());
}

TEST_CASE("CSV loader rejects gaps longer than four steps naming the interval") {
  std::string path = write_temp_csv(
      "timestamp_utc,node_0\n"
      "2020-05-01T10:00:00Z,4.0\n"
      "2020-05-01T11:30:00Z,5.0\n");  // five missing steps
  try {
    load_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("2020-05-01T10:00:00Z") != std::string::npos);
    REQUIRE(msg.find("2020-05-01T11:30:00Z") != std::string::npos);
    REQUIRE(msg.find("5 steps") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("CSV loader rejects malformed inputs with row numbers") {
  struct Case {
    const char* body;
    long row;
  };
  const Case cases[] = {
      {"timestamp_utc,node_0\n2020-05-01T10:00:00Z,1.0\n2020-05-01T10:15:00Z,-0.5\n", 3},
      {"timestamp_utc,node_0\n2020-05-01T10:00:00Z,1.0\n2020-05-01T10:20:00Z,1.0\n", 3},
      {"timestamp_utc,node_0\n2020-05-01T10:15:00Z,1.0\n2020-05-01T10:00:00Z,1.0\n", 3},
      {"timestamp_utc,node_0\n2020-05-01T10:00:00Z,abc\n2020-05-01T10:15:00Z,1.0\n", 2},
      {"timestamp_utc,node_0\nnot-a-time,1.0\n2020-05-01T10:15:00Z,1.0\n", 2},
      {"timestamp_utc,node_0\n2020-05-01T10:00:00Z,1.0,9.0\n", 2},
      {"timestamp_utc,node_0,node_1\n2020-05-01T10:00:00Z,1.0\n", 2},
  };
  for (const Case& c : cases) {
    std::string path = write_temp_csv(c.body);
    try {
      load_csv(path);
      FAIL("expected ParseError for: " << c.body);
    } catch (const ParseError& e) {
      REQUIRE(e.row() == c.row);
    }
    std::remove(path.c_str());
  }
  std::string bad_header = write_temp_csv("time,node_0\n2020-05-01T10:00:00Z,1.0\n");
  REQUIRE_THROWS_AS(load_csv(bad_header), ParseError);
  std::remove(bad_header.c_str());
  REQUIRE_THROWS_AS(load_csv("no_such_file.csv"), ParseError);
}

TEST_CASE("negative power mentions the offending row and node") {
  std::string path = write_temp_csv(
      "timestamp_utc,node_0,node_1\n"
      "2020-05-01T10:00:00Z,1.0,2.0\n"
      "2020-05-01T10:15:00Z,1.0,-3.25\n");
  try {
    load_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    REQUIRE(e.row() == 3);
    REQUIRE(std::string(e.what()).find("negative power") != std::string::npos);
    REQUIRE(std::string(e.what()).find("node 1") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("two-node one-day CSV loads with the expected dimensions") {
  Dataset src;
  src.n_nodes = 2;
  src.step_seconds = 900;
  int64_t start = utc_timestamp(2021, 8, 1);
  for (int t = 0; t < 96; ++t) {
    src.timestamps.push_back(start + t * 900);
    src.power.push_back(0.5 + t * 0.01);
    src.power.push_back(1.5 + t * 0.02);
  }
  save_csv(src, "tmp_oneday.csv");
  Dataset ds = load_csv("tmp_oneday.csv");
  REQUIRE(ds.steps() == 96);
  REQUIRE(ds.n_nodes == 2);
  REQUIRE(ds.step_seconds == 900);
  std::remove("tmp_oneday.csv");
}

TEST_CASE("plant specs round-trip through JSON") {
  auto plants = random_plants(4, 31);
  save_plants_json(plants, "tmp_plants.json");
  auto back = load_plants_json("tmp_plants.json");
  REQUIRE(back.size() == plants.size());
  for (size_t i = 0; i < plants.size(); ++i) {
    REQUIRE(back[i].location.latitude_deg == plants[i].location.latitude_deg);
    REQUIRE(back[i].location.longitude_deg == plants[i].location.longitude_deg);
    REQUIRE(back[i].location.altitude_m == plants[i].location.altitude_m);
    REQUIRE(back[i].capacity_kw == plants[i].capacity_kw);
  }
  std::remove("tmp_plants.json");

  REQUIRE_THROWS_AS(plants_from_json(nlohmann::json::parse(R"([{"lat": 1.0, "lon": 2.0}])")),
                    ParseError);
  REQUIRE_THROWS_AS(plants_from_json(nlohmann::json::parse(
                        R"([{"lat": 1.0, "lon": 2.0, "capacity_kw": 0.0}])")),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(plants_from_json(nlohmann::json::parse(
                        R"([{"lat": 99.0, "lon": 2.0, "capacity_kw": 5.0}])")),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(load_plants_json("no_such_plants.json"), ParseError);
}
