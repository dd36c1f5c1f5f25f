#pragma once

// Run manifests: every CLI command drops a manifest.json into its output
// directory recording the command, configuration, content hashes of all
// inputs, and the produced files, so any artifact can be traced back to the
// exact run that made it.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvgnn/errors.hpp"
#include "pvgnn/timeutil.hpp"

namespace pvgnn {

inline uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ParseError("cannot open for hashing: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in.good()) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline std::string fnv1a64_hex(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_run_manifest(const std::string& dir, const std::string& command,
                               const nlohmann::json& config,
                               const std::vector<std::string>& input_paths,
                               const std::vector<std::string>& output_names) {
  nlohmann::json inputs = nlohmann::json::object();
  for (const std::string& p : input_paths)
    inputs[std::filesystem::path(p).filename().string()] = fnv1a64_hex(fnv1a64_file(p));
  int64_t now = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();
  nlohmann::json m = {{"command", command},
                      {"created_utc", format_iso8601(now)},
                      {"config", config},
                      {"inputs", inputs},
                      {"outputs", output_names}};
  std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  check_arg(out.good(), "cannot open for writing: " + path);
  out << m.dump(2) << "\n";
}

}  // namespace pvgnn
