#pragma once

#include <string>

#include "apcsim/scenario.hpp"

namespace apcsim::test {

inline std::string data_path(const std::string& rel) { return std::string(APCSIM_DATA_DIR) + "/" + rel; }

/// Shared scenario instances; loading parses every data file, so tests reuse one.
inline const Scenario& zero_noise_scenario() {
  static Scenario s = Scenario::load(data_path("configs/zero_noise.json"));
  return s;
}

inline const Scenario& default_scenario() {
  static Scenario s = Scenario::load(data_path("configs/default.json"));
  return s;
}

/// Offline library shared across tests (built once per process, cached on disk).
inline const OfflineLibrary& shared_library() {
  static OfflineLibrary lib = zero_noise_scenario().offline_library(1, std::string(APCSIM_DATA_DIR) + "/../.apcsim_cache");
  return lib;
}

}  // namespace apcsim::test
