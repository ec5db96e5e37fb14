#pragma once

// Shared between the subcommand drivers and the canned reproductions.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "macq/report.hpp"

namespace macq::cli {

struct Result {
  io::Table table;
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  nlohmann::ordered_json residuals = nlohmann::ordered_json::object();
  // Resolved values of inputs whose default depends on others (e.g. p-exc = 1/K).
  nlohmann::ordered_json resolved = nlohmann::ordered_json::object();
};

struct ReproParams {
  std::optional<int> K;  // restricts scenarios that loop over K
  std::int64_t slots = 1'000'000;
  int replications = 8;
  std::uint64_t seed = 1;
  int threads = 0;
};

inline const std::vector<std::string> kReproIds = {"model1-vs-sim",  "psucc-compare", "service-time",
                                                   "threshold-sweep", "gilbert-psucc", "gilbert-queue",
                                                   "maxcap-gumbel",  "poisson-table"};

Result repro(const std::string& id, const ReproParams& p);

/// "a:b:step" (inclusive of b up to rounding) or a comma-separated list.
std::vector<double> parse_grid(const std::string& spec);

}  // namespace macq::cli
