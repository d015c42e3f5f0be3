#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vaxsignal/data_model.hpp"
#include "vaxsignal/model.hpp"
#include "vaxsignal/sampler.hpp"
#include "vaxsignal/simulation.hpp"

namespace vaxsignal::cli {

// Fit modes and their directory names under fits/.
inline constexpr const char* kModes[] = {"dpm", "il-informative", "il-vague"};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this

  // [run]
  std::uint64_t seed = 20200316;

  // [data]
  std::string format = "canonical";
  std::optional<std::string> reports;
  std::optional<std::string> raw_data;
  std::optional<std::string> raw_vax;
  std::optional<std::string> raw_symptoms;
  VaccineCodeSets codes;
  std::optional<std::string> soc_map;
  std::optional<std::string> nc_list;
  FilterPolicy filter;

  // [model]
  Hyperparams dpm;
  double il_informative_precision = 0.1;
  double il_vague_precision = 0.01;

  // [chains]
  ChainConfig chains;

  // [signals]
  int exceed_count = 35;
  double cutoff = 0.90;

  // [enrichment]
  double eor_mean_threshold = 2.0;

  // [simulation]
  SimulationSpec simulation;
  std::vector<double> study_sigmas{0.5, 0.8, 1.0};
  std::optional<std::string> intercept_pool_file;

  std::filesystem::path resolve(const std::string& p) const;
  Hyperparams hyper_for(const std::string& mode) const;
  // Every key with its effective value, for the manifest.
  std::map<std::string, std::string> snapshot() const;
  void validate() const;
};

// Flat INI file with [run], [data], [model], [chains], [signals], [enrichment]
// and [simulation] sections. Unknown keys and malformed values are ConfigErrors
// naming the key. No path gives the defaults.
RunConfig load_config(const std::optional<std::filesystem::path>& path);

void check_mode(const std::string& mode);

// Intercept pool file: one real per line (or a CSV with an `intercept` column).
std::vector<double> load_intercept_pool(const std::filesystem::path& path);

}  // namespace vaxsignal::cli
