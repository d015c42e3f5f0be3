#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace vaxsignal::cli {

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::string_view bytes);

// ISO-8601 UTC. Uses SOURCE_DATE_EPOCH when set so reruns are byte-identical.
std::string timestamp_now();

// Write to a sibling temp file and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Exclusive per-run-directory lock held for the life of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct Mismatch {
  std::string file;
  std::string expected;
  std::string actual;  // empty when the file is missing
};

// manifest.json of a run directory.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& run_dir);

  const std::filesystem::path& run_dir() const noexcept { return run_dir_; }
  nlohmann::json& json() noexcept { return j_; }
  const nlohmann::json& json() const noexcept { return j_; }

  void set_config(std::uint64_t seed, const std::map<std::string, std::string>& snapshot);

  // Input recorded under `role` (e.g. "data.reports").
  void record_input(const std::string& role, const std::filesystem::path& resolved);
  bool has_input(const std::string& role) const;
  // Inputs whose recorded digest differs from the file now at `resolved`.
  std::vector<Mismatch> changed_inputs(const std::map<std::string, std::filesystem::path>& current) const;

  // Output at a path relative to the run directory.
  void record_output(const std::string& relpath);
  void forget_outputs(const std::string& prefix);
  std::vector<Mismatch> verify_outputs(const std::string& prefix = "") const;
  std::vector<Mismatch> verify_inputs() const;

  void mark_stage(const std::string& stage, bool completed, const nlohmann::json& extra = nlohmann::json::object());
  void forget_stages(const std::string& prefix);
  bool stage_completed(const std::string& stage) const;

  void save() const;

 private:
  std::filesystem::path run_dir_;
  nlohmann::json j_;
};

}  // namespace vaxsignal::cli
