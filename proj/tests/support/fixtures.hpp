#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "vaxsignal/data_model.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vx") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Intercept-plus-vaccine design with one control and one target stratum.
inline vaxsignal::StratumTable two_strata(std::vector<std::int64_t> y_control, std::vector<std::int64_t> y_target,
                                          std::int64_t n_control, std::int64_t n_target) {
  vaxsignal::StratumTable t;
  t.strata = {{"control", {1.0}, 0, n_control}, {"target", {1.0}, 1, n_target}};
  for (std::size_t j = 0; j < y_control.size(); ++j) {
    t.ae_index.push_back("ae" + std::to_string(j));
    t.y.push_back(y_control[j]);
    t.y.push_back(y_target[j]);
  }
  return t;
}

}  // namespace fixture
