#include "manifest.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <memory>

#include "vaxsignal/error.hpp"

#ifndef VAXSIGNAL_VERSION
#define VAXSIGNAL_VERSION "unknown"
#endif

namespace vaxsignal::cli {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 0xF];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

bool starts_with(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string sha256_bytes(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string timestamp_now() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunLock::RunLock(const std::filesystem::path& run_dir) : path_(run_dir / ".lock") {
  std::filesystem::create_directories(run_dir);
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    if (errno == EEXIST) {
      throw DataError("run directory " + run_dir.string() +
                      " is locked by another command (remove .lock if no command is running)");
    }
    throw DataError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
}

RunLock::~RunLock() {
  if (fd_ >= 0) ::close(fd_);
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

Manifest Manifest::load(const std::filesystem::path& run_dir) {
  Manifest m;
  m.run_dir_ = run_dir;
  const auto path = run_dir / "manifest.json";
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    try {
      m.j_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest.json is corrupt: " + std::string(e.what()));
    }
  } else {
    m.j_ = nlohmann::json::object();
    m.j_["created"] = timestamp_now();
  }
  m.j_["software"] = std::string("vaxsignal ") + VAXSIGNAL_VERSION;
  for (const char* k : {"inputs", "outputs", "stages"}) {
    if (!m.j_.contains(k)) m.j_[k] = nlohmann::json::object();
  }
  return m;
}

void Manifest::set_config(std::uint64_t seed, const std::map<std::string, std::string>& snapshot) {
  j_["seed"] = seed;
  j_["config"] = snapshot;
}

void Manifest::record_input(const std::string& role, const std::filesystem::path& resolved) {
  j_["inputs"][role] = {{"path", resolved.string()}, {"sha256", sha256_file(resolved)}};
}

bool Manifest::has_input(const std::string& role) const { return j_["inputs"].contains(role); }

std::vector<Mismatch> Manifest::changed_inputs(const std::map<std::string, std::filesystem::path>& current) const {
  std::vector<Mismatch> out;
  for (const auto& [role, path] : current) {
    if (!j_["inputs"].contains(role)) continue;
    const std::string expected = j_["inputs"][role]["sha256"].get<std::string>();
    const std::string actual = std::filesystem::exists(path) ? sha256_file(path) : "";
    if (actual != expected) out.push_back({role + " (" + path.string() + ")", expected, actual});
  }
  return out;
}

void Manifest::record_output(const std::string& relpath) {
  j_["outputs"][relpath] = sha256_file(run_dir_ / relpath);
}

void Manifest::forget_outputs(const std::string& prefix) {
  auto& outputs = j_["outputs"];
  for (auto it = outputs.begin(); it != outputs.end();) {
    if (starts_with(it.key(), prefix)) it = outputs.erase(it);
    else ++it;
  }
}

std::vector<Mismatch> Manifest::verify_outputs(const std::string& prefix) const {
  std::vector<Mismatch> out;
  for (const auto& [rel, digest] : j_["outputs"].items()) {
    if (!starts_with(rel, prefix)) continue;
    const auto path = run_dir_ / rel;
    const std::string actual = std::filesystem::exists(path) ? sha256_file(path) : "";
    if (actual != digest.get<std::string>()) out.push_back({rel, digest.get<std::string>(), actual});
  }
  return out;
}

std::vector<Mismatch> Manifest::verify_inputs() const {
  std::vector<Mismatch> out;
  for (const auto& [role, rec] : j_["inputs"].items()) {
    const std::filesystem::path path = rec["path"].get<std::string>();
    const std::string expected = rec["sha256"].get<std::string>();
    const std::string actual = std::filesystem::exists(path) ? sha256_file(path) : "";
    if (actual != expected) out.push_back({role + " (" + path.string() + ")", expected, actual});
  }
  return out;
}

void Manifest::mark_stage(const std::string& stage, bool completed, const nlohmann::json& extra) {
  nlohmann::json s = extra;
  s["completed"] = completed;
  s["at"] = timestamp_now();
  j_["stages"][stage] = std::move(s);
}

void Manifest::forget_stages(const std::string& prefix) {
  auto& stages = j_["stages"];
  for (auto it = stages.begin(); it != stages.end();) {
    if (starts_with(it.key(), prefix)) it = stages.erase(it);
    else ++it;
  }
}

bool Manifest::stage_completed(const std::string& stage) const {
  const auto& s = j_["stages"];
  return s.contains(stage) && s[stage].value("completed", false);
}

void Manifest::save() const { write_file_atomic(run_dir_ / "manifest.json", j_.dump(2) + "\n"); }

}  // namespace vaxsignal::cli
