#pragma once

// Run manifest: every artifact a command wrote, with its SHA-256, plus the
// effective config and the outcome. No wall-clock data, so reruns with the
// same config and seed produce the same bytes. Needs OpenSSL::Crypto.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tmut/features/feature_io.hpp"

namespace tmut {

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string command)
      : dir_(std::move(out_dir)), command_(std::move(command)) {}

  const std::filesystem::path& dir() const { return dir_; }
  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  // Writes `bytes` to <out>/<name> and records it.
  void write(const std::string& name, const std::string& bytes) {
    std::filesystem::create_directories(dir_);
    write_text((dir_ / name).string(), bytes);
    artifacts_[name] = {{"path", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}};
  }
  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  void fail(std::string status, std::string stage, std::string error) {
    status_ = std::move(status);
    failed_stage_ = std::move(stage);
    error_ = std::move(error);
  }

  nlohmann::json to_json() const {
    nlohmann::json arts = nlohmann::json::array();
    for (const auto& [name, a] : artifacts_) arts.push_back(a);  // sorted by path
    nlohmann::json j = {{"command", command_}, {"status", status_}, {"artifacts", arts}};
    j["config"] = config_;
    j["seed"] = seed_ ? nlohmann::json(*seed_) : nlohmann::json();
    j["failed_stage"] = failed_stage_.empty() ? nlohmann::json() : nlohmann::json(failed_stage_);
    j["error"] = error_.empty() ? nlohmann::json() : nlohmann::json(error_);
    return j;
  }

  void save() const {
    std::filesystem::create_directories(dir_);
    write_text((dir_ / "manifest.json").string(), to_json().dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  std::string command_;
  nlohmann::json config_;
  std::optional<std::uint64_t> seed_;
  std::map<std::string, nlohmann::json> artifacts_;
  std::string status_ = "ok";
  std::string failed_stage_;
  std::string error_;
};

}  // namespace tmut
