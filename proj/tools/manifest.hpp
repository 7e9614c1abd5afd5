// Run manifests: what ran, with which inputs, and digests of what came out.
#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace simeck::cli {

std::string sha256_file(const std::filesystem::path& path);

/// Writes `text` to path.tmp and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& text);

class Manifest {
public:
    Manifest(std::vector<std::string> argv, std::string command);

    nlohmann::json& config() { return config_; }
    void seed(std::uint64_t s) { seeds_.push_back(s); }
    void input(const std::filesystem::path& p) { inputs_.push_back(p); }
    void output(const std::filesystem::path& p) { outputs_.push_back(p); }
    const std::vector<std::filesystem::path>& outputs() const { return outputs_; }

    /// Digests inputs and outputs now; wall time runs from construction.
    nlohmann::json finish() const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> argv_;
    std::string command_;
    nlohmann::json config_ = nlohmann::json::object();
    std::vector<std::uint64_t> seeds_;
    std::vector<std::filesystem::path> inputs_, outputs_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace simeck::cli
