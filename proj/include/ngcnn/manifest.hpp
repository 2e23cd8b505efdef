#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ngcnn {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Hex SHA-256 of a file's bytes. Throws InputError if it cannot be read.
std::string sha256_file(const std::string& path);
std::string sha256_hex(std::string_view bytes);

// Record of one CLI invocation, written as JSON next to its outputs.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void flag(const std::string& name, nlohmann::json value) { flags_[name] = std::move(value); }
    void seed(const std::string& purpose, std::uint64_t value) { seeds_[purpose] = value; }
    void input(const std::string& path);
    void output(const std::string& path) { outputs_.push_back(path); }

    // Duration is measured from construction.
    nlohmann::json to_json() const;
    void write(const std::string& path) const;

private:
    std::string command_;
    nlohmann::json flags_ = nlohmann::json::object();
    nlohmann::json seeds_ = nlohmann::json::object();
    nlohmann::json inputs_ = nlohmann::json::array();
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace ngcnn
