#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace stainlab {

/// Provenance written next to the outputs of every CLI command.
struct RunRecord {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::string code_version;
    std::chrono::system_clock::time_point start;
    std::chrono::system_clock::time_point end;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
    void write(const std::filesystem::path& path) const;
    static RunRecord read(const std::filesystem::path& path);
};

std::string iso8601(std::chrono::system_clock::time_point t);

}  // namespace stainlab
