#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace topohazard::cli {

/// Reproducibility record written next to every run's outputs: the resolved
/// parameter map plus the master seed replays the run bit-for-bit.
struct RunManifest {
    std::string subcommand;
    std::map<std::string, std::string> params;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;
    nlohmann::json results;  // method-specific extras (thresholds, estimates)

    nlohmann::json to_json() const;
};

std::string file_digest(const std::string& path);
std::string iso8601_utc_now();

}  // namespace topohazard::cli
