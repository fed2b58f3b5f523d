#include "manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "topohazard/version.hpp"

namespace topohazard::cli {

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["params"] = params;
    j["seed"] = seed;
    j["version"] = TOPOHAZARD_VERSION;
    j["inputs"] = input_digests;
    if (!results.is_null()) j["results"] = results;
    j["timestamp"] = iso8601_utc_now();
    return j;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for digest");
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(h));
    return out;
}

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace topohazard::cli
