#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace topohazard::cli {

/// Stages output files as "<path>.partial" and renames them into place only
/// on commit, so a failed run never leaves partial outputs behind.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const auto& [tmp, final_] : staged_) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
        }
    }

    std::string stage(const std::string& path) {
        staged_.push_back({path + ".partial", path});
        return staged_.back().first;
    }

    void commit() {
        for (const auto& [tmp, final_] : staged_)
            std::filesystem::rename(tmp, final_);
        committed_ = true;
    }

private:
    std::vector<std::pair<std::string, std::string>> staged_;
    bool committed_ = false;
};

}  // namespace topohazard::cli
