#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace topohazard {

/// Global worker cap set by the CLI --threads flag; 0 means hardware default.
int& thread_cap();

/// Runs fn(i) for i in [0, n). Work items must be independent and write only
/// to their own slots; results are then identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  int threads = 0);

}  // namespace topohazard
