#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sforge {

// FNV-1a over a byte string; used for config fingerprints in checkpoints.
uint64_t fnv1a64(const std::string& bytes);

std::string to_hex(uint64_t v);

// Worker count for data-parallel loops: SCENARIO_FORGE_THREADS if set and
// positive, otherwise hardware concurrency. Capped at 64.
int worker_count();

// Runs fn(i) for i in [0, n). Work items are claimed dynamically, so
// per-index results must be written to pre-sized slots; any aggregation
// the caller performs afterwards must iterate in index order to stay
// deterministic. Exceptions in workers are rethrown on the calling thread.
void parallel_for(int n, const std::function<void(int)>& fn);

// Writes content to path via a temp file and rename, so readers never see
// partial content. Creates parent directories as needed.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

bool file_exists(const std::string& path);

// Monotonic wall-clock seconds; only for timing fields kept out of
// reproducible artifacts.
double now_seconds();

}  // namespace sforge
