#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace dorqf {

/// Number of worker threads used by parallel loops. Resolution order:
/// explicit setting, then the DORQF_THREADS environment variable, then the
/// hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t threads);

/// Runs body(i) for i in [0, count). Iterations are handed out dynamically,
/// so callers must write results by index; the first exception thrown by any
/// iteration is rethrown after all workers have stopped. Calls nested
/// inside a parallel region run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Deterministic per-task random engine. The stream is a pure function of
/// (master seed, stream path), so results do not depend on scheduling.
using Engine = std::mt19937_64;

Engine make_engine(std::uint64_t master_seed, std::uint64_t stream);
Engine make_engine(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream);

/// SplitMix64 finaliser, used to derive stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Draws from U(0,1) and N(0,1) with engine-exact, library-independent
/// transforms, so generated data are identical across standard libraries.
double uniform01(Engine& engine);
double standard_normal(Engine& engine);

}  // namespace dorqf
