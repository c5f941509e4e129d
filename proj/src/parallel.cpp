#include "dorqf/parallel.hpp"

#include "dorqf/error.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

namespace dorqf {

namespace {

std::atomic<std::size_t> g_threads{0};
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
thread_local bool t_in_parallel = false;

std::size_t threads_from_environment() {
    if (const char* env = std::getenv("DORQF_THREADS")) {
        try {
            long value = std::stol(env);
            if (value > 0) return static_cast<std::size_t>(value);
        } catch (const std::exception&) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace

void warn(const std::string& message) {
    if (!g_warnings.load(std::memory_order_relaxed)) return;
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

std::size_t thread_count() {
    std::size_t t = g_threads.load();
    return t == 0 ? threads_from_environment() : t;
}

void set_thread_count(std::size_t threads) { g_threads.store(threads); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    std::size_t workers = t_in_parallel ? 1 : std::min(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        t_in_parallel = true;
        struct Reset {
            ~Reset() { t_in_parallel = false; }
        } reset;
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Engine make_engine(std::uint64_t master_seed, std::uint64_t stream) {
    return Engine(mix64(mix64(master_seed) ^ mix64(stream + 0x632be59bd9b4e019ULL)));
}

Engine make_engine(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream) {
    std::uint64_t s = mix64(mix64(master_seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
    return Engine(mix64(s ^ mix64(substream + 0x1d8e4e27c47d124fULL)));
}

double uniform01(Engine& engine) {
    // 53 random bits mapped to the open interval (0,1).
    return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Engine& engine) {
    // Marsaglia polar method.
    for (;;) {
        double u = 2.0 * uniform01(engine) - 1.0;
        double v = 2.0 * uniform01(engine) - 1.0;
        double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

}  // namespace dorqf
