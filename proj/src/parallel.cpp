#include "nglod/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <tbb/global_control.h>

namespace nglod {
namespace {

std::mutex g_mutex;
std::unique_ptr<tbb::global_control> g_control;
std::atomic<int> g_workers{0};

int default_workers() {
    if (const char* env = std::getenv("NGLOD_WORKERS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

void set_worker_count(int workers) {
    std::lock_guard lock(g_mutex);
    const int n = workers > 0 ? workers : default_workers();
    g_control = std::make_unique<tbb::global_control>(
        tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(n));
    g_workers.store(n);
}

int worker_count() {
    const int n = g_workers.load(std::memory_order_relaxed);
    if (n > 0) return n;
    set_worker_count(0);
    return g_workers.load();
}

}  // namespace nglod
