#include "diffhpe/parallel.hpp"

#include <atomic>

namespace diffhpe::par {

namespace {
std::atomic<bool> g_enabled{true};
std::atomic<int> g_threads{0};
}  // namespace

bool enabled() { return g_enabled.load(std::memory_order_relaxed); }
void set_enabled(bool on) { g_enabled.store(on, std::memory_order_relaxed); }
int thread_count() { return g_threads.load(std::memory_order_relaxed); }
void set_thread_count(int n) { g_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed); }

}  // namespace diffhpe::par
