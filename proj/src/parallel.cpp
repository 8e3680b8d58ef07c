#include "gammafem/parallel.hpp"

#include <atomic>

namespace gfem {

namespace {
std::atomic<std::int64_t> g_threads{1};
}

std::int64_t default_threads() { return g_threads.load(); }

void set_default_threads(std::int64_t n) { g_threads.store(n < 1 ? 1 : n); }

}  // namespace gfem
