#include "stlm/kernels.hpp"

#include <atomic>

namespace stlm::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
}

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

}  // namespace stlm::kernels
