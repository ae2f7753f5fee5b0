#include "epinet/opcount.hpp"

#include <atomic>

namespace epinet::opcount {

namespace {
std::atomic<bool> g_enabled{false};
std::atomic<int64_t> g_inner_products{0};
std::atomic<int64_t> g_multiplies{0};
}  // namespace

void reset() {
  g_inner_products = 0;
  g_multiplies = 0;
}

void enable(bool on) { g_enabled = on; }
bool enabled() { return g_enabled.load(std::memory_order_relaxed); }

void add_inner_products(int64_t count, int64_t length) {
  if (!enabled()) return;
  g_inner_products.fetch_add(count, std::memory_order_relaxed);
  g_multiplies.fetch_add(count * length, std::memory_order_relaxed);
}

int64_t inner_products() { return g_inner_products.load(); }
int64_t multiplies() { return g_multiplies.load(); }

}  // namespace epinet::opcount
