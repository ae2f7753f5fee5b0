#include "epinet/threading.hpp"

#include <cstdlib>
#include <string>

#include "epinet/error.hpp"

namespace epinet {

namespace {

int g_threads = 0;  // 0 = not initialized yet

int read_env() {
  const char* v = std::getenv("EPINET_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  int n = 0;
  try {
    n = std::stoi(v);
  } catch (...) {
    throw Error("cli", "threads", std::string("EPINET_THREADS is not an integer: ") + v);
  }
  if (n < 1) throw Error("cli", "threads", "EPINET_THREADS must be >= 1");
  return n;
}

}  // namespace

int threads() {
  if (g_threads == 0) g_threads = read_env();
  return g_threads;
}

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }

}  // namespace epinet
