#pragma once

namespace epinet {

// Worker parallelism bound. Reads EPINET_THREADS once on first use
// (integer >= 1, default 1). Tests may override with set_threads().
int threads();
void set_threads(int n);

}  // namespace epinet
