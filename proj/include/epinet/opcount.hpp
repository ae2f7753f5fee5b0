#pragma once

#include <cstdint>

namespace epinet::opcount {

// Instrumented operation counters used by the cost-parity report. Layer
// kernels bump these once per call with closed-form counts, so enabling
// them costs nothing in the inner loops.
void reset();
void enable(bool on);
bool enabled();
void add_inner_products(int64_t count, int64_t length);

int64_t inner_products();
int64_t multiplies();

}  // namespace epinet::opcount
