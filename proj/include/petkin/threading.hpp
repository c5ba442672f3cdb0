#pragma once

namespace petkin {

// Resolution order: set_threads() > PETKIN_THREADS env > hardware default.
// All parallel kernels are written so results do not depend on the count.
void set_threads(int n);   // n <= 0 restores the automatic default
int thread_count();

} // namespace petkin
