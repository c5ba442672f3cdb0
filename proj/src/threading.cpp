#include "petkin/threading.hpp"

#include <cstdlib>
#include <thread>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace petkin {

namespace {
int g_requested = 0;

int env_threads() {
    if (const char* s = std::getenv("PETKIN_THREADS")) {
        const int n = std::atoi(s);
        if (n > 0) return n;
    }
    return 0;
}
} // namespace

void set_threads(int n) {
    g_requested = n > 0 ? n : 0;
    int eff = g_requested ? g_requested : env_threads();
    if (!eff) eff = static_cast<int>(std::thread::hardware_concurrency());
    if (eff < 1) eff = 1;
#if defined(_OPENMP)
    omp_set_num_threads(eff);
#endif
}

int thread_count() {
    if (g_requested > 0) return g_requested;
    if (const int n = env_threads()) return n;
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    const int n = static_cast<int>(std::thread::hardware_concurrency());
    return n > 0 ? n : 1;
#endif
}

} // namespace petkin
