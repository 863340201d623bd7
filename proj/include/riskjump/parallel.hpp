#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace riskjump {

// Serial mode exists as a reference implementation; parallel kernels must
// reproduce it bit for bit.
enum class Exec { serial, parallel };

// Apply the RISKJUMP_THREADS cap (0 or unset = automatic).
inline void apply_thread_cap_from_env() {
#ifdef _OPENMP
    const char* env = std::getenv("RISKJUMP_THREADS");
    if (env == nullptr) return;
    const int cap = std::atoi(env);
    if (cap > 0) omp_set_num_threads(cap);
#endif
}

inline int max_threads(Exec exec) {
    if (exec == Exec::serial) return 1;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace riskjump
