#pragma once

#include <cstddef>

namespace hcmrisk {

// Kernels that have an OpenMP path keep a serial reference path. Both must
// produce bit-identical results; tests compare them directly.
enum class Exec { Serial, Parallel };

// Sets the OpenMP thread count; 0 leaves the runtime default.
void set_threads(int n);
int max_threads();

}  // namespace hcmrisk
