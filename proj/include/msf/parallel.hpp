#pragma once

#include <cstddef>
#include <span>

namespace msf {

/// Number of worker threads used by parallel loops. 0 means the OpenMP default.
void set_worker_count(int workers);
int worker_count();

/// Sum of squares with a fixed reduction tree, so the result does not depend on thread count.
double squared_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace msf
