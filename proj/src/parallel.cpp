#include "msf/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace msf {

namespace {
int g_workers = 0;
constexpr std::size_t kChunk = 4096;
}  // namespace

void set_worker_count(int workers) {
  g_workers = std::max(0, workers);
  if (g_workers > 0) omp_set_num_threads(g_workers);
}

int worker_count() { return g_workers > 0 ? g_workers : omp_get_max_threads(); }

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double squared_norm(std::span<const double> v) { return dot(v, v); }

}  // namespace msf
