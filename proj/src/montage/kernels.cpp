#include "montage/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace montage::kernels {

namespace {
// Chunk size for deterministic reductions. Partial sums are computed per
// fixed chunk and combined serially, so the summation order never depends
// on the thread count.
constexpr std::int64_t kChunk = 8192;
} // namespace

void spmv(const CsrMatrix &a, std::span<const double> x, std::span<double> y) {
  if (static_cast<std::int64_t>(x.size()) != a.cols ||
      static_cast<std::int64_t>(y.size()) != a.rows)
    throw std::invalid_argument("spmv: shape mismatch");
  const std::int64_t rows = a.rows;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const std::int64_t e = a.row_ptr[static_cast<std::size_t>(r) + 1];
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)]; k < e; ++k)
      acc += a.val[static_cast<std::size_t>(k)] *
             x[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])];
    y[static_cast<std::size_t>(r)] = acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: size mismatch");
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  const std::int64_t nchunks = (n + kChunk - 1) / kChunk;
  if (nchunks <= 1) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      acc += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
    return acc;
  }
  std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < nchunks; ++c) {
    const std::int64_t lo = c * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i)
      acc += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
    partial[static_cast<std::size_t>(c)] = acc;
  }
  double total = 0.0;
  for (double p : partial)
    total += p;
  return total;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpby(double alpha, std::span<const double> x, double beta,
           std::span<double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("axpby: size mismatch");
  const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    y[static_cast<std::size_t>(i)] = alpha * x[static_cast<std::size_t>(i)] +
                                     beta * y[static_cast<std::size_t>(i)];
}

} // namespace montage::kernels
