#include "montage/reference.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace montage::ref {

void spmv(const CsrMatrix &a, std::span<const double> x, std::span<double> y) {
  if (static_cast<std::int64_t>(x.size()) != a.cols ||
      static_cast<std::int64_t>(y.size()) != a.rows)
    throw std::invalid_argument("spmv: shape mismatch");
  for (std::int64_t r = 0; r < a.rows; ++r) {
    double acc = 0.0;
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      acc += a.val[static_cast<std::size_t>(k)] *
             x[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])];
    y[static_cast<std::size_t>(r)] = acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpby(double alpha, std::span<const double> x, double beta,
           std::span<double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("axpby: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = alpha * x[i] + beta * y[i];
}

CsrMatrix gram(const CsrMatrix &a, std::span<const double> d) {
  if (static_cast<std::int64_t>(d.size()) != a.rows)
    throw std::invalid_argument("gram: weight size mismatch");
  std::map<std::pair<std::int64_t, std::int64_t>, double> acc;
  for (std::int64_t r = 0; r < a.rows; ++r) {
    const std::int64_t lo = a.row_ptr[static_cast<std::size_t>(r)];
    const std::int64_t hi = a.row_ptr[static_cast<std::size_t>(r) + 1];
    const double w = d[static_cast<std::size_t>(r)];
    for (std::int64_t i = lo; i < hi; ++i)
      for (std::int64_t j = lo; j < hi; ++j)
        acc[{a.col[static_cast<std::size_t>(i)],
             a.col[static_cast<std::size_t>(j)]}] +=
            w * a.val[static_cast<std::size_t>(i)] *
            a.val[static_cast<std::size_t>(j)];
  }
  std::vector<Triplet> trips;
  trips.reserve(acc.size());
  for (const auto &[key, v] : acc)
    trips.push_back({key.first, key.second, v});
  return csr_from_triplets(a.cols, a.cols, std::move(trips));
}

std::vector<double> gram_rhs(const CsrMatrix &a, std::span<const double> d,
                             std::span<const double> b) {
  std::vector<double> out(static_cast<std::size_t>(a.cols), 0.0);
  for (std::int64_t r = 0; r < a.rows; ++r) {
    const double s = d[static_cast<std::size_t>(r)] * b[static_cast<std::size_t>(r)];
    if (s == 0.0)
      continue;
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      out[static_cast<std::size_t>(a.col[static_cast<std::size_t>(k)])] +=
          s * a.val[static_cast<std::size_t>(k)];
  }
  return out;
}

} // namespace montage::ref
