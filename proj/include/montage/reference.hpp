#pragma once

#include "montage/sparse.hpp"

#include <span>

// Plain serial implementations of the parallel kernels. These stay simple
// enough to audit by eye; the unit tests compare the OpenMP kernels against
// them and the benchmark tool reports the speedup.
namespace montage::ref {

void spmv(const CsrMatrix &a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
void axpby(double alpha, std::span<const double> x, double beta,
           std::span<double> y);

// Aᵀ·diag(d)·A by accumulating one rank-1 row outer product at a time.
CsrMatrix gram(const CsrMatrix &a, std::span<const double> d);

// Aᵀ·diag(d)·b
std::vector<double> gram_rhs(const CsrMatrix &a, std::span<const double> d,
                             std::span<const double> b);

} // namespace montage::ref
