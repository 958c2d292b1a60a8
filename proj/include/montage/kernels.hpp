#pragma once

#include "montage/sparse.hpp"

#include <span>

// OpenMP kernels for the hot loops. Every kernel is deterministic with
// respect to the number of threads: parallel loops write disjoint outputs,
// and reductions sum fixed-size chunk partials in a fixed serial order, so
// results are bit-identical for any thread count. tests/test_kernels.cpp
// checks each kernel against the serial versions in montage/reference.hpp.
namespace montage::kernels {

// y = A * x
void spmv(const CsrMatrix &a, std::span<const double> x, std::span<double> y);

// Deterministic chunked reductions.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// y = alpha * x + beta * y
void axpby(double alpha, std::span<const double> x, double beta,
           std::span<double> y);

} // namespace montage::kernels
