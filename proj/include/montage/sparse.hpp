#pragma once

#include <cstdint>
#include <vector>

namespace montage {

// Compressed-row sparse matrix. Column indices are sorted within each row
// and unique; explicit zeros are allowed (diagonal slots are kept so that
// regularization terms can be added in place).
struct CsrMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int64_t> row_ptr; // rows + 1
  std::vector<std::int32_t> col;
  std::vector<double> val;

  std::int64_t nnz() const { return static_cast<std::int64_t>(val.size()); }
};

struct Triplet {
  std::int64_t row = 0;
  std::int64_t col = 0;
  double value = 0.0;
};

// Builds CSR from coordinate entries; duplicates are summed.
CsrMatrix csr_from_triplets(std::int64_t rows, std::int64_t cols,
                            std::vector<Triplet> entries);

// Dense row-major expansion, for small oracles and debugging only.
std::vector<double> csr_to_dense(const CsrMatrix &a);

} // namespace montage
