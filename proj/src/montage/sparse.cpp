#include "montage/sparse.hpp"

#include <algorithm>
#include <stdexcept>

namespace montage {

CsrMatrix csr_from_triplets(std::int64_t rows, std::int64_t cols,
                            std::vector<Triplet> entries) {
  for (const Triplet &t : entries) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw std::out_of_range("triplet outside matrix bounds");
  }
  std::sort(entries.begin(), entries.end(),
            [](const Triplet &a, const Triplet &b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  m.col.reserve(entries.size());
  m.val.reserve(entries.size());
  std::size_t i = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    while (i < entries.size() && entries[i].row == r) {
      const std::int64_t c = entries[i].col;
      double v = 0.0;
      while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
        v += entries[i].value;
        ++i;
      }
      m.col.push_back(static_cast<std::int32_t>(c));
      m.val.push_back(v);
    }
    m.row_ptr[static_cast<std::size_t>(r) + 1] =
        static_cast<std::int64_t>(m.col.size());
  }
  return m;
}

std::vector<double> csr_to_dense(const CsrMatrix &a) {
  std::vector<double> d(static_cast<std::size_t>(a.rows * a.cols), 0.0);
  for (std::int64_t r = 0; r < a.rows; ++r)
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      d[static_cast<std::size_t>(r * a.cols + a.col[static_cast<std::size_t>(k)])] +=
          a.val[static_cast<std::size_t>(k)];
  return d;
}

} // namespace montage
