#pragma once

#include "montage/assembly.hpp"
#include "montage/model.hpp"
#include "montage/regularize.hpp"
#include "montage/solvers.hpp"
#include "montage/sparse.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace montage::io {

// Shortest round-trip decimal representation; all writers use it so output
// is byte-identical across runs.
std::string fmt_double(double v);

struct Dataset {
  std::vector<TileSpec> tiles;
  std::vector<MatchSet> matches;
  std::map<std::string, TransformParams> priors; // optional
};

// Loads and validates tiles/matches (plus optional prior transforms).
// Duplicate pairs are merged (reversed duplicates are swapped into the
// first orientation); matches naming unknown tiles raise DataError; points
// far outside the tile raise warnings, not errors.
Dataset load_dataset(const std::string &tiles_path,
                     const std::string &matches_path,
                     const std::optional<std::string> &priors_path = {},
                     std::vector<std::string> *warnings = nullptr);

void save_tiles(const std::string &path, const std::vector<TileSpec> &tiles);
void save_matches(const std::string &path,
                  const std::vector<MatchSet> &matches);

void save_transforms(const std::string &path,
                     const std::map<std::string, TransformParams> &transforms);
std::map<std::string, TransformParams>
load_transforms(const std::string &path);

// Table-style metrics sidecar: solve/assembly timings, per-tile residual,
// precision, non-zeros and point-match count, plus any extra fields.
void write_metrics(const std::string &path, const SolveReport &report,
                   double mean_residual_px,
                   const std::map<std::string, double> &extra = {});

void write_sweep_csv(const std::string &path, const std::vector<SweepRow> &rows);

// Matrix Market coordinate format; the matrix must be structurally
// symmetric, only the lower triangle is written.
void write_matrix_market(const std::string &path, const CsrMatrix &m);
CsrMatrix read_matrix_market(const std::string &path);

void write_vector(const std::string &path, std::span<const double> v);
std::vector<double> read_vector(const std::string &path);

} // namespace montage::io
