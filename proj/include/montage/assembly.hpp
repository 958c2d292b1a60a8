#pragma once

#include "montage/model.hpp"
#include "montage/sparse.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace montage {

// Point-pair correspondences for one connected tile pair. p holds the
// coordinates in p_tile's local frame, q those in q_tile's; w is one
// confidence weight per pair (defaults to 1).
struct MatchSet {
  std::string p_tile;
  std::string q_tile;
  std::vector<Point2> p;
  std::vector<Point2> q;
  std::vector<double> w;
};

struct ConnectivityReport {
  std::vector<std::vector<std::string>> components; // each sorted by tile_id
  std::vector<std::string> orphans;                 // tiles with no matches
  std::map<std::pair<std::string, std::string>, std::int64_t> pair_counts;
};

// Connected components of the tile-adjacency graph. Orphan tiles (no
// matches) are listed separately and belong to no component.
ConnectivityReport validate_connectivity(const std::vector<TileSpec> &tiles,
                                         const std::vector<MatchSet> &matches);

// Bookkeeping for one retained pair inside an assembled system.
struct PairBlock {
  std::string p_tile;
  std::string q_tile;
  std::int64_t p_index = -1; // position in tile_order, -1 once fixed
  std::int64_t q_index = -1;
  std::int64_t row_begin = 0; // first u-row; v-rows follow after n_points
  std::int64_t n_points = 0;
};

// The rectangular system: residual rows A·x - b weighted by diag(D).
// Each retained point pair contributes one u-row and one v-row, grouped
// per pair (all u-rows first, then all v-rows of that pair). Columns are
// packed per tile in ascending tile_id order.
struct SparseSystem {
  CsrMatrix a;
  std::vector<double> d_weights; // length m
  std::vector<double> b;         // length m
  std::vector<std::string> tile_order;
  ModelKind kind = ModelKind::Affine;
  std::vector<PairBlock> pairs;
  std::map<std::string, TransformParams> fixed; // eliminated tiles
  std::int64_t point_match_count = 0;           // sum of retained n_j
  std::int64_t dropped_pairs = 0;               // below min_matches
  std::int64_t subsampled_pairs = 0;            // above max_matches

  std::int64_t n() const { return a.cols; }
  std::int64_t m() const { return a.rows; }
};

// Square regularized normal equations.
struct NormalSystem {
  CsrMatrix a_tilde;
  std::vector<double> b_tilde;
};

// AᵀDA and AᵀDb of one system, computed once and shared across
// regularization values (only the diagonal and right-hand side change).
struct GramCache {
  CsrMatrix gram;
  std::vector<double> atdb;
};

// Assembles the rectangular system from point matches.
// Pairs with fewer than min_matches points are dropped (counted in
// dropped_pairs); pairs above max_matches are subsampled deterministically
// by a stable hash of (tile ids, point index). max_matches <= 0 disables
// subsampling. No tile is fixed here.
SparseSystem build_system(const std::vector<TileSpec> &tiles,
                          const std::vector<MatchSet> &matches, ModelKind kind,
                          std::int64_t min_matches = 1,
                          std::int64_t max_matches = 0);

// Eliminates the given tiles' columns; their contribution moves to b so
// that every remaining row keeps its residual value. Rows whose two tiles
// are both fixed are removed. Transforms of a different model kind are
// promoted to the system's kind first.
SparseSystem fix_tiles(const SparseSystem &system,
                       const std::map<std::string, TransformParams> &fixed);

GramCache build_gram_cache(const SparseSystem &system);

// A_tilde = AᵀDA + diag(lambda)·diag(b_diag)², b_tilde = AᵀDb +
// diag(lambda)·diag(b_diag)·d. Throws SolverError when a zero row/column is
// detected or when nothing (neither a fixed tile nor a positive lambda on a
// translation-class parameter) pins the global frame.
NormalSystem normal_from_cache(const GramCache &cache, const SparseSystem &system,
                               std::span<const double> lambda,
                               std::span<const double> b_diag,
                               std::span<const double> d);

NormalSystem build_normal_equations(const SparseSystem &system,
                                    std::span<const double> lambda,
                                    std::span<const double> b_diag,
                                    std::span<const double> d);

// Packs a per-tile solution map into the system's column layout.
std::vector<double> pack_solution(const SparseSystem &system,
                                  const std::map<std::string, TransformParams> &t);

// Expands a packed vector into per-tile transforms, fixed tiles included.
std::map<std::string, TransformParams>
unpack_solution(const SparseSystem &system, std::span<const double> x);

} // namespace montage
