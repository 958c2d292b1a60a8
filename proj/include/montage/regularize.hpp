#pragma once

#include "montage/assembly.hpp"
#include "montage/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace montage {

struct SolverConfig; // solvers.hpp
struct PriorVector;  // rigid_prior.hpp

// Per-parameter regularization strengths. Expansion precedence is
// per_tile > per_section > per_class > default_value. A "frozen" override
// sets default_value * frozen_multiplier on every parameter of the
// affected tiles, which pins them to the prior without a second solve path.
struct LambdaSpec {
  struct Override {
    double value = 0.0;
    bool frozen = false;
  };

  double default_value = 1.0;
  std::map<ParamClass, double> per_class;
  std::map<int, Override> per_section;
  std::map<std::string, Override> per_tile;
  double frozen_multiplier = 1e8;

  static Override frozen() { return {0.0, true}; }
  static Override fixed_value(double v) { return {v, false}; }
};

// Expands the spec into one entry per packed parameter. `tiles_in_order`
// must align with the system's tile_order. Throws DataError for overrides
// that reference tiles or sections absent from the list.
std::vector<double> expand_lambda(const LambdaSpec &spec,
                                  const std::vector<TileSpec> &tiles_in_order,
                                  ModelKind kind);

struct DeformationReport {
  std::vector<double> per_tile; // NaN where the transform is non-finite
  double mean = 0.0;            // over finite entries
  std::int64_t nonfinite_tiles = 0;
};

// Ratio of transformed tile area to original area, per tile. Linear models
// use the |det| of the linear part; polynomial models transform the tile
// boundary sampled at samples_per_edge points per edge and apply the
// shoelace formula.
DeformationReport
deformation_ratios(const std::vector<TileSpec> &tiles,
                   const std::vector<TransformParams> &params,
                   int samples_per_edge = 8);

double polygon_area_ratio(const TileSpec &tile, const TransformParams &t,
                          int samples_per_edge = 8);

struct SweepRow {
  double lambda = 0.0;
  double mean_deformation_ratio = 0.0;
  double mean_residual_px = 0.0;
  double precision = 0.0;
  double solve_seconds = 0.0;
  bool ok = false;
  std::string status;
};

// Solves the regularized system for each lambda value, scaling the prior's
// per-parameter vector uniformly. The AᵀDA product is assembled once and
// shared across rows; failed rows are marked and the sweep continues.
std::vector<SweepRow> sweep_lambda(const SparseSystem &system,
                                   const PriorVector &prior,
                                   const std::vector<double> &lambdas,
                                   const SolverConfig &config,
                                   const std::vector<TileSpec> &tiles_in_order,
                                   int samples_per_edge = 8);

} // namespace montage
