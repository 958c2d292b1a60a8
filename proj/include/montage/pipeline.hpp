#pragma once

#include "montage/io.hpp"
#include "montage/regularize.hpp"
#include "montage/rigid_prior.hpp"
#include "montage/solvers.hpp"

#include <map>
#include <string>
#include <vector>

namespace montage {

enum class PriorSource { Rigid, File };

struct SolveOptions {
  ModelKind model = ModelKind::Affine;
  LambdaSpec lambda;
  SolverConfig solver;
  PriorSource prior_source = PriorSource::Rigid;
  std::int64_t min_matches = 2;
  std::int64_t max_matches = 0; // 0 = keep all
  std::vector<std::string> fix; // tiles fixed at the prior (or the identity)
  int samples_per_edge = 8;
};

struct SolveResult {
  std::map<std::string, TransformParams> transforms; // all tiles
  SolveReport report;
  ResidualStats stats;
  DeformationReport deformation;
  std::vector<TileSpec> tiles_in_order; // matches deformation.per_tile
  std::vector<std::string> notes;       // orphans, dropped pairs, ...
};

// Connectivity check, optional rigid-prior estimation, assembly, normal
// equations and solve; returns transforms for every tile together with the
// residual and deformation metrics.
SolveResult solve_dataset(const io::Dataset &dataset, const SolveOptions &opts);

// Assembled system plus its prior, for sweeps and system export.
struct PreparedSystem {
  SparseSystem system;
  PriorVector prior;
  std::vector<TileSpec> tiles_in_order;
  std::vector<std::string> notes;
  double assembly_seconds = 0.0;
};

PreparedSystem prepare_system(const io::Dataset &dataset,
                              const SolveOptions &opts);

// Metrics of an existing solution (from a transforms file or an imported
// solution vector) against a dataset.
struct ReportResult {
  ResidualStats stats;
  DeformationReport deformation;
  std::vector<TileSpec> tiles_in_order;
  std::int64_t nnz = 0;
  std::int64_t point_matches = 0;
};

ReportResult report_solution(const io::Dataset &dataset, ModelKind model,
                             const std::map<std::string, TransformParams> &t,
                             std::int64_t min_matches = 1,
                             std::int64_t max_matches = 0);

} // namespace montage
