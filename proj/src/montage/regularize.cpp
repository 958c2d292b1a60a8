#include "montage/regularize.hpp"

#include "montage/errors.hpp"
#include "montage/rigid_prior.hpp"
#include "montage/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace montage {

std::vector<double> expand_lambda(const LambdaSpec &spec,
                                  const std::vector<TileSpec> &tiles_in_order,
                                  ModelKind kind) {
  std::set<std::string> ids;
  std::set<int> sections;
  for (const TileSpec &t : tiles_in_order) {
    ids.insert(t.tile_id);
    sections.insert(t.z);
  }
  for (const auto &[id, ov] : spec.per_tile)
    if (!ids.count(id))
      throw DataError("lambda override references unknown tile '" + id + "'");
  for (const auto &[z, ov] : spec.per_section)
    if (!sections.count(z))
      throw DataError("lambda override references unknown section z=" +
                      std::to_string(z));

  const int nc = coeffs_per_tile(kind);
  std::vector<double> out(tiles_in_order.size() * static_cast<std::size_t>(nc));
  const double frozen_value = spec.default_value * spec.frozen_multiplier;

  for (std::size_t t = 0; t < tiles_in_order.size(); ++t) {
    const TileSpec &tile = tiles_in_order[t];
    const LambdaSpec::Override *ov = nullptr;
    if (auto it = spec.per_tile.find(tile.tile_id); it != spec.per_tile.end())
      ov = &it->second;
    else if (auto is = spec.per_section.find(tile.z); is != spec.per_section.end())
      ov = &is->second;
    for (int c = 0; c < nc; ++c) {
      double v;
      if (ov != nullptr) {
        v = ov->frozen ? frozen_value : ov->value;
      } else if (auto ic = spec.per_class.find(coeff_class(kind, c));
                 ic != spec.per_class.end()) {
        v = ic->second;
      } else {
        v = spec.default_value;
      }
      out[t * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)] = v;
    }
  }
  return out;
}

double polygon_area_ratio(const TileSpec &tile, const TransformParams &t,
                          int samples_per_edge) {
  const int s = std::max(1, samples_per_edge);
  const double w = tile.width;
  const double h = tile.height;
  // Boundary of the tile rectangle, counter-clockwise, s samples per edge.
  std::vector<Point2> boundary;
  boundary.reserve(static_cast<std::size_t>(4 * s));
  for (int i = 0; i < s; ++i)
    boundary.push_back({w * i / s, 0.0});
  for (int i = 0; i < s; ++i)
    boundary.push_back({w, h * i / s});
  for (int i = 0; i < s; ++i)
    boundary.push_back({w - w * i / s, h});
  for (int i = 0; i < s; ++i)
    boundary.push_back({0.0, h - h * i / s});

  double area2 = 0.0;
  Point2 prev = apply_transform(t, boundary.back());
  for (const Point2 &bp : boundary) {
    const Point2 cur = apply_transform(t, bp);
    area2 += prev.x * cur.y - cur.x * prev.y;
    prev = cur;
  }
  return std::abs(area2) / (2.0 * w * h);
}

DeformationReport deformation_ratios(const std::vector<TileSpec> &tiles,
                                     const std::vector<TransformParams> &params,
                                     int samples_per_edge) {
  if (tiles.size() != params.size())
    throw DataError("deformation_ratios: one transform per tile required");
  DeformationReport report;
  report.per_tile.assign(tiles.size(), 0.0);
  const std::int64_t n = static_cast<std::int64_t>(tiles.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const TransformParams &t = params[static_cast<std::size_t>(i)];
    bool finite = true;
    for (double c : t.coeffs)
      finite = finite && std::isfinite(c);
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (finite) {
      if (t.kind == ModelKind::Poly2 || t.kind == ModelKind::Poly3)
        ratio = polygon_area_ratio(tiles[static_cast<std::size_t>(i)], t,
                                   samples_per_edge);
      else
        ratio = linear_area_scale(t);
    }
    report.per_tile[static_cast<std::size_t>(i)] = ratio;
  }
  double sum = 0.0;
  std::int64_t finite_count = 0;
  for (double r : report.per_tile) {
    if (std::isfinite(r)) {
      sum += r;
      ++finite_count;
    } else {
      ++report.nonfinite_tiles;
    }
  }
  report.mean = finite_count > 0 ? sum / static_cast<double>(finite_count) : 0.0;
  return report;
}

std::vector<SweepRow> sweep_lambda(const SparseSystem &system,
                                   const PriorVector &prior,
                                   const std::vector<double> &lambdas,
                                   const SolverConfig &config,
                                   const std::vector<TileSpec> &tiles_in_order,
                                   int samples_per_edge) {
  if (lambdas.empty())
    throw DataError("lambda sweep requires at least one value");
  for (double l : lambdas)
    if (!(l > 0.0))
      throw DataError("lambda sweep values must be positive");

  const GramCache cache = build_gram_cache(system);
  std::vector<double> sorted = lambdas;
  std::sort(sorted.begin(), sorted.end());

  std::vector<SweepRow> rows;
  std::vector<double> scaled(prior.lambda_diag.size());
  for (double l : sorted) {
    SweepRow row;
    row.lambda = l;
    try {
      for (std::size_t i = 0; i < scaled.size(); ++i)
        scaled[i] = l * prior.lambda_diag[i];
      const NormalSystem ns =
          normal_from_cache(cache, system, scaled, prior.b_diag, prior.d);
      const SolveReport rep = solve(ns, config);
      row.solve_seconds = rep.solve_seconds;
      row.precision = rep.precision;
      row.mean_residual_px = residual_stats(system, rep.x).global_mean;
      const auto solution = unpack_solution(system, rep.x);
      std::vector<TransformParams> params;
      params.reserve(tiles_in_order.size());
      for (const TileSpec &t : tiles_in_order)
        params.push_back(solution.at(t.tile_id));
      row.mean_deformation_ratio =
          deformation_ratios(tiles_in_order, params, samples_per_edge).mean;
      row.ok = true;
      row.status = rep.status;
    } catch (const std::exception &e) {
      row.ok = false;
      row.status = e.what();
      row.mean_deformation_ratio = std::numeric_limits<double>::quiet_NaN();
      row.mean_residual_px = std::numeric_limits<double>::quiet_NaN();
      row.precision = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace montage
