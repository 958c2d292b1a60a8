#include "montage/pipeline.hpp"

#include "montage/errors.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace montage {

namespace {

using Clock = std::chrono::steady_clock;

// Drops orphans, requires a single connected component, and returns the
// surviving tiles.
std::vector<TileSpec> connected_tiles(const io::Dataset &dataset,
                                      std::vector<std::string> *notes) {
  const ConnectivityReport report =
      validate_connectivity(dataset.tiles, dataset.matches);
  if (!report.orphans.empty() && notes)
    notes->push_back("excluded " + std::to_string(report.orphans.size()) +
                     " orphan tile(s) without matches");
  if (report.components.size() > 1) {
    std::string sizes;
    for (const auto &c : report.components)
      sizes += (sizes.empty() ? "" : ", ") + std::to_string(c.size());
    throw DataError("tile graph splits into " +
                    std::to_string(report.components.size()) +
                    " connected components (sizes " + sizes +
                    "); solve them separately");
  }
  std::set<std::string> keep(report.components[0].begin(),
                             report.components[0].end());
  std::vector<TileSpec> tiles;
  for (const TileSpec &t : dataset.tiles)
    if (keep.count(t.tile_id))
      tiles.push_back(t);
  return tiles;
}

std::vector<TileSpec>
tiles_for_order(const std::vector<TileSpec> &tiles,
                const std::vector<std::string> &order) {
  std::map<std::string, const TileSpec *> by_id;
  for (const TileSpec &t : tiles)
    by_id[t.tile_id] = &t;
  std::vector<TileSpec> out;
  out.reserve(order.size());
  for (const std::string &id : order) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw DataError("no tile metadata for '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

PriorVector make_prior(const io::Dataset &dataset, const SolveOptions &opts,
                       const std::vector<TileSpec> &tiles,
                       const std::vector<TileSpec> &tiles_in_order,
                       std::vector<std::string> *notes) {
  if (opts.prior_source == PriorSource::File) {
    if (dataset.priors.empty())
      throw DataError("--prior file requires a priors file with one "
                      "transform per tile");
    PriorVector prior;
    const int nc = coeffs_per_tile(opts.model);
    prior.d.assign(tiles_in_order.size() * static_cast<std::size_t>(nc), 0.0);
    prior.b_diag.assign(prior.d.size(), 1.0);
    for (std::size_t i = 0; i < tiles_in_order.size(); ++i) {
      auto it = dataset.priors.find(tiles_in_order[i].tile_id);
      if (it == dataset.priors.end())
        throw DataError("priors file is missing tile '" +
                        tiles_in_order[i].tile_id + "'");
      const TransformParams t = promote(it->second, opts.model);
      for (int c = 0; c < nc; ++c)
        prior.d[i * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)] =
            t.coeffs[static_cast<std::size_t>(c)];
    }
    prior.lambda_diag = expand_lambda(opts.lambda, tiles_in_order, opts.model);
    return prior;
  }

  const RigidApproxSolution rigid =
      estimate_rigid_prior(tiles, dataset.matches);
  if (notes) {
    std::int64_t degenerate = 0;
    for (bool d : rigid.degenerate)
      degenerate += d ? 1 : 0;
    if (degenerate > 0)
      notes->push_back(std::to_string(degenerate) +
                       " tile(s) fell back to the identity rotation in the "
                       "rigid prior");
  }
  return assemble_prior(rigid, opts.model, opts.lambda, tiles_in_order);
}

} // namespace

PreparedSystem prepare_system(const io::Dataset &dataset,
                              const SolveOptions &opts) {
  PreparedSystem prep;
  const auto t0 = Clock::now();
  const std::vector<TileSpec> tiles = connected_tiles(dataset, &prep.notes);

  prep.system = build_system(tiles, dataset.matches, opts.model,
                             opts.min_matches, opts.max_matches);
  if (prep.system.dropped_pairs > 0)
    prep.notes.push_back("dropped " + std::to_string(prep.system.dropped_pairs) +
                         " pair(s) below min_matches");
  if (prep.system.subsampled_pairs > 0)
    prep.notes.push_back("subsampled " +
                         std::to_string(prep.system.subsampled_pairs) +
                         " pair(s) above max_matches");

  if (!opts.fix.empty()) {
    std::map<std::string, TransformParams> fixed;
    for (const std::string &id : opts.fix) {
      auto it = dataset.priors.find(id);
      fixed[id] = it != dataset.priors.end()
                      ? promote(it->second, opts.model)
                      : TransformParams::identity(opts.model);
    }
    prep.system = fix_tiles(prep.system, fixed);
  }

  prep.tiles_in_order = tiles_for_order(tiles, prep.system.tile_order);
  prep.prior =
      make_prior(dataset, opts, tiles, prep.tiles_in_order, &prep.notes);
  prep.assembly_seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  return prep;
}

SolveResult solve_dataset(const io::Dataset &dataset, const SolveOptions &opts) {
  PreparedSystem prep = prepare_system(dataset, opts);

  const auto t0 = Clock::now();
  const NormalSystem ns =
      normal_from_cache(build_gram_cache(prep.system), prep.system,
                        prep.prior.lambda_diag, prep.prior.b_diag, prep.prior.d);
  prep.assembly_seconds +=
      std::chrono::duration<double>(Clock::now() - t0).count();

  SolveResult result;
  result.report = solve(ns, opts.solver);
  result.report.assembly_seconds = prep.assembly_seconds;
  result.report.nnz = prep.system.a.nnz();
  result.report.point_matches = prep.system.point_match_count;
  result.notes = prep.notes;

  result.transforms = unpack_solution(prep.system, result.report.x);
  result.stats = residual_stats(prep.system, result.report.x);

  // Deformation over every tile, fixed ones included.
  std::vector<TileSpec> all_tiles = prep.tiles_in_order;
  for (const auto &[id, t] : prep.system.fixed) {
    for (const TileSpec &ts : dataset.tiles)
      if (ts.tile_id == id) {
        all_tiles.push_back(ts);
        break;
      }
  }
  std::sort(all_tiles.begin(), all_tiles.end(),
            [](const TileSpec &a, const TileSpec &b) {
              return a.tile_id < b.tile_id;
            });
  std::vector<TransformParams> params;
  params.reserve(all_tiles.size());
  for (const TileSpec &t : all_tiles)
    params.push_back(result.transforms.at(t.tile_id));
  result.deformation =
      deformation_ratios(all_tiles, params, opts.samples_per_edge);
  result.tiles_in_order = std::move(all_tiles);
  return result;
}

ReportResult report_solution(const io::Dataset &dataset, ModelKind model,
                             const std::map<std::string, TransformParams> &t,
                             std::int64_t min_matches,
                             std::int64_t max_matches) {
  ReportResult out;
  std::vector<std::string> notes;
  const std::vector<TileSpec> tiles = connected_tiles(dataset, &notes);
  const SparseSystem system =
      build_system(tiles, dataset.matches, model, min_matches, max_matches);
  const std::vector<double> x = pack_solution(system, t);
  out.stats = residual_stats(system, x);
  out.nnz = system.a.nnz();
  out.point_matches = system.point_match_count;
  out.tiles_in_order = tiles_for_order(tiles, system.tile_order);
  std::vector<TransformParams> params;
  params.reserve(out.tiles_in_order.size());
  for (const TileSpec &tile : out.tiles_in_order)
    params.push_back(promote(t.at(tile.tile_id), model));
  out.deformation = deformation_ratios(out.tiles_in_order, params);
  return out;
}

} // namespace montage
