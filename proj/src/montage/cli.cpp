#include "montage/cli.hpp"

#include "montage/errors.hpp"
#include "montage/io.hpp"
#include "montage/pipeline.hpp"
#include "montage/synth.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace montage {

namespace {

struct LambdaFlags {
  double base = 1.0;
  std::optional<double> translation, linear, quadratic, cubic;
  std::vector<std::string> tile_values;    // id=value
  std::vector<std::string> section_values; // z=value
  std::vector<std::string> freeze_tiles;
  std::vector<int> freeze_sections;
  double frozen_multiplier = 1e8;
};

std::pair<std::string, double> split_assignment(const std::string &s,
                                                const char *what) {
  const auto eq = s.rfind('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
    throw DataError(std::string(what) + " override must look like key=value: '" +
                    s + "'");
  try {
    return {s.substr(0, eq), std::stod(s.substr(eq + 1))};
  } catch (const std::exception &) {
    throw DataError(std::string(what) + " override has a bad value: '" + s + "'");
  }
}

LambdaSpec lambda_from_flags(const LambdaFlags &f) {
  LambdaSpec spec;
  spec.default_value = f.base;
  spec.frozen_multiplier = f.frozen_multiplier;
  if (f.translation)
    spec.per_class[ParamClass::Translation] = *f.translation;
  if (f.linear)
    spec.per_class[ParamClass::Linear] = *f.linear;
  if (f.quadratic)
    spec.per_class[ParamClass::Quadratic] = *f.quadratic;
  if (f.cubic)
    spec.per_class[ParamClass::Cubic] = *f.cubic;
  for (const std::string &s : f.tile_values) {
    const auto [id, v] = split_assignment(s, "per-tile lambda");
    spec.per_tile[id] = LambdaSpec::fixed_value(v);
  }
  for (const std::string &s : f.section_values) {
    const auto [z, v] = split_assignment(s, "per-section lambda");
    spec.per_section[std::stoi(z)] = LambdaSpec::fixed_value(v);
  }
  for (const std::string &id : f.freeze_tiles)
    spec.per_tile[id] = LambdaSpec::frozen();
  for (int z : f.freeze_sections)
    spec.per_section[z] = LambdaSpec::frozen();
  return spec;
}

void add_lambda_flags(CLI::App *cmd, LambdaFlags &f, bool base_required) {
  auto *base = cmd->add_option("--lambda", f.base,
                               "Default regularization strength");
  if (base_required)
    base->required();
  cmd->add_option("--lambda-translation", f.translation,
                  "Override for translation parameters");
  cmd->add_option("--lambda-linear", f.linear,
                  "Override for linear parameters");
  cmd->add_option("--lambda-quadratic", f.quadratic,
                  "Override for quadratic parameters");
  cmd->add_option("--lambda-cubic", f.cubic, "Override for cubic parameters");
  cmd->add_option("--lambda-tile", f.tile_values,
                  "Per-tile override, tile_id=value (repeatable)");
  cmd->add_option("--lambda-section", f.section_values,
                  "Per-section override, z=value (repeatable)");
  cmd->add_option("--freeze-tile", f.freeze_tiles,
                  "Pin a tile to its prior (repeatable)");
  cmd->add_option("--freeze-section", f.freeze_sections,
                  "Pin a whole section to its prior (repeatable)");
  cmd->add_option("--frozen-multiplier", f.frozen_multiplier,
                  "Lambda multiplier applied to frozen tiles/sections");
}

struct DatasetFlags {
  std::string tiles, matches;
  std::optional<std::string> priors;
};

void add_dataset_flags(CLI::App *cmd, DatasetFlags &f) {
  cmd->add_option("--tiles", f.tiles, "Tiles JSON file")->required();
  cmd->add_option("--matches", f.matches, "Matches JSON file")->required();
  cmd->add_option("--priors", f.priors,
                  "Transforms JSON with per-tile starting values");
}

struct SolveFlags {
  std::string model = "affine";
  std::string backend = "direct";
  std::string prior = "rigid";
  double tol = 1e-10;
  std::int64_t max_iter = 0;
  int restart = 50;
  std::int64_t min_matches = 2;
  std::int64_t max_matches = 0;
  std::vector<std::string> fix;
  int samples_per_edge = 8;
};

void add_solve_flags(CLI::App *cmd, SolveFlags &f) {
  cmd->add_option("--model", f.model, "translation|affine|poly2|poly3")
      ->check(CLI::IsMember({"translation", "affine", "poly2", "poly3"}));
  cmd->add_option("--backend", f.backend, "direct|cg|bicgstab|gmres")
      ->check(CLI::IsMember({"direct", "cg", "bicgstab", "gmres"}));
  cmd->add_option("--prior", f.prior,
                  "rigid (estimate) or file (use --priors transforms)")
      ->check(CLI::IsMember({"rigid", "file"}));
  cmd->add_option("--tol", f.tol, "Iterative relative residual target");
  cmd->add_option("--max-iter", f.max_iter, "Iteration cap (0 = 10n)");
  cmd->add_option("--restart", f.restart, "GMRES restart length");
  cmd->add_option("--min-matches", f.min_matches,
                  "Drop pairs with fewer point matches");
  cmd->add_option("--max-matches", f.max_matches,
                  "Subsample pairs above this count (0 = keep all)");
  cmd->add_option("--fix", f.fix,
                  "Fix a tile at its prior value or the identity (repeatable)");
  cmd->add_option("--samples-per-edge", f.samples_per_edge,
                  "Boundary samples per edge for polynomial areas");
}

SolveOptions make_options(const SolveFlags &sf, const LambdaFlags &lf) {
  SolveOptions opts;
  opts.model = *model_from_name(sf.model);
  opts.lambda = lambda_from_flags(lf);
  opts.solver.backend = *backend_from_name(sf.backend);
  opts.solver.tol = sf.tol;
  opts.solver.max_iter = sf.max_iter;
  opts.solver.restart = sf.restart;
  opts.prior_source =
      sf.prior == "file" ? PriorSource::File : PriorSource::Rigid;
  opts.min_matches = sf.min_matches;
  opts.max_matches = sf.max_matches;
  opts.fix = sf.fix;
  opts.samples_per_edge = sf.samples_per_edge;
  return opts;
}

io::Dataset load_with_warnings(const DatasetFlags &f) {
  std::vector<std::string> warnings;
  io::Dataset ds = io::load_dataset(f.tiles, f.matches, f.priors, &warnings);
  for (const std::string &w : warnings)
    std::cerr << "warning: " << w << '\n';
  return ds;
}

void print_notes(const std::vector<std::string> &notes) {
  for (const std::string &n : notes)
    std::cerr << "note: " << n << '\n';
}

std::vector<double> sweep_values(double lo, double hi, int steps,
                                 const std::vector<double> &explicit_values) {
  if (!explicit_values.empty())
    return explicit_values;
  if (!(lo > 0.0) || !(hi > lo) || steps < 2)
    throw DataError("sweep needs --lambdas or 0 < --lambda-min < --lambda-max "
                    "with --steps >= 2");
  std::vector<double> out;
  const double l0 = std::log10(lo);
  const double l1 = std::log10(hi);
  for (int i = 0; i < steps; ++i)
    out.push_back(std::pow(10.0, l0 + (l1 - l0) * i / (steps - 1)));
  return out;
}

} // namespace

int cli_dispatch(const std::vector<std::string> &args) {
  if (const char *env = std::getenv("MONTAGE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0)
      omp_set_num_threads(n);
  }

  CLI::App app{"Joint tile registration: regularized sparse least squares "
               "over per-tile transforms"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP thread count");

  // --- solve ---
  auto *solve_cmd = app.add_subcommand(
      "solve", "Solve the regularized system and write transforms");
  DatasetFlags solve_ds;
  SolveFlags solve_sf;
  LambdaFlags solve_lf;
  std::string solve_out, solve_metrics;
  add_dataset_flags(solve_cmd, solve_ds);
  add_solve_flags(solve_cmd, solve_sf);
  add_lambda_flags(solve_cmd, solve_lf, /*base_required=*/true);
  solve_cmd->add_option("--output", solve_out, "Output transforms JSON")
      ->required();
  solve_cmd->add_option("--metrics", solve_metrics, "Metrics sidecar JSON");

  // --- rigid ---
  auto *rigid_cmd = app.add_subcommand(
      "rigid", "Estimate the rigid approximation and write it as transforms");
  DatasetFlags rigid_ds;
  std::string rigid_out, rigid_metrics;
  add_dataset_flags(rigid_cmd, rigid_ds);
  rigid_cmd->add_option("--output", rigid_out, "Output transforms JSON")
      ->required();
  rigid_cmd->add_option("--metrics", rigid_metrics, "Metrics sidecar JSON");

  // --- sweep ---
  auto *sweep_cmd = app.add_subcommand(
      "sweep", "Solve across a lambda range and write a CSV");
  DatasetFlags sweep_ds;
  SolveFlags sweep_sf;
  LambdaFlags sweep_lf;
  std::string sweep_out;
  double sweep_lo = 0.0, sweep_hi = 0.0;
  int sweep_steps = 0;
  std::vector<double> sweep_explicit;
  add_dataset_flags(sweep_cmd, sweep_ds);
  add_solve_flags(sweep_cmd, sweep_sf);
  add_lambda_flags(sweep_cmd, sweep_lf, /*base_required=*/false);
  sweep_cmd->add_option("--lambda-min", sweep_lo, "Smallest lambda");
  sweep_cmd->add_option("--lambda-max", sweep_hi, "Largest lambda");
  sweep_cmd->add_option("--steps", sweep_steps, "Log-spaced step count");
  sweep_cmd->add_option("--lambdas", sweep_explicit,
                        "Explicit lambda values (overrides the range)");
  sweep_cmd->add_option("--output", sweep_out, "Output CSV")->required();

  // --- synth ---
  auto *synth_cmd = app.add_subcommand(
      "synth", "Generate a synthetic dataset with known ground truth");
  SynthConfig synth_cfg;
  std::string synth_prefix, synth_model = "affine";
  synth_cmd->add_option("--grid-rows", synth_cfg.grid_rows, "Grid rows");
  synth_cmd->add_option("--grid-cols", synth_cfg.grid_cols, "Grid columns");
  synth_cmd->add_option("--sections", synth_cfg.sections, "Section count");
  synth_cmd->add_option("--tile-w", synth_cfg.tile_w, "Tile width [px]");
  synth_cmd->add_option("--tile-h", synth_cfg.tile_h, "Tile height [px]");
  synth_cmd->add_option("--overlap", synth_cfg.overlap_fraction,
                        "Overlap fraction in (0,1)");
  synth_cmd->add_option("--matches-per-pair", synth_cfg.matches_per_pair,
                        "Point matches per tile pair");
  synth_cmd->add_option("--noise-sigma", synth_cfg.noise_sigma_px,
                        "Per-side isotropic match noise [px]");
  synth_cmd->add_option("--truth-model", synth_model,
                        "translation|affine|poly2|poly3");
  synth_cmd->add_option("--trans-jitter", synth_cfg.trans_jitter_px,
                        "Placement jitter [px]");
  synth_cmd->add_option("--rot-jitter", synth_cfg.rot_jitter_deg,
                        "Rotation jitter [deg]");
  synth_cmd->add_option("--linear-jitter", synth_cfg.linear_jitter,
                        "Additive jitter on the 2x2 linear entries");
  synth_cmd->add_option("--quad-jitter", synth_cfg.quad_jitter_px,
                        "Peak quadratic corner displacement [px]");
  synth_cmd->add_option("--cubic-jitter", synth_cfg.cubic_jitter_px,
                        "Peak cubic corner displacement [px]");
  synth_cmd->add_option("--section-drift", synth_cfg.section_drift_px,
                        "Per-section drift scale [px]");
  synth_cmd->add_flag("--cross-z2", synth_cfg.cross_z2,
                      "Also match sections two apart");
  synth_cmd->add_option("--seed", synth_cfg.seed, "RNG seed");
  synth_cmd->add_option("--out-prefix", synth_prefix, "Output path prefix")
      ->required();

  // --- export-system ---
  auto *export_cmd = app.add_subcommand(
      "export-system", "Write the normal equations in Matrix Market format");
  DatasetFlags export_ds;
  SolveFlags export_sf;
  LambdaFlags export_lf;
  std::string export_prefix;
  add_dataset_flags(export_cmd, export_ds);
  add_solve_flags(export_cmd, export_sf);
  add_lambda_flags(export_cmd, export_lf, /*base_required=*/true);
  export_cmd->add_option("--out-prefix", export_prefix, "Output path prefix")
      ->required();

  // --- report ---
  auto *report_cmd = app.add_subcommand(
      "report", "Metrics of an existing solution against a dataset");
  DatasetFlags report_ds;
  std::string report_transforms, report_vector, report_model = "affine";
  std::string report_metrics, report_out;
  add_dataset_flags(report_cmd, report_ds);
  report_cmd->add_option("--transforms", report_transforms,
                         "Solution transforms JSON");
  report_cmd->add_option("--solution-vector", report_vector,
                         "Imported solution vector (one value per line)");
  report_cmd->add_option("--model", report_model,
                         "Model of an imported solution vector");
  report_cmd->add_option("--metrics", report_metrics, "Metrics sidecar JSON");
  report_cmd->add_option("--output", report_out,
                         "Write the imported vector as transforms JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (threads > 0)
    omp_set_num_threads(threads);

  try {
    if (*solve_cmd) {
      const io::Dataset ds = load_with_warnings(solve_ds);
      const SolveOptions opts = make_options(solve_sf, solve_lf);
      const SolveResult result = solve_dataset(ds, opts);
      print_notes(result.notes);
      io::save_transforms(solve_out, result.transforms);
      if (!solve_metrics.empty())
        io::write_metrics(solve_metrics, result.report,
                          result.stats.global_mean,
                          {{"mean_deformation_ratio", result.deformation.mean}});
      std::cout << "solved " << result.transforms.size() << " tiles: mean residual "
                << io::fmt_double(result.stats.global_mean)
                << " px, precision " << io::fmt_double(result.report.precision)
                << ", mean deformation "
                << io::fmt_double(result.deformation.mean) << '\n';
      return 0;
    }

    if (*rigid_cmd) {
      const io::Dataset ds = load_with_warnings(rigid_ds);
      std::vector<std::string> notes;
      const ConnectivityReport conn =
          validate_connectivity(ds.tiles, ds.matches);
      if (conn.components.size() > 1)
        throw DataError("tile graph is not connected; solve components "
                        "separately");
      const RigidApproxSolution rigid =
          estimate_rigid_prior(ds.tiles, ds.matches);
      std::map<std::string, TransformParams> transforms;
      for (std::size_t i = 0; i < rigid.tile_order.size(); ++i)
        transforms[rigid.tile_order[i]] = rigid_as_affine(rigid, i);
      io::save_transforms(rigid_out, transforms);
      const ReportResult rep =
          report_solution(ds, ModelKind::Affine, transforms);
      if (!rigid_metrics.empty()) {
        SolveReport sr;
        sr.nnz = rep.nnz;
        sr.point_matches = rep.point_matches;
        sr.status = "rigid";
        io::write_metrics(rigid_metrics, sr, rep.stats.global_mean,
                          {{"mean_deformation_ratio", rep.deformation.mean}});
      }
      double max_defect = 0.0;
      for (double d : rigid.similarity_defect)
        max_defect = std::max(max_defect, d);
      std::cout << "rigid approximation for " << transforms.size()
                << " tiles: mean residual "
                << io::fmt_double(rep.stats.global_mean)
                << " px, max off-similarity defect "
                << io::fmt_double(max_defect) << '\n';
      return 0;
    }

    if (*sweep_cmd) {
      const io::Dataset ds = load_with_warnings(sweep_ds);
      const SolveOptions opts = make_options(sweep_sf, sweep_lf);
      const PreparedSystem prep = prepare_system(ds, opts);
      print_notes(prep.notes);
      const std::vector<double> lambdas =
          sweep_values(sweep_lo, sweep_hi, sweep_steps, sweep_explicit);
      const std::vector<SweepRow> rows =
          sweep_lambda(prep.system, prep.prior, lambdas, opts.solver,
                       prep.tiles_in_order, opts.samples_per_edge);
      io::write_sweep_csv(sweep_out, rows);
      std::cout << "swept " << rows.size() << " lambda values -> " << sweep_out
                << '\n';
      return 0;
    }

    if (*synth_cmd) {
      const auto kind = model_from_name(synth_model);
      if (!kind)
        throw DataError("unknown truth model '" + synth_model + "'");
      synth_cfg.truth_model = *kind;
      const SynthDataset ds = synth_cfg.sections > 1
                                  ? generate_volume(synth_cfg)
                                  : generate_montage(synth_cfg);
      io::save_tiles(synth_prefix + "_tiles.json", ds.tiles);
      io::save_matches(synth_prefix + "_matches.json", ds.matches);
      io::save_transforms(synth_prefix + "_truth.json", ds.truth.transforms);
      std::cout << "generated " << ds.tiles.size() << " tiles, "
                << ds.matches.size() << " match sets -> " << synth_prefix
                << "_*.json\n";
      return 0;
    }

    if (*export_cmd) {
      const io::Dataset ds = load_with_warnings(export_ds);
      const SolveOptions opts = make_options(export_sf, export_lf);
      const PreparedSystem prep = prepare_system(ds, opts);
      print_notes(prep.notes);
      const NormalSystem ns = normal_from_cache(
          build_gram_cache(prep.system), prep.system, prep.prior.lambda_diag,
          prep.prior.b_diag, prep.prior.d);
      io::write_matrix_market(export_prefix + "_A.mtx", ns.a_tilde);
      io::write_vector(export_prefix + "_b.txt", ns.b_tilde);
      // Column layout sidecar: tiles in column order, coeffs_per_tile each.
      io::save_tiles(export_prefix + "_columns.json", prep.tiles_in_order);
      std::cout << "exported " << ns.a_tilde.rows << "x" << ns.a_tilde.cols
                << " system (" << ns.a_tilde.nnz() << " nnz) -> "
                << export_prefix << "_*\n";
      return 0;
    }

    if (*report_cmd) {
      const io::Dataset ds = load_with_warnings(report_ds);
      const auto kind = model_from_name(report_model);
      if (!kind)
        throw DataError("unknown model '" + report_model + "'");
      std::map<std::string, TransformParams> transforms;
      if (!report_transforms.empty()) {
        transforms = io::load_transforms(report_transforms);
      } else if (!report_vector.empty()) {
        std::vector<std::string> notes;
        const ConnectivityReport conn =
            validate_connectivity(ds.tiles, ds.matches);
        if (conn.components.size() > 1)
          throw DataError("tile graph is not connected");
        std::vector<TileSpec> tiles;
        std::set<std::string> keep(conn.components[0].begin(),
                                   conn.components[0].end());
        for (const TileSpec &t : ds.tiles)
          if (keep.count(t.tile_id))
            tiles.push_back(t);
        const SparseSystem sys = build_system(tiles, ds.matches, *kind, 1, 0);
        const std::vector<double> x = io::read_vector(report_vector);
        transforms = unpack_solution(sys, x);
      } else {
        throw DataError("report needs --transforms or --solution-vector");
      }
      const ReportResult rep = report_solution(ds, *kind, transforms);
      if (!report_out.empty())
        io::save_transforms(report_out, transforms);
      if (!report_metrics.empty()) {
        SolveReport sr;
        sr.nnz = rep.nnz;
        sr.point_matches = rep.point_matches;
        sr.status = "report";
        io::write_metrics(report_metrics, sr, rep.stats.global_mean,
                          {{"mean_deformation_ratio", rep.deformation.mean}});
      }
      std::cout << "solution metrics: mean residual "
                << io::fmt_double(rep.stats.global_mean)
                << " px, mean deformation "
                << io::fmt_double(rep.deformation.mean) << '\n';
      return 0;
    }
  } catch (const DataError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const SolverError &e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

} // namespace montage
