// Acceptance suite: end-to-end checks at reduced scale, one printed
// PASS/FAIL line per criterion.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "montage/cli.hpp"
#include "montage/io.hpp"
#include "montage/kernels.hpp"
#include "montage/pipeline.hpp"
#include "montage/regularize.hpp"
#include "montage/rigid_prior.hpp"
#include "montage/solvers.hpp"
#include "montage/synth.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "helpers.hpp"

using namespace montage;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void line(int criterion, bool ok, const char *fmt, ...) {
  std::printf("[criterion %2d] %s ", criterion, ok ? "PASS" : "FAIL");
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
}

io::Dataset as_dataset(const SynthDataset &ds) {
  io::Dataset out;
  out.tiles = ds.tiles;
  out.matches = ds.matches;
  return out;
}

// Serializes pipeline outputs through the real file writers and collects
// the bytes, so determinism is checked on what users actually see.
struct OutputDump {
  testhelp::TempDir dir{"acceptance9"};
  std::string bytes;
  int counter = 0;

  std::string next() { return dir.file("out" + std::to_string(counter++)); }
  void slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    bytes += ss.str();
  }
  void add_matches(const std::vector<MatchSet> &m) {
    const std::string p = next();
    io::save_matches(p, m);
    slurp(p);
  }
  void add_transforms(const std::map<std::string, TransformParams> &t) {
    const std::string p = next();
    io::save_transforms(p, t);
    slurp(p);
  }
  void add_vector(std::span<const double> v) {
    const std::string p = next();
    io::write_vector(p, v);
    slurp(p);
  }
  void add_sweep(const std::vector<SweepRow> &rows) {
    const std::string p = next();
    io::write_sweep_csv(p, rows);
    slurp(p);
  }
};

SynthConfig montage_500() {
  SynthConfig cfg;
  cfg.grid_rows = 22;
  cfg.grid_cols = 23; // 506 tiles
  cfg.noise_sigma_px = 1.0;
  cfg.matches_per_pair = 12;
  cfg.seed = 2024;
  return cfg;
}

SynthConfig volume_10x3x3() {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 3;
  cfg.sections = 10;
  cfg.noise_sigma_px = 0.5;
  cfg.matches_per_pair = 12;
  cfg.linear_jitter = 0.01;
  cfg.seed = 77;
  return cfg;
}

double tile_angle_deg(const TransformParams &t) {
  const int k = basis_size(t.kind);
  const double m1 = t.coeffs[0];
  const double m2 = t.coeffs[1];
  const double m3 = t.coeffs[static_cast<std::size_t>(k)];
  const double m4 = t.coeffs[static_cast<std::size_t>(k) + 1];
  return std::atan2(m3 - m2, m1 + m4) * 180.0 / std::numbers::pi;
}

} // namespace

TEST_CASE("criterion 1: noiseless recovery") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 4;
  cfg.noise_sigma_px = 0.0;
  cfg.rot_jitter_deg = 2.0;
  cfg.linear_jitter = 1e-5;
  cfg.seed = 11;
  const SynthDataset ds = generate_montage(cfg);

  SolveOptions opts;
  opts.model = ModelKind::Affine;
  opts.lambda.default_value = 1e-6;
  opts.solver.backend = Backend::Direct;

  const auto t0 = Clock::now();
  const SolveResult result = solve_dataset(as_dataset(ds), opts);
  const double secs = seconds_since(t0);
  const GaugeAlignment align = gauge_align(ds.tiles, result.transforms, ds.truth);
  const double residual = result.stats.global_mean;

  const bool ok = align.rms_px <= 1e-6 && residual <= 1e-6 && secs < 1.0;
  line(1, ok,
       "noiseless 4x4 recovery: rms corner %.3g px (<= 1e-6), mean residual "
       "%.3g px (<= 1e-6), %.3f s (< 1)",
       align.rms_px, residual, secs);
  CHECK(align.rms_px <= 1e-6);
  CHECK(residual <= 1e-6);
  CHECK(secs < 1.0);
}

TEST_CASE("criterion 2: dense least-squares oracle on small systems") {
  bool all_ok = true;
  double worst = 0.0;
  for (auto [rows, cols] :
       {std::pair{1, 2}, {1, 3}, {2, 2}, {2, 3}, {1, 6}}) {
    SynthConfig cfg;
    cfg.grid_rows = rows;
    cfg.grid_cols = cols;
    cfg.tile_w = cfg.tile_h = 400.0;
    cfg.noise_sigma_px = 0.5;
    cfg.matches_per_pair = 15;
    cfg.seed = 100 + static_cast<std::uint64_t>(rows * 10 + cols);
    const SynthDataset ds = generate_montage(cfg);

    // No regularization: fix the first tile, solve the rest.
    SparseSystem sys = build_system(ds.tiles, ds.matches, ModelKind::Affine, 1, 0);
    sys = fix_tiles(sys, {{sys.tile_order.front(),
                           TransformParams::identity(ModelKind::Affine)}});
    const std::vector<double> zero(static_cast<std::size_t>(sys.n()), 0.0);
    const std::vector<double> one(static_cast<std::size_t>(sys.n()), 1.0);
    const NormalSystem ns = build_normal_equations(sys, zero, one, zero);
    const SolveReport rep = solve_direct(ns);

    // Brute-force oracle: dense rectangular least squares via QR.
    const auto dense = csr_to_dense(sys.a);
    Eigen::MatrixXd a(sys.m(), sys.n());
    Eigen::VectorXd b(sys.m());
    for (std::int64_t r = 0; r < sys.m(); ++r) {
      b[r] = sys.b[static_cast<std::size_t>(r)];
      for (std::int64_t c = 0; c < sys.n(); ++c)
        a(r, c) = dense[static_cast<std::size_t>(r * sys.n() + c)];
    }
    const Eigen::VectorXd x_oracle = a.colPivHouseholderQr().solve(b);
    double diff = 0.0, scale = 0.0;
    for (std::int64_t i = 0; i < sys.n(); ++i) {
      diff = std::max(diff, std::abs(rep.x[static_cast<std::size_t>(i)] -
                                     x_oracle[i]));
      scale = std::max(scale, std::abs(x_oracle[i]));
    }
    const double rel = diff / scale;
    worst = std::max(worst, rel);
    all_ok = all_ok && rel <= 1e-8;
    CHECK(rel <= 1e-8);
  }
  line(2, all_ok,
       "sparse solve matches the dense QR oracle on <= 6-tile systems: worst "
       "relative difference %.3g (<= 1e-8)",
       worst);
}

TEST_CASE("criterion 3: backend agreement and precision ordering") {
  const SynthDataset ds = generate_montage(montage_500());

  SolveOptions opts;
  opts.lambda.default_value = 1.0;
  const PreparedSystem prep = prepare_system(as_dataset(ds), opts);
  const NormalSystem ns =
      normal_from_cache(build_gram_cache(prep.system), prep.system,
                        prep.prior.lambda_diag, prep.prior.b_diag, prep.prior.d);

  const SolveReport direct = solve_direct(ns);
  const double res_direct = residual_stats(prep.system, direct.x).global_mean;

  bool ok = direct.precision <= 1e-9;
  double worst_it_precision = 0.0, worst_res_gap = 0.0;
  for (Backend backend : {Backend::CG, Backend::BiCGSTAB, Backend::GMRES}) {
    SolverConfig cfg;
    cfg.backend = backend; // default tol 1e-10
    const SolveReport it = solve_iterative(ns, cfg);
    const double res_it = residual_stats(prep.system, it.x).global_mean;
    worst_it_precision = std::max(worst_it_precision, it.precision);
    worst_res_gap = std::max(worst_res_gap, std::abs(res_it - res_direct));
    ok = ok && it.precision <= 1e-6 && direct.precision <= it.precision &&
         std::abs(res_it - res_direct) <= 1e-4;
    CHECK(it.precision <= 1e-6);
    CHECK(direct.precision <= it.precision);
    CHECK(std::abs(res_it - res_direct) <= 1e-4);
  }
  CHECK(direct.precision <= 1e-9);
  line(3, ok,
       "506-tile montage: direct precision %.3g (<= 1e-9), worst iterative "
       "%.3g (<= 1e-6), direct <= iterative, residual gap %.3g px (<= 1e-4)",
       direct.precision, worst_it_precision, worst_res_gap);
}

TEST_CASE("criterion 4: rigid prior accuracy under large rotations") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 4;
  cfg.noise_sigma_px = 0.0;
  cfg.rot_jitter_deg = 15.0;
  cfg.trans_jitter_px = 15.0;
  cfg.linear_jitter = 0.0;
  cfg.seed = 44;
  const SynthDataset ds = generate_montage(cfg);
  const RigidApproxSolution rigid = estimate_rigid_prior(ds.tiles, ds.matches);

  const double anchor_angle =
      tile_angle_deg(ds.truth.transforms.at(rigid.anchor));
  double max_angle_err = 0.0, max_det_err = 0.0, max_abs_angle = 0.0;
  for (std::size_t i = 0; i < rigid.tile_order.size(); ++i) {
    const auto &m = rigid.rotation[i];
    const double got = std::atan2(m[2] - m[1], m[0] + m[3]) * 180.0 / std::numbers::pi;
    const double want =
        tile_angle_deg(ds.truth.transforms.at(rigid.tile_order[i])) -
        anchor_angle;
    max_angle_err = std::max(max_angle_err, std::abs(got - want));
    max_abs_angle = std::max(max_abs_angle, std::abs(want));
    max_det_err = std::max(
        max_det_err, std::abs(std::abs(m[0] * m[3] - m[1] * m[2]) - 1.0));
  }
  const bool ok = max_angle_err <= 0.05 && max_det_err <= 1e-9;
  line(4, ok,
       "rigid prior on rotations up to %.1f deg: max angle error %.2e deg "
       "(<= 0.05), max |det - 1| %.2e (<= 1e-9)",
       max_abs_angle, max_angle_err, max_det_err);
  CHECK(max_angle_err <= 0.05);
  CHECK(max_det_err <= 1e-9);
}

TEST_CASE("criterion 5: scale collapse with a fixed tile, cured by the prior") {
  SynthConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 50;
  cfg.noise_sigma_px = 3.0;
  cfg.matches_per_pair = 300;
  cfg.rot_jitter_deg = 0.5;
  cfg.linear_jitter = 1e-3;
  cfg.trans_jitter_px = 2.0;
  cfg.seed = 42;
  const SynthDataset ds = generate_montage(cfg);
  io::Dataset dataset = as_dataset(ds);

  // Fixed anchor, lambda = 0: the classic shrink away from the reference.
  SolveOptions collapse;
  collapse.lambda.default_value = 0.0;
  collapse.fix = {ds.tiles.front().tile_id};
  const SolveResult collapsed = solve_dataset(dataset, collapse);
  std::vector<double> ratios;
  for (const TileSpec &t : ds.tiles) // tile ids sort in column order
    ratios.push_back(
        linear_area_scale(collapsed.transforms.at(t.tile_id)));
  bool monotone = true;
  for (std::size_t i = 1; i < ratios.size(); ++i)
    monotone = monotone && ratios[i] < ratios[i - 1];
  const double last = ratios.back();

  // Same strip with rigid-prior regularization.
  SolveOptions cured;
  cured.lambda.default_value = 1e8;
  const SolveResult healed = solve_dataset(dataset, cured);
  double lo = 2.0, hi = 0.0;
  for (const TileSpec &t : ds.tiles) {
    const double r = linear_area_scale(healed.transforms.at(t.tile_id));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const bool cured_ok = lo >= 0.99 && hi <= 1.01;

  line(5, monotone && last < 0.5 && cured_ok,
       "1x50 strip: fixed-tile areas shrink monotonically to %.2e; "
       "regularized ratios stay in [%.5f, %.5f] (within [0.99, 1.01])",
       last, lo, hi);
  CHECK(monotone);
  CHECK(last < 0.5);
  CHECK(lo >= 0.99);
  CHECK(hi <= 1.01);
}

TEST_CASE("criterion 6: lambda sweep limits on a noisy 500-tile montage") {
  const SynthDataset ds = generate_montage(montage_500());
  SolveOptions opts;
  opts.lambda.default_value = 1.0;
  const PreparedSystem prep = prepare_system(as_dataset(ds), opts);

  std::vector<double> lambdas;
  for (int i = 0; i < 20; ++i)
    lambdas.push_back(std::pow(10.0, -2.0 + 10.0 * i / 19.0)); // 1e-2 .. 1e8

  const auto t0 = Clock::now();
  const std::vector<SweepRow> rows = sweep_lambda(
      prep.system, prep.prior, lambdas, opts.solver, prep.tiles_in_order);
  const double total = seconds_since(t0);

  REQUIRE(rows.size() == 20);
  bool all_ok = true;
  double max_row_seconds = 0.0;
  for (const SweepRow &r : rows) {
    all_ok = all_ok && r.ok;
    max_row_seconds = std::max(max_row_seconds, r.solve_seconds);
  }
  const double hi_dev = std::abs(rows.back().mean_deformation_ratio - 1.0);
  const bool limit_ok = hi_dev <= 1e-3;
  const bool residual_ok =
      rows.front().mean_residual_px <= rows.back().mean_residual_px;
  const bool time_ok = total < 30.0 && max_row_seconds < 1.0;

  line(6, all_ok && limit_ok && residual_ok && time_ok,
       "20-step sweep to 1e8: |deformation - 1| = %.2e (<= 1e-3), residual "
       "%.3f px (smallest lambda) <= %.3f px (largest), slowest solve %.3f s "
       "(< 1), %.2f s total (< 30)",
       hi_dev, rows.front().mean_residual_px, rows.back().mean_residual_px,
       max_row_seconds, total);
  CHECK(all_ok);
  CHECK(limit_ok);
  CHECK(residual_ok);
  CHECK(time_ok);
}

TEST_CASE("criterion 7: joint volume solve lands in the noise band") {
  const SynthDataset ds = generate_volume(volume_10x3x3());
  SolveOptions opts;
  opts.lambda.default_value = 0.1;
  const SolveResult result = solve_dataset(as_dataset(ds), opts);

  const double residual = result.stats.global_mean;
  const bool residual_ok = residual >= 0.3 && residual <= 1.0;

  // Per-section mean deformation.
  std::map<int, std::pair<double, int>> sections;
  for (std::size_t i = 0; i < result.tiles_in_order.size(); ++i) {
    auto &slot = sections[result.tiles_in_order[i].z];
    slot.first += result.deformation.per_tile[i];
    slot.second += 1;
  }
  double lo = 2.0, hi = 0.0;
  for (const auto &[z, slot] : sections) {
    const double mean = slot.first / slot.second;
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  const bool deform_ok = lo >= 0.9 && hi <= 1.1;

  line(7, residual_ok && deform_ok,
       "10-section volume: mean residual %.3f px (in [0.3, 1.0]), section "
       "deformation in [%.4f, %.4f] (within [0.9, 1.1])",
       residual, lo, hi);
  CHECK(residual_ok);
  CHECK(deform_ok);
}

TEST_CASE("criterion 8: freezing a section pins it while neighbors move") {
  const SynthDataset ds = generate_volume(volume_10x3x3());
  SolveOptions opts;
  opts.model = ModelKind::Affine;
  opts.lambda.default_value = 10.0;
  opts.lambda.per_section[5] = LambdaSpec::frozen(); // 10 * 1e8 on section 5
  const PreparedSystem prep = prepare_system(as_dataset(ds), opts);
  const NormalSystem ns =
      normal_from_cache(build_gram_cache(prep.system), prep.system,
                        prep.prior.lambda_diag, prep.prior.b_diag, prep.prior.d);
  const SolveReport rep = solve_direct(ns);

  const int nc = coeffs_per_tile(opts.model);
  double frozen_max = 0.0;
  double neighbor_sum = 0.0;
  int neighbor_count = 0;
  for (std::size_t i = 0; i < prep.tiles_in_order.size(); ++i) {
    double dev = 0.0, scale = 0.0;
    for (int c = 0; c < nc; ++c) {
      const std::size_t at = i * static_cast<std::size_t>(nc) +
                             static_cast<std::size_t>(c);
      dev += (rep.x[at] - prep.prior.d[at]) * (rep.x[at] - prep.prior.d[at]);
      scale += prep.prior.d[at] * prep.prior.d[at];
    }
    const double rel = std::sqrt(dev / scale);
    const int z = prep.tiles_in_order[i].z;
    if (z == 5) {
      frozen_max = std::max(frozen_max, rel);
    } else if (z == 4 || z == 6) {
      neighbor_sum += rel;
      ++neighbor_count;
    }
  }
  const double neighbor_mean = neighbor_sum / neighbor_count;
  const bool ok = frozen_max <= 1e-3 && neighbor_mean >= 10.0 * frozen_max;
  line(8, ok,
       "frozen section deviates %.2e relative (<= 1e-3); unfrozen neighbors "
       "move %.2e, %.0fx more (>= 10x)",
       frozen_max, neighbor_mean, neighbor_mean / frozen_max);
  CHECK(frozen_max <= 1e-3);
  CHECK(neighbor_mean >= 10.0 * frozen_max);
}

TEST_CASE("criterion 9: bit-identical outputs across runs and thread counts") {
  // One pass through the whole pipeline: synthesis, rigid prior, direct and
  // iterative solves, a sweep, and every file writer. The serialized bytes
  // must not depend on the run or the OpenMP thread count.
  auto run_all = [] {
    SynthConfig cfg;
    cfg.grid_rows = 3;
    cfg.grid_cols = 4;
    cfg.sections = 2;
    cfg.noise_sigma_px = 0.8;
    cfg.seed = 314;
    const SynthDataset ds = generate_volume(cfg);

    SolveOptions opts;
    opts.lambda.default_value = 0.5;
    const SolveResult direct = solve_dataset(as_dataset(ds), opts);

    opts.solver.backend = Backend::CG;
    const SolveResult cg = solve_dataset(as_dataset(ds), opts);

    const PreparedSystem prep = prepare_system(as_dataset(ds), opts);
    SolverConfig direct_cfg;
    const std::vector<SweepRow> rows =
        sweep_lambda(prep.system, prep.prior, {1e-2, 1.0, 1e4}, direct_cfg,
                     prep.tiles_in_order);

    OutputDump dump;
    dump.add_matches(ds.matches);
    dump.add_transforms(direct.transforms);
    dump.add_vector(direct.report.x);
    dump.add_vector(cg.report.x);
    dump.add_sweep(rows);
    return dump.bytes;
  };

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const std::string run1 = run_all();
  const std::string run2 = run_all();
  omp_set_num_threads(8);
  const std::string run8 = run_all();
  omp_set_num_threads(saved);

  const bool ok = run1 == run2 && run1 == run8;
  line(9, ok,
       "synth + prior + direct + CG + sweep outputs: %zu bytes, identical "
       "across two runs and thread counts {1, 8}",
       run1.size());
  CHECK(run1 == run2);
  CHECK(run1 == run8);
}

TEST_CASE("criterion 10: 10k-tile montage assembles and solves inside 60 s") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 100;
  cfg.noise_sigma_px = 1.0;
  cfg.matches_per_pair = 10;
  cfg.seed = 123;
  const SynthDataset ds = generate_montage(cfg);
  REQUIRE(ds.tiles.size() == 10000);
  REQUIRE(ds.matches.size() == 19800); // ~2e5 point matches at 10 per pair

  SolveOptions opts;
  opts.lambda.default_value = 0.1;
  const auto t0 = Clock::now();
  const SolveResult result = solve_dataset(as_dataset(ds), opts);
  const double secs = seconds_since(t0);

  const bool ok = secs < 60.0 && result.report.point_matches == 198000;
  line(10, ok,
       "10000 tiles, %lld point matches: assembly %.2f s + solve %.2f s, "
       "%.2f s end to end (< 60)",
       static_cast<long long>(result.report.point_matches),
       result.report.assembly_seconds, result.report.solve_seconds, secs);
  CHECK(secs < 60.0);
  CHECK(result.report.point_matches == 198000);
}
