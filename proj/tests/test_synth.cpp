#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "montage/assembly.hpp"
#include "montage/errors.hpp"
#include "montage/pipeline.hpp"
#include "montage/rigid_prior.hpp"
#include "montage/solvers.hpp"
#include "montage/synth.hpp"

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace montage;

TEST_CASE("a 1x2 noiseless grid produces one exactly consistent pair") {
  SynthConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 2;
  cfg.noise_sigma_px = 0.0;
  const SynthDataset ds = generate_montage(cfg);
  REQUIRE(ds.matches.size() == 1);
  const MatchSet &ms = ds.matches[0];
  REQUIRE(ms.p.size() == static_cast<std::size_t>(cfg.matches_per_pair));
  const TransformParams &tp = ds.truth.transforms.at(ms.p_tile);
  const TransformParams &tq = ds.truth.transforms.at(ms.q_tile);
  for (std::size_t i = 0; i < ms.p.size(); ++i) {
    const Point2 a = apply_transform(tp, ms.p[i]);
    const Point2 b = apply_transform(tq, ms.q[i]);
    CHECK(std::abs(a.x - b.x) <= 1e-10);
    CHECK(std::abs(a.y - b.y) <= 1e-10);
    // Points live inside their tiles.
    CHECK(ms.p[i].x >= 0.0);
    CHECK(ms.p[i].x <= cfg.tile_w);
    CHECK(ms.q[i].y >= 0.0);
    CHECK(ms.q[i].y <= cfg.tile_h);
  }
}

TEST_CASE("a 4x4 grid has 24 adjacent pairs") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 4;
  const SynthDataset ds = generate_montage(cfg);
  CHECK(ds.matches.size() == 24); // 4*3 horizontal + 3*4 vertical
  CHECK(ds.tiles.size() == 16);
  CHECK(ds.truth.transforms.size() == 16);
}

TEST_CASE("noise statistics match the configured sigma") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 4;
  cfg.noise_sigma_px = 0.5;
  cfg.matches_per_pair = 50; // 24 pairs * 50 = 1200 samples
  cfg.seed = 71;
  const SynthDataset ds = generate_montage(cfg);
  // Residual at truth per coordinate is the difference of two independent
  // noise draws through near-rotations: N(0, 2 sigma^2).
  double sum_sq = 0.0;
  std::int64_t count = 0;
  for (const MatchSet &ms : ds.matches) {
    const TransformParams &tp = ds.truth.transforms.at(ms.p_tile);
    const TransformParams &tq = ds.truth.transforms.at(ms.q_tile);
    for (std::size_t i = 0; i < ms.p.size(); ++i) {
      const Point2 a = apply_transform(tp, ms.p[i]);
      const Point2 b = apply_transform(tq, ms.q[i]);
      sum_sq += (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
      count += 2;
    }
  }
  const double sigma_hat =
      std::sqrt(sum_sq / static_cast<double>(count)) / std::sqrt(2.0);
  CHECK(sigma_hat >= 0.85 * cfg.noise_sigma_px);
  CHECK(sigma_hat <= 1.15 * cfg.noise_sigma_px);
}

TEST_CASE("volume cross-section pair counts") {
  SUBCASE("two 1x1 sections give exactly one cross pair") {
    SynthConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 1;
    cfg.sections = 2;
    const SynthDataset ds = generate_volume(cfg);
    CHECK(ds.matches.size() == 1);
    CHECK(ds.tiles.size() == 2);
  }
  SUBCASE("three 2x2 sections give 8 cross pairs") {
    SynthConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 2;
    cfg.sections = 3;
    const SynthDataset ds = generate_volume(cfg);
    std::int64_t cross = 0, within = 0;
    std::int64_t z_of = 0;
    for (const MatchSet &ms : ds.matches) {
      int zp = 0, zq = 0;
      std::sscanf(ms.p_tile.c_str(), "z%d", &zp);
      std::sscanf(ms.q_tile.c_str(), "z%d", &zq);
      (zp == zq ? within : cross) += 1;
      (void)z_of;
    }
    CHECK(cross == 8); // 4 tiles * 2 section boundaries
    CHECK(within == 12);
  }
  SUBCASE("z +/- 2 matches are added on request") {
    SynthConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 1;
    cfg.sections = 3;
    cfg.cross_z2 = true;
    const SynthDataset ds = generate_volume(cfg);
    CHECK(ds.matches.size() == 3); // (0,1) (1,2) (0,2)
  }
  SUBCASE("volume generation needs two sections") {
    SynthConfig cfg;
    cfg.sections = 1;
    CHECK_THROWS_AS(generate_volume(cfg), DataError);
  }
}

TEST_CASE("generation is reproducible bit for bit") {
  SynthConfig cfg;
  cfg.grid_rows = 2;
  cfg.grid_cols = 3;
  cfg.sections = 2;
  cfg.noise_sigma_px = 0.8;
  cfg.seed = 99;
  const SynthDataset a = generate_volume(cfg);
  const SynthDataset b = generate_volume(cfg);
  REQUIRE(a.matches.size() == b.matches.size());
  for (std::size_t i = 0; i < a.matches.size(); ++i) {
    CHECK(a.matches[i].p_tile == b.matches[i].p_tile);
    for (std::size_t j = 0; j < a.matches[i].p.size(); ++j) {
      CHECK(a.matches[i].p[j].x == b.matches[i].p[j].x);
      CHECK(a.matches[i].q[j].y == b.matches[i].q[j].y);
    }
  }
  for (const auto &[id, t] : a.truth.transforms)
    CHECK(t.coeffs == b.truth.transforms.at(id).coeffs);
}

TEST_CASE("grids stay connected") {
  for (auto [rows, cols] : {std::pair{1, 2}, {2, 2}, {3, 5}, {1, 9}}) {
    SynthConfig cfg;
    cfg.grid_rows = rows;
    cfg.grid_cols = cols;
    const SynthDataset ds = generate_montage(cfg);
    const ConnectivityReport rep = validate_connectivity(ds.tiles, ds.matches);
    CHECK(rep.components.size() == 1);
    CHECK(rep.orphans.empty());
  }
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.overlap_fraction = 0.0;
  CHECK_THROWS_AS(generate_montage(cfg), DataError);
  cfg = SynthConfig{};
  cfg.truth_model = ModelKind::RigidApprox;
  CHECK_THROWS_AS(generate_montage(cfg), DataError);
  cfg = SynthConfig{};
  cfg.matches_per_pair = 1;
  CHECK_THROWS_AS(generate_montage(cfg), DataError);
}

TEST_CASE("destroyed overlaps are reported after resampling") {
  // Placement jitter much larger than the 5 px overlap strip; at this seed
  // all ten regeneration attempts leave the pair disjoint.
  SynthConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 2;
  cfg.overlap_fraction = 0.005;
  cfg.trans_jitter_px = 500.0;
  cfg.seed = 1846;
  CHECK_THROWS_AS(generate_montage(cfg), DataError);
}

TEST_CASE("gauge alignment") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 3;
  cfg.seed = 101;
  const SynthDataset ds = generate_montage(cfg);

  SUBCASE("the truth aligns to itself exactly") {
    std::map<std::string, TransformParams> sol = ds.truth.transforms;
    const GaugeAlignment g = gauge_align(ds.tiles, sol, ds.truth);
    CHECK(g.rms_px <= 1e-9);
    CHECK(g.g.coeffs[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.g.coeffs[1] == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("a global rotation is absorbed and reported") {
    const double phi = 5.0 * std::numbers::pi / 180.0;
    const TransformParams rot = TransformParams::rotation_translation(phi, 0, 0);
    std::map<std::string, TransformParams> sol;
    for (const auto &[id, t] : ds.truth.transforms)
      sol[id] = testhelp::compose_affine(rot, t);
    const GaugeAlignment g = gauge_align(ds.tiles, sol, ds.truth);
    CHECK(g.rms_px <= 1e-8);
    // g must be approximately R(-phi).
    CHECK(g.g.coeffs[0] == doctest::Approx(std::cos(phi)).epsilon(1e-9));
    CHECK(g.g.coeffs[1] == doctest::Approx(std::sin(phi)).epsilon(1e-9));
  }

  SUBCASE("missing tiles are an error") {
    std::map<std::string, TransformParams> sol = ds.truth.transforms;
    sol.erase(sol.begin()->first);
    CHECK_THROWS_AS(gauge_align(ds.tiles, sol, ds.truth), DataError);
  }
}

TEST_CASE("noiseless volume solves back to the truth") {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 2;
  cfg.sections = 3;
  cfg.noise_sigma_px = 0.0;
  cfg.seed = 103;
  const SynthDataset ds = generate_volume(cfg);

  io::Dataset dataset;
  dataset.tiles = ds.tiles;
  dataset.matches = ds.matches;
  SolveOptions opts;
  opts.model = ModelKind::Affine;
  opts.lambda.default_value = 1e-6;
  const SolveResult result = solve_dataset(dataset, opts);
  const GaugeAlignment g = gauge_align(ds.tiles, result.transforms, ds.truth);
  CHECK(g.rms_px <= 1e-6);
}

TEST_CASE("polynomial truth models generate consistent matches") {
  SynthConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 2;
  cfg.truth_model = ModelKind::Poly2;
  cfg.quad_jitter_px = 3.0;
  cfg.noise_sigma_px = 0.0;
  cfg.seed = 107;
  const SynthDataset ds = generate_montage(cfg);
  for (const MatchSet &ms : ds.matches) {
    const TransformParams &tp = ds.truth.transforms.at(ms.p_tile);
    const TransformParams &tq = ds.truth.transforms.at(ms.q_tile);
    for (std::size_t i = 0; i < ms.p.size(); ++i) {
      const Point2 a = apply_transform(tp, ms.p[i]);
      const Point2 b = apply_transform(tq, ms.q[i]);
      CHECK(std::abs(a.x - b.x) <= 1e-8);
      CHECK(std::abs(a.y - b.y) <= 1e-8);
    }
  }
}
