#include "montage/synth.hpp"

#include "montage/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace montage {

namespace {

std::uint64_t splitmix64(std::uint64_t &state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Small self-contained generator so datasets are identical across
// platforms and standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds decorrelate.
    splitmix64(state_);
    splitmix64(state_);
  }

  double uniform() { // [0, 1)
    return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t stream_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = base;
  for (std::uint64_t p : parts) {
    s ^= p + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
    splitmix64(s);
  }
  return s;
}

std::string tile_name(int z, int r, int c) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "z%03d_r%03d_c%03d", z, r, c);
  return buf;
}

void validate_config(const SynthConfig &cfg) {
  if (cfg.grid_rows < 1 || cfg.grid_cols < 1)
    throw DataError("synth: grid dimensions must be >= 1");
  if (cfg.sections < 1)
    throw DataError("synth: sections must be >= 1");
  if (!(cfg.tile_w > 0.0) || !(cfg.tile_h > 0.0))
    throw DataError("synth: tile dimensions must be positive");
  if (!(cfg.overlap_fraction > 0.0) || !(cfg.overlap_fraction < 1.0))
    throw DataError("synth: overlap_fraction must be in (0,1)");
  if (cfg.matches_per_pair < 2)
    throw DataError("synth: matches_per_pair must be >= 2");
  if (cfg.noise_sigma_px < 0.0)
    throw DataError("synth: noise sigma must be nonnegative");
  if (cfg.truth_model == ModelKind::RigidApprox)
    throw DataError("synth: the rigid-approximation model has no translation "
                    "and cannot place tiles; use translation/affine/poly");
}

// Truth transform of one tile: rotation and linear jitter about the tile
// center, nominal grid translation plus jitter and section drift, and
// optional polynomial terms scaled to a peak corner displacement.
TransformParams make_truth(const SynthConfig &cfg, Rng &rng, double nominal_x,
                           double nominal_y, Point2 drift) {
  const double cx = cfg.tile_w / 2.0;
  const double cy = cfg.tile_h / 2.0;

  double theta = 0.0;
  double lin[4] = {1.0, 0.0, 0.0, 1.0};
  if (cfg.truth_model != ModelKind::Translation) {
    theta = cfg.rot_jitter_deg * std::numbers::pi / 180.0 * rng.uniform(-1, 1);
    const double c = std::cos(theta), s = std::sin(theta);
    double jit[4];
    for (double &j : jit)
      j = cfg.linear_jitter * rng.uniform(-1, 1);
    // R(theta) * (I + J)
    lin[0] = c * (1 + jit[0]) - s * jit[2];
    lin[1] = c * jit[1] - s * (1 + jit[3]);
    lin[2] = s * (1 + jit[0]) + c * jit[2];
    lin[3] = s * jit[1] + c * (1 + jit[3]);
  }
  const double tx =
      nominal_x + drift.x + cfg.trans_jitter_px * rng.uniform(-1, 1);
  const double ty =
      nominal_y + drift.y + cfg.trans_jitter_px * rng.uniform(-1, 1);

  // Rotate about the tile center: translation absorbs the center shift.
  const double ox = cx - (lin[0] * cx + lin[1] * cy) + tx;
  const double oy = cy - (lin[2] * cx + lin[3] * cy) + ty;

  TransformParams t;
  if (cfg.truth_model == ModelKind::Translation) {
    t.kind = ModelKind::Translation;
    t.coeffs = {tx, ty};
    return t;
  }
  t = TransformParams::affine(lin[0], lin[1], ox, lin[2], lin[3], oy);
  if (cfg.truth_model == ModelKind::Affine)
    return t;

  t = promote(t, cfg.truth_model);
  const int k = basis_size(cfg.truth_model);
  // Peak-displacement scaling: coefficient = jitter / monomial(corner).
  const double corner[7] = {cfg.tile_w * cfg.tile_w,
                            cfg.tile_w * cfg.tile_h,
                            cfg.tile_h * cfg.tile_h,
                            cfg.tile_w * cfg.tile_w * cfg.tile_w,
                            cfg.tile_w * cfg.tile_w * cfg.tile_h,
                            cfg.tile_w * cfg.tile_h * cfg.tile_h,
                            cfg.tile_h * cfg.tile_h * cfg.tile_h};
  const int hi = (cfg.truth_model == ModelKind::Poly2) ? 3 : 7;
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < hi; ++i) {
      const double scale = (i < 3) ? cfg.quad_jitter_px : cfg.cubic_jitter_px;
      t.coeffs[static_cast<std::size_t>(g * k + 3 + i)] =
          scale / corner[i] * rng.uniform(-1, 1);
    }
  return t;
}

// Inverse of a truth transform at a world point. Affine inverts exactly;
// polynomial kinds refine with Newton steps from the affine estimate.
Point2 invert_truth(const TransformParams &t, Point2 world) {
  double lin[4], tr[2];
  const int k = basis_size(t.kind);
  if (t.kind == ModelKind::Translation) {
    return {world.x - t.coeffs[0], world.y - t.coeffs[1]};
  }
  lin[0] = t.coeffs[0];
  lin[1] = t.coeffs[1];
  tr[0] = t.coeffs[2];
  lin[2] = t.coeffs[static_cast<std::size_t>(k)];
  lin[3] = t.coeffs[static_cast<std::size_t>(k) + 1];
  tr[1] = t.coeffs[static_cast<std::size_t>(k) + 2];
  const double det = lin[0] * lin[3] - lin[1] * lin[2];
  if (std::abs(det) < 1e-14)
    throw DataError("synth: degenerate truth transform");
  auto affine_inv = [&](Point2 u) {
    const double dx = u.x - tr[0];
    const double dy = u.y - tr[1];
    return Point2{(lin[3] * dx - lin[1] * dy) / det,
                  (-lin[2] * dx + lin[0] * dy) / det};
  };
  Point2 p = affine_inv(world);
  if (t.kind == ModelKind::Affine)
    return p;
  for (int it = 0; it < 25; ++it) {
    const Point2 f = apply_transform(t, p) - world;
    if (std::abs(f.x) < 1e-11 && std::abs(f.y) < 1e-11)
      break;
    // Jacobian of the polynomial map at p.
    const double x = p.x, y = p.y;
    double jxx = t.coeffs[0], jxy = t.coeffs[1];
    double jyx = t.coeffs[static_cast<std::size_t>(k)];
    double jyy = t.coeffs[static_cast<std::size_t>(k) + 1];
    const double dq[3][2] = {{2 * x, 0}, {y, x}, {0, 2 * y}};
    const double dc[4][2] = {
        {3 * x * x, 0}, {2 * x * y, x * x}, {y * y, 2 * x * y}, {0, 3 * y * y}};
    const int hi = (t.kind == ModelKind::Poly2) ? 3 : 7;
    for (int i = 0; i < hi; ++i) {
      const double *d = (i < 3) ? dq[i] : dc[i - 3];
      jxx += t.coeffs[static_cast<std::size_t>(3 + i)] * d[0];
      jxy += t.coeffs[static_cast<std::size_t>(3 + i)] * d[1];
      jyx += t.coeffs[static_cast<std::size_t>(k + 3 + i)] * d[0];
      jyy += t.coeffs[static_cast<std::size_t>(k + 3 + i)] * d[1];
    }
    const double jdet = jxx * jyy - jxy * jyx;
    if (std::abs(jdet) < 1e-14)
      break;
    p.x -= (jyy * f.x - jxy * f.y) / jdet;
    p.y -= (-jyx * f.x + jxx * f.y) / jdet;
  }
  return p;
}

struct WorldQuad {
  Point2 corners[4];
  double min_x, max_x, min_y, max_y;
};

WorldQuad world_quad(const SynthConfig &cfg, const TransformParams &t) {
  WorldQuad q;
  const Point2 local[4] = {{0, 0},
                           {cfg.tile_w, 0},
                           {cfg.tile_w, cfg.tile_h},
                           {0, cfg.tile_h}};
  q.min_x = q.min_y = std::numeric_limits<double>::infinity();
  q.max_x = q.max_y = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    q.corners[i] = apply_transform(t, local[i]);
    q.min_x = std::min(q.min_x, q.corners[i].x);
    q.max_x = std::max(q.max_x, q.corners[i].x);
    q.min_y = std::min(q.min_y, q.corners[i].y);
    q.max_y = std::max(q.max_y, q.corners[i].y);
  }
  return q;
}

bool inside_tile(const SynthConfig &cfg, const TransformParams &t,
                 Point2 world, Point2 *local) {
  const Point2 p = invert_truth(t, world);
  if (p.x < 0.0 || p.x > cfg.tile_w || p.y < 0.0 || p.y > cfg.tile_h)
    return false;
  *local = p;
  return true;
}

// Samples matches_per_pair world points in the true overlap of two tiles.
// Returns false when the overlap appears to be empty.
bool sample_pair(const SynthConfig &cfg, std::uint64_t pair_seed,
                 const TransformParams &tp, const TransformParams &tq,
                 MatchSet *out) {
  Rng rng(pair_seed);
  const WorldQuad qp = world_quad(cfg, tp);
  const WorldQuad qq = world_quad(cfg, tq);
  const double lo_x = std::max(qp.min_x, qq.min_x);
  const double hi_x = std::min(qp.max_x, qq.max_x);
  const double lo_y = std::max(qp.min_y, qq.min_y);
  const double hi_y = std::min(qp.max_y, qq.max_y);
  if (!(lo_x < hi_x) || !(lo_y < hi_y))
    return false;

  const int wanted = cfg.matches_per_pair;
  const int max_attempts = 2000 * wanted;
  int found = 0;
  for (int attempt = 0; attempt < max_attempts && found < wanted; ++attempt) {
    const Point2 world{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    Point2 lp, lq;
    if (!inside_tile(cfg, tp, world, &lp) || !inside_tile(cfg, tq, world, &lq))
      continue;
    if (cfg.noise_sigma_px > 0.0) {
      lp.x += cfg.noise_sigma_px * rng.normal();
      lp.y += cfg.noise_sigma_px * rng.normal();
      lq.x += cfg.noise_sigma_px * rng.normal();
      lq.y += cfg.noise_sigma_px * rng.normal();
    }
    out->p.push_back(lp);
    out->q.push_back(lq);
    ++found;
  }
  return found == wanted;
}

struct SectionLayout {
  std::vector<TileSpec> tiles;
  std::vector<TransformParams> truths;
};

SectionLayout make_section(const SynthConfig &cfg, int z, Point2 drift,
                           std::uint64_t base_seed) {
  SectionLayout layout;
  const double step_x = cfg.tile_w * (1.0 - cfg.overlap_fraction);
  const double step_y = cfg.tile_h * (1.0 - cfg.overlap_fraction);
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c) {
      TileSpec tile;
      tile.tile_id = tile_name(z, r, c);
      tile.z = z;
      tile.width = cfg.tile_w;
      tile.height = cfg.tile_h;
      layout.tiles.push_back(tile);
      Rng rng(stream_seed(base_seed, {1, static_cast<std::uint64_t>(z),
                                      static_cast<std::uint64_t>(r),
                                      static_cast<std::uint64_t>(c)}));
      layout.truths.push_back(
          make_truth(cfg, rng, c * step_x, r * step_y, drift));
    }
  return layout;
}

SynthDataset generate(const SynthConfig &cfg) {
  validate_config(cfg);

  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t base_seed =
        stream_seed(cfg.seed, {0xA77Eull, static_cast<std::uint64_t>(attempt)});

    // Per-section drift: a cumulative random walk.
    std::vector<Point2> drift(static_cast<std::size_t>(cfg.sections), {0, 0});
    for (int z = 1; z < cfg.sections; ++z) {
      Rng rng(stream_seed(base_seed, {3, static_cast<std::uint64_t>(z)}));
      drift[static_cast<std::size_t>(z)] =
          drift[static_cast<std::size_t>(z - 1)] +
          Point2{cfg.section_drift_px * rng.uniform(-1, 1),
                 cfg.section_drift_px * rng.uniform(-1, 1)};
    }

    SynthDataset ds;
    std::vector<SectionLayout> sections;
    for (int z = 0; z < cfg.sections; ++z) {
      sections.push_back(make_section(cfg, z, drift[static_cast<std::size_t>(z)],
                                      base_seed));
      for (std::size_t i = 0; i < sections.back().tiles.size(); ++i) {
        ds.tiles.push_back(sections.back().tiles[i]);
        ds.truth.transforms[sections.back().tiles[i].tile_id] =
            sections.back().truths[i];
      }
    }

    // Candidate pairs: within-section grid adjacency plus cross-section
    // tiles whose nominal footprints share enough area.
    struct Candidate {
      int z1, r1, c1, z2, r2, c2;
    };
    std::vector<Candidate> candidates;
    for (int z = 0; z < cfg.sections; ++z)
      for (int r = 0; r < cfg.grid_rows; ++r)
        for (int c = 0; c < cfg.grid_cols; ++c) {
          if (c + 1 < cfg.grid_cols)
            candidates.push_back({z, r, c, z, r, c + 1});
          if (r + 1 < cfg.grid_rows)
            candidates.push_back({z, r, c, z, r + 1, c});
        }
    const double step_x = cfg.tile_w * (1.0 - cfg.overlap_fraction);
    const double step_y = cfg.tile_h * (1.0 - cfg.overlap_fraction);
    const int max_dz = cfg.cross_z2 ? 2 : 1;
    for (int dz = 1; dz <= max_dz; ++dz)
      for (int z = 0; z + dz < cfg.sections; ++z)
        for (int r1 = 0; r1 < cfg.grid_rows; ++r1)
          for (int c1 = 0; c1 < cfg.grid_cols; ++c1)
            for (int r2 = 0; r2 < cfg.grid_rows; ++r2)
              for (int c2 = 0; c2 < cfg.grid_cols; ++c2) {
                const double ox = cfg.tile_w - std::abs(c1 - c2) * step_x;
                const double oy = cfg.tile_h - std::abs(r1 - r2) * step_y;
                if (ox <= 0.0 || oy <= 0.0)
                  continue;
                if (ox * oy <
                    cfg.cross_overlap_min_frac * cfg.tile_w * cfg.tile_h)
                  continue;
                candidates.push_back({z, r1, c1, z + dz, r2, c2});
              }

    ds.matches.resize(candidates.size());
    std::vector<std::uint8_t> ok(candidates.size(), 0);
    const std::int64_t ncand = static_cast<std::int64_t>(candidates.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < ncand; ++i) {
      const Candidate &cd = candidates[static_cast<std::size_t>(i)];
      MatchSet ms;
      ms.p_tile = tile_name(cd.z1, cd.r1, cd.c1);
      ms.q_tile = tile_name(cd.z2, cd.r2, cd.c2);
      const std::uint64_t pair_seed = stream_seed(
          base_seed, {2, static_cast<std::uint64_t>(cd.z1),
                      static_cast<std::uint64_t>(cd.r1),
                      static_cast<std::uint64_t>(cd.c1),
                      static_cast<std::uint64_t>(cd.z2),
                      static_cast<std::uint64_t>(cd.r2),
                      static_cast<std::uint64_t>(cd.c2)});
      if (sample_pair(cfg, pair_seed, ds.truth.transforms.at(ms.p_tile),
                      ds.truth.transforms.at(ms.q_tile), &ms)) {
        ok[static_cast<std::size_t>(i)] = 1;
        ds.matches[static_cast<std::size_t>(i)] = std::move(ms);
      }
    }
    if (std::all_of(ok.begin(), ok.end(), [](std::uint8_t v) { return v != 0; }))
      return ds;
  }
  throw DataError("synth: perturbations destroyed a tile overlap in 10 "
                  "consecutive attempts; reduce jitter or raise overlap");
}

} // namespace

SynthDataset generate_montage(const SynthConfig &cfg) {
  SynthConfig c = cfg;
  c.sections = 1;
  return generate(c);
}

SynthDataset generate_volume(const SynthConfig &cfg) {
  if (cfg.sections < 2)
    throw DataError("generate_volume requires at least two sections");
  return generate(cfg);
}

GaugeAlignment gauge_align(const std::vector<TileSpec> &tiles,
                           const std::map<std::string, TransformParams> &solution,
                           const GroundTruth &truth) {
  // Least squares over the six coefficients of g: rows are
  // [sx, sy, 1] · g_u = truth_x and the same for v. The two coordinates
  // decouple and share the 3x3 normal matrix.
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rx = Eigen::Vector3d::Zero();
  Eigen::Vector3d ry = Eigen::Vector3d::Zero();
  struct CornerPair {
    Point2 sol;
    Point2 tru;
  };
  std::vector<CornerPair> corners;
  for (const TileSpec &tile : tiles) {
    auto is = solution.find(tile.tile_id);
    auto it = truth.transforms.find(tile.tile_id);
    if (is == solution.end() || it == truth.transforms.end())
      throw DataError("gauge_align: tile '" + tile.tile_id +
                      "' missing from solution or truth");
    const Point2 local[4] = {{0, 0},
                             {tile.width, 0},
                             {tile.width, tile.height},
                             {0, tile.height}};
    for (const Point2 &lp : local) {
      const Point2 s = apply_transform(is->second, lp);
      const Point2 t = apply_transform(it->second, lp);
      corners.push_back({s, t});
      const Eigen::Vector3d phi(s.x, s.y, 1.0);
      m += phi * phi.transpose();
      rx += phi * t.x;
      ry += phi * t.y;
    }
  }
  const Eigen::Vector3d gu = m.ldlt().solve(rx);
  const Eigen::Vector3d gv = m.ldlt().solve(ry);

  GaugeAlignment out;
  out.g = TransformParams::affine(gu[0], gu[1], gu[2], gv[0], gv[1], gv[2]);
  double sq_sum = 0.0;
  for (const CornerPair &cp : corners) {
    const Point2 aligned = apply_transform(out.g, cp.sol);
    const double d = std::hypot(aligned.x - cp.tru.x, aligned.y - cp.tru.y);
    sq_sum += d * d;
    out.max_px = std::max(out.max_px, d);
  }
  out.rms_px = corners.empty()
                   ? 0.0
                   : std::sqrt(sq_sum / static_cast<double>(corners.size()));
  return out;
}

} // namespace montage
