#include "montage/rigid_prior.hpp"

#include "montage/errors.hpp"
#include "montage/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace montage {

CenteredMatches center_matches(const std::vector<MatchSet> &matches) {
  CenteredMatches out;
  for (const MatchSet &ms : matches) {
    if (ms.p.size() < 2) {
      out.dropped.push_back(ms.p_tile + "|" + ms.q_tile);
      continue;
    }
    Point2 pc{0, 0}, qc{0, 0};
    for (std::size_t i = 0; i < ms.p.size(); ++i) {
      pc = pc + ms.p[i];
      qc = qc + ms.q[i];
    }
    const double inv = 1.0 / static_cast<double>(ms.p.size());
    pc = inv * pc;
    qc = inv * qc;
    MatchSet c = ms;
    for (std::size_t i = 0; i < ms.p.size(); ++i) {
      c.p[i] = ms.p[i] - pc;
      c.q[i] = ms.q[i] - qc;
    }
    out.centered.push_back(std::move(c));
    out.p_centroids.push_back(pc);
    out.q_centroids.push_back(qc);
  }
  return out;
}

SparseSystem build_similarity_system(const CenteredMatches &centered,
                                     const std::vector<TileSpec> &tiles) {
  if (centered.centered.empty())
    throw DataError("empty system: no pairs with two or more points remain "
                    "for the similarity solve");

  // Augment each pair with rows built from the rotated points
  // (x,y) -> (y,-x), appended below the original block on both sides.
  std::vector<MatchSet> augmented;
  augmented.reserve(centered.centered.size());
  for (const MatchSet &ms : centered.centered) {
    MatchSet a = ms;
    const std::size_t nj = ms.p.size();
    a.p.reserve(2 * nj);
    a.q.reserve(2 * nj);
    if (!a.w.empty())
      a.w.reserve(2 * nj);
    for (std::size_t i = 0; i < nj; ++i) {
      a.p.push_back({ms.p[i].y, -ms.p[i].x});
      a.q.push_back({ms.q[i].y, -ms.q[i].x});
      if (!a.w.empty())
        a.w.push_back(ms.w[i]);
    }
    augmented.push_back(std::move(a));
  }

  SparseSystem sys =
      build_system(tiles, augmented, ModelKind::RigidApprox, 1, 0);
  const std::string anchor = sys.tile_order.front();
  std::map<std::string, TransformParams> fixed;
  fixed[anchor] = TransformParams::identity(ModelKind::RigidApprox);
  return fix_tiles(sys, fixed);
}

RigidApproxSolution
rescale_to_unit_area(const std::vector<std::string> &tile_order,
                     const std::vector<std::array<double, 4>> &blocks,
                     const std::string &anchor) {
  if (tile_order.size() != blocks.size())
    throw DataError("rescale: one 2x2 block per tile required");
  RigidApproxSolution out;
  out.tile_order = tile_order;
  out.anchor = anchor;
  out.rotation.resize(blocks.size());
  out.translation.assign(blocks.size(), Point2{0, 0});
  out.scale_removed.assign(blocks.size(), 1.0);
  out.similarity_defect.assign(blocks.size(), 0.0);
  out.degenerate.assign(blocks.size(), false);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::array<double, 4> &m = blocks[i];
    const double norm =
        std::sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2] + m[3] * m[3]);
    if (norm > 0.0)
      out.similarity_defect[i] =
          (std::abs(m[0] - m[3]) + std::abs(m[1] + m[2])) / norm;
    const double det = m[0] * m[3] - m[1] * m[2];
    if (std::abs(det) < 1e-14 || !std::isfinite(det)) {
      out.rotation[i] = {1.0, 0.0, 0.0, 1.0};
      out.scale_removed[i] = 1.0;
      out.degenerate[i] = true;
      continue;
    }
    const double s = std::sqrt(std::abs(det));
    out.rotation[i] = {m[0] / s, m[1] / s, m[2] / s, m[3] / s};
    out.scale_removed[i] = s;
  }
  return out;
}

void solve_translations(const std::vector<TileSpec> &tiles,
                        const std::vector<MatchSet> &matches,
                        RigidApproxSolution &rigid) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < rigid.tile_order.size(); ++i)
    index[rigid.tile_order[i]] = i;

  auto rotate = [&](const std::string &id, Point2 p) {
    auto it = index.find(id);
    if (it == index.end())
      throw DataError("no rotation available for tile '" + id + "'");
    const std::array<double, 4> &m = rigid.rotation[it->second];
    return Point2{m[0] * p.x + m[1] * p.y, m[2] * p.x + m[3] * p.y};
  };

  std::vector<MatchSet> rotated;
  rotated.reserve(matches.size());
  for (const MatchSet &ms : matches) {
    MatchSet r = ms;
    for (std::size_t i = 0; i < ms.p.size(); ++i) {
      r.p[i] = rotate(ms.p_tile, ms.p[i]);
      r.q[i] = rotate(ms.q_tile, ms.q[i]);
    }
    rotated.push_back(std::move(r));
  }

  SparseSystem sys = build_system(tiles, rotated, ModelKind::Translation, 1, 0);
  std::map<std::string, TransformParams> fixed;
  TransformParams zero;
  zero.kind = ModelKind::Translation;
  zero.coeffs = {0.0, 0.0};
  fixed[rigid.anchor] = zero;
  sys = fix_tiles(sys, fixed);

  const std::vector<double> lambda(static_cast<std::size_t>(sys.n()), 0.0);
  const std::vector<double> ones(static_cast<std::size_t>(sys.n()), 1.0);
  const std::vector<double> d(static_cast<std::size_t>(sys.n()), 0.0);
  NormalSystem ns = build_normal_equations(sys, lambda, ones, d);
  SolveReport rep = solve_direct(ns);
  const auto solution = unpack_solution(sys, rep.x);
  for (const auto &[id, t] : solution) {
    auto it = index.find(id);
    if (it != index.end())
      rigid.translation[it->second] = {t.coeffs[0], t.coeffs[1]};
  }
}

PriorVector assemble_prior(const RigidApproxSolution &rigid, ModelKind kind,
                           const LambdaSpec &lambda_spec,
                           const std::vector<TileSpec> &tiles_in_order) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < rigid.tile_order.size(); ++i)
    index[rigid.tile_order[i]] = i;

  const int k = basis_size(kind);
  const int nc = 2 * k;
  PriorVector prior;
  prior.d.assign(tiles_in_order.size() * static_cast<std::size_t>(nc), 0.0);
  prior.b_diag.assign(prior.d.size(), 1.0);

  for (std::size_t t = 0; t < tiles_in_order.size(); ++t) {
    auto it = index.find(tiles_in_order[t].tile_id);
    if (it == index.end())
      throw DataError("rigid prior is missing tile '" +
                      tiles_in_order[t].tile_id + "'");
    const std::array<double, 4> &m = rigid.rotation[it->second];
    const Point2 tr = rigid.translation[it->second];
    double *slice = &prior.d[t * static_cast<std::size_t>(nc)];
    switch (kind) {
    case ModelKind::Translation:
      slice[0] = tr.x;
      slice[1] = tr.y;
      break;
    case ModelKind::RigidApprox:
      slice[0] = m[0];
      slice[1] = m[1];
      slice[2] = m[2];
      slice[3] = m[3];
      break;
    case ModelKind::Affine:
    case ModelKind::Poly2:
    case ModelKind::Poly3:
      slice[0] = m[0];
      slice[1] = m[1];
      slice[2] = tr.x;
      slice[k + 0] = m[2];
      slice[k + 1] = m[3];
      slice[k + 2] = tr.y;
      break;
    }
  }
  prior.lambda_diag = expand_lambda(lambda_spec, tiles_in_order, kind);
  return prior;
}

RigidApproxSolution estimate_rigid_prior(const std::vector<TileSpec> &tiles,
                                         const std::vector<MatchSet> &matches) {
  CenteredMatches centered = center_matches(matches);
  SparseSystem sim = build_similarity_system(centered, tiles);

  // Tiles present in the full match graph but dropped from the similarity
  // system fall back to the identity rotation.
  std::set<std::string> all_ids;
  for (const MatchSet &ms : matches) {
    all_ids.insert(ms.p_tile);
    all_ids.insert(ms.q_tile);
  }

  const std::vector<double> lambda(static_cast<std::size_t>(sim.n()), 0.0);
  const std::vector<double> ones(static_cast<std::size_t>(sim.n()), 1.0);
  const std::vector<double> d(static_cast<std::size_t>(sim.n()), 0.0);
  NormalSystem ns = build_normal_equations(sim, lambda, ones, d);
  SolveReport rep = solve_direct(ns);
  const auto blocks_by_id = unpack_solution(sim, rep.x);

  std::vector<std::string> order(all_ids.begin(), all_ids.end());
  std::vector<std::array<double, 4>> blocks;
  std::vector<bool> missing;
  blocks.reserve(order.size());
  for (const std::string &id : order) {
    auto it = blocks_by_id.find(id);
    if (it == blocks_by_id.end()) {
      blocks.push_back({1.0, 0.0, 0.0, 1.0});
      missing.push_back(true);
    } else {
      const auto &c = it->second.coeffs;
      blocks.push_back({c[0], c[1], c[2], c[3]});
      missing.push_back(false);
    }
  }

  RigidApproxSolution rigid = rescale_to_unit_area(order, blocks, order.front());
  for (std::size_t i = 0; i < missing.size(); ++i)
    if (missing[i])
      rigid.degenerate[i] = true;
  solve_translations(tiles, matches, rigid);
  return rigid;
}

TransformParams rigid_as_affine(const RigidApproxSolution &rigid,
                                std::size_t index) {
  const std::array<double, 4> &m = rigid.rotation[index];
  const Point2 t = rigid.translation[index];
  return TransformParams::affine(m[0], m[1], t.x, m[2], m[3], t.y);
}

} // namespace montage
