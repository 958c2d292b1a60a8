#include "montage/assembly.hpp"

#include "montage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <stdexcept>

namespace montage {

namespace {

std::uint64_t fnv1a(std::string_view s,
                    std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void validate_match_set(const MatchSet &ms) {
  if (ms.p_tile == ms.q_tile)
    throw DataError("match set connects tile '" + ms.p_tile + "' to itself");
  if (ms.p.size() != ms.q.size() || (!ms.w.empty() && ms.w.size() != ms.p.size()))
    throw DataError("match set " + ms.p_tile + " <-> " + ms.q_tile +
                    ": p, q and w must have equal length");
  if (ms.p.empty())
    throw DataError("match set " + ms.p_tile + " <-> " + ms.q_tile +
                    " has no points");
  for (std::size_t i = 0; i < ms.p.size(); ++i) {
    if (!std::isfinite(ms.p[i].x) || !std::isfinite(ms.p[i].y) ||
        !std::isfinite(ms.q[i].x) || !std::isfinite(ms.q[i].y))
      throw DataError("match set " + ms.p_tile + " <-> " + ms.q_tile +
                      ": non-finite point at index " + std::to_string(i));
    if (!ms.w.empty() && !(ms.w[i] >= 0.0))
      throw DataError("match set " + ms.p_tile + " <-> " + ms.q_tile +
                      ": weight at index " + std::to_string(i) +
                      " must be nonnegative");
  }
}

} // namespace

ConnectivityReport validate_connectivity(const std::vector<TileSpec> &tiles,
                                         const std::vector<MatchSet> &matches) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (!index.emplace(tiles[i].tile_id, i).second)
      throw DataError("duplicate tile_id '" + tiles[i].tile_id + "'");
  }

  std::vector<std::size_t> parent(tiles.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };

  ConnectivityReport report;
  std::vector<bool> matched(tiles.size(), false);
  for (const MatchSet &ms : matches) {
    validate_match_set(ms);
    auto ip = index.find(ms.p_tile);
    auto iq = index.find(ms.q_tile);
    if (ip == index.end())
      throw DataError("match references unknown tile '" + ms.p_tile + "'");
    if (iq == index.end())
      throw DataError("match references unknown tile '" + ms.q_tile + "'");
    matched[ip->second] = matched[iq->second] = true;
    parent[find(ip->second)] = find(iq->second);
    auto key = std::minmax(ms.p_tile, ms.q_tile);
    report.pair_counts[{key.first, key.second}] +=
        static_cast<std::int64_t>(ms.p.size());
  }

  std::map<std::size_t, std::vector<std::string>> comps;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (!matched[i]) {
      report.orphans.push_back(tiles[i].tile_id);
      continue;
    }
    comps[find(i)].push_back(tiles[i].tile_id);
  }
  std::sort(report.orphans.begin(), report.orphans.end());
  for (auto &[root, ids] : comps) {
    std::sort(ids.begin(), ids.end());
    report.components.push_back(std::move(ids));
  }
  std::sort(report.components.begin(), report.components.end());
  if (report.components.empty())
    throw DataError("no matched tiles remain: every tile is an orphan");
  return report;
}

SparseSystem build_system(const std::vector<TileSpec> &tiles,
                          const std::vector<MatchSet> &matches, ModelKind kind,
                          std::int64_t min_matches, std::int64_t max_matches) {
  std::set<std::string> known;
  for (const TileSpec &t : tiles)
    known.insert(t.tile_id);

  SparseSystem sys;
  sys.kind = kind;

  // Filter and subsample. Selected point indices per retained pair.
  struct Retained {
    const MatchSet *ms;
    std::vector<std::int64_t> idx;
  };
  std::vector<Retained> retained;
  for (const MatchSet &ms : matches) {
    validate_match_set(ms);
    if (!known.count(ms.p_tile))
      throw DataError("match references unknown tile '" + ms.p_tile + "'");
    if (!known.count(ms.q_tile))
      throw DataError("match references unknown tile '" + ms.q_tile + "'");
    const std::int64_t nj = static_cast<std::int64_t>(ms.p.size());
    if (nj < min_matches) {
      ++sys.dropped_pairs;
      continue;
    }
    Retained r;
    r.ms = &ms;
    if (max_matches > 0 && nj > max_matches) {
      // Stable hash of (tile ids, point index): the same pair keeps the
      // same points regardless of run, thread count or pair order.
      const std::uint64_t base =
          fnv1a(ms.q_tile, fnv1a(ms.p_tile) * 1099511628211ull);
      std::vector<std::pair<std::uint64_t, std::int64_t>> keyed;
      keyed.reserve(static_cast<std::size_t>(nj));
      for (std::int64_t i = 0; i < nj; ++i)
        keyed.emplace_back(mix64(base ^ static_cast<std::uint64_t>(i)), i);
      std::sort(keyed.begin(), keyed.end());
      keyed.resize(static_cast<std::size_t>(max_matches));
      for (auto &[h, i] : keyed)
        r.idx.push_back(i);
      std::sort(r.idx.begin(), r.idx.end());
      ++sys.subsampled_pairs;
    } else {
      r.idx.resize(static_cast<std::size_t>(nj));
      std::iota(r.idx.begin(), r.idx.end(), 0);
    }
    retained.push_back(std::move(r));
  }
  if (retained.empty())
    throw DataError("empty system: no match sets survive filtering");

  std::set<std::string> used;
  for (const Retained &r : retained) {
    used.insert(r.ms->p_tile);
    used.insert(r.ms->q_tile);
  }
  sys.tile_order.assign(used.begin(), used.end());
  std::map<std::string, std::int64_t> tile_index;
  for (std::size_t i = 0; i < sys.tile_order.size(); ++i)
    tile_index[sys.tile_order[i]] = static_cast<std::int64_t>(i);

  const int k = basis_size(kind);
  const int nc = coeffs_per_tile(kind);
  const std::int64_t n =
      static_cast<std::int64_t>(sys.tile_order.size()) * nc;

  sys.pairs.resize(retained.size());
  std::int64_t row = 0;
  for (std::size_t j = 0; j < retained.size(); ++j) {
    PairBlock &pb = sys.pairs[j];
    pb.p_tile = retained[j].ms->p_tile;
    pb.q_tile = retained[j].ms->q_tile;
    pb.p_index = tile_index[pb.p_tile];
    pb.q_index = tile_index[pb.q_tile];
    pb.n_points = static_cast<std::int64_t>(retained[j].idx.size());
    pb.row_begin = row;
    row += 2 * pb.n_points;
  }
  const std::int64_t m = row;
  sys.point_match_count = m / 2;

  CsrMatrix &a = sys.a;
  a.rows = m;
  a.cols = n;
  a.row_ptr.resize(static_cast<std::size_t>(m) + 1);
  for (std::int64_t r = 0; r <= m; ++r)
    a.row_ptr[static_cast<std::size_t>(r)] = r * nc;
  a.col.resize(static_cast<std::size_t>(m) * nc);
  a.val.resize(static_cast<std::size_t>(m) * nc);
  sys.b.assign(static_cast<std::size_t>(m), 0.0);
  sys.d_weights.assign(static_cast<std::size_t>(m), 1.0);

  // Every pair owns a disjoint row range, so filling is race free.
  const std::int64_t npairs = static_cast<std::int64_t>(retained.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t j = 0; j < npairs; ++j) {
    const Retained &r = retained[static_cast<std::size_t>(j)];
    const PairBlock &pb = sys.pairs[static_cast<std::size_t>(j)];
    const std::int64_t p_base = pb.p_index * nc;
    const std::int64_t q_base = pb.q_index * nc;
    const bool p_first = p_base < q_base;
    double phi_p[10], phi_q[10];
    for (std::int64_t i = 0; i < pb.n_points; ++i) {
      const std::int64_t src = r.idx[static_cast<std::size_t>(i)];
      const Point2 pp = r.ms->p[static_cast<std::size_t>(src)];
      const Point2 qq = r.ms->q[static_cast<std::size_t>(src)];
      const double w =
          r.ms->w.empty() ? 1.0 : r.ms->w[static_cast<std::size_t>(src)];
      basis_row(kind, pp, std::span<double>(phi_p, static_cast<std::size_t>(k)));
      basis_row(kind, qq, std::span<double>(phi_q, static_cast<std::size_t>(k)));
      const Point2 off = model_offset(kind, qq) - model_offset(kind, pp);
      for (int g = 0; g < 2; ++g) { // u rows then v rows
        const std::int64_t rr = pb.row_begin + g * pb.n_points + i;
        std::int64_t at = rr * nc;
        auto put_side = [&](std::int64_t base, const double *phi, double sign) {
          for (int c = 0; c < k; ++c) {
            a.col[static_cast<std::size_t>(at)] =
                static_cast<std::int32_t>(base + g * k + c);
            a.val[static_cast<std::size_t>(at)] = sign * phi[c];
            ++at;
          }
        };
        if (p_first) {
          put_side(p_base, phi_p, 1.0);
          put_side(q_base, phi_q, -1.0);
        } else {
          put_side(q_base, phi_q, -1.0);
          put_side(p_base, phi_p, 1.0);
        }
        sys.b[static_cast<std::size_t>(rr)] = (g == 0) ? off.x : off.y;
        sys.d_weights[static_cast<std::size_t>(rr)] = w;
      }
    }
  }
  return sys;
}

SparseSystem fix_tiles(const SparseSystem &system,
                       const std::map<std::string, TransformParams> &fixed) {
  if (fixed.empty())
    return system;

  const int nc = coeffs_per_tile(system.kind);
  std::map<std::string, std::int64_t> old_index;
  for (std::size_t i = 0; i < system.tile_order.size(); ++i)
    old_index[system.tile_order[i]] = static_cast<std::int64_t>(i);

  std::map<std::string, TransformParams> fixed_params;
  for (const auto &[id, t] : fixed) {
    if (!old_index.count(id))
      throw DataError("cannot fix unknown tile '" + id + "'");
    fixed_params[id] = promote(t, system.kind);
  }
  if (fixed_params.size() >= system.tile_order.size())
    throw DataError("cannot fix every tile in the system");

  SparseSystem out;
  out.kind = system.kind;
  out.fixed = system.fixed;
  for (const auto &[id, t] : fixed_params)
    out.fixed[id] = t;
  out.dropped_pairs = system.dropped_pairs;
  out.subsampled_pairs = system.subsampled_pairs;

  for (const std::string &id : system.tile_order)
    if (!fixed_params.count(id))
      out.tile_order.push_back(id);
  std::map<std::string, std::int64_t> new_index;
  for (std::size_t i = 0; i < out.tile_order.size(); ++i)
    new_index[out.tile_order[i]] = static_cast<std::int64_t>(i);

  // Old column -> new column, or -1 with the known coefficient value.
  std::vector<std::int64_t> col_map(static_cast<std::size_t>(system.n()), -1);
  std::vector<double> col_value(static_cast<std::size_t>(system.n()), 0.0);
  for (std::size_t i = 0; i < system.tile_order.size(); ++i) {
    const std::string &id = system.tile_order[i];
    auto fit = fixed_params.find(id);
    for (int c = 0; c < nc; ++c) {
      const std::size_t oc = i * static_cast<std::size_t>(nc) +
                             static_cast<std::size_t>(c);
      if (fit == fixed_params.end())
        col_map[oc] = new_index[id] * nc + c;
      else
        col_value[oc] = fit->second.coeffs[static_cast<std::size_t>(c)];
    }
  }

  out.a.rows = 0;
  out.a.cols = static_cast<std::int64_t>(out.tile_order.size()) * nc;
  out.a.row_ptr.push_back(0);
  std::int64_t row_out = 0;
  for (const PairBlock &pb : system.pairs) {
    const bool p_fixed = fixed_params.count(pb.p_tile) > 0;
    const bool q_fixed = fixed_params.count(pb.q_tile) > 0;
    if (p_fixed && q_fixed)
      continue; // constant residual, no unknowns left
    PairBlock nb = pb;
    nb.p_index = p_fixed ? -1 : new_index[pb.p_tile];
    nb.q_index = q_fixed ? -1 : new_index[pb.q_tile];
    nb.row_begin = row_out;
    out.pairs.push_back(nb);
    out.point_match_count += pb.n_points;
    for (std::int64_t i = 0; i < 2 * pb.n_points; ++i) {
      const std::int64_t r = pb.row_begin + i;
      double b = system.b[static_cast<std::size_t>(r)];
      for (std::int64_t e = system.a.row_ptr[static_cast<std::size_t>(r)];
           e < system.a.row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
        const std::size_t oc =
            static_cast<std::size_t>(system.a.col[static_cast<std::size_t>(e)]);
        const double v = system.a.val[static_cast<std::size_t>(e)];
        if (col_map[oc] >= 0) {
          out.a.col.push_back(static_cast<std::int32_t>(col_map[oc]));
          out.a.val.push_back(v);
        } else {
          b -= v * col_value[oc];
        }
      }
      out.a.row_ptr.push_back(static_cast<std::int64_t>(out.a.col.size()));
      out.b.push_back(b);
      out.d_weights.push_back(system.d_weights[static_cast<std::size_t>(r)]);
      ++row_out;
    }
  }
  out.a.rows = row_out;
  if (out.pairs.empty())
    throw DataError("empty system: every pair connects two fixed tiles");
  return out;
}

GramCache build_gram_cache(const SparseSystem &system) {
  const int k = basis_size(system.kind);
  const int nc = 2 * k;
  const std::int64_t nt = static_cast<std::int64_t>(system.tile_order.size());
  const std::int64_t npairs = static_cast<std::int64_t>(system.pairs.size());

  // Per-pair dense k×k contributions, computed from the u-rows (the v-rows
  // repeat the same basis values and weights in the v column group).
  const std::size_t kk = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  std::vector<double> self_p(static_cast<std::size_t>(npairs) * kk, 0.0);
  std::vector<double> self_q(static_cast<std::size_t>(npairs) * kk, 0.0);
  std::vector<double> cross(static_cast<std::size_t>(npairs) * kk, 0.0);

#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t j = 0; j < npairs; ++j) {
    const PairBlock &pb = system.pairs[static_cast<std::size_t>(j)];
    double *sp = &self_p[static_cast<std::size_t>(j) * kk];
    double *sq = &self_q[static_cast<std::size_t>(j) * kk];
    double *cx = &cross[static_cast<std::size_t>(j) * kk];
    double phi_p[10], phi_q[10];
    for (std::int64_t i = 0; i < pb.n_points; ++i) {
      const std::int64_t r = pb.row_begin + i; // u-row of point i
      const double w = system.d_weights[static_cast<std::size_t>(r)];
      bool has_p = false, has_q = false;
      for (std::int64_t e = system.a.row_ptr[static_cast<std::size_t>(r)];
           e < system.a.row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
        const std::int64_t c = system.a.col[static_cast<std::size_t>(e)];
        const std::int64_t tile = c / nc;
        const int local = static_cast<int>(c % nc); // < k for u-rows
        if (tile == pb.p_index) {
          phi_p[local] = system.a.val[static_cast<std::size_t>(e)];
          has_p = true;
        } else {
          phi_q[local] = -system.a.val[static_cast<std::size_t>(e)];
          has_q = true;
        }
      }
      for (int r1 = 0; r1 < k; ++r1)
        for (int c1 = 0; c1 < k; ++c1) {
          const std::size_t at = static_cast<std::size_t>(r1) *
                                     static_cast<std::size_t>(k) +
                                 static_cast<std::size_t>(c1);
          if (has_p)
            sp[at] += w * phi_p[r1] * phi_p[c1];
          if (has_q)
            sq[at] += w * phi_q[r1] * phi_q[c1];
          if (has_p && has_q)
            cx[at] += w * phi_p[r1] * phi_q[c1];
        }
    }
  }

  // Incidences per tile, in pair order so accumulation order is fixed.
  struct Incidence {
    std::int64_t pair;
    bool is_p;
  };
  std::vector<std::vector<Incidence>> self_inc(static_cast<std::size_t>(nt));
  struct Neighbor {
    std::int64_t other;
    std::int64_t pair;
    bool transposed; // true when this tile is the q side
  };
  std::vector<std::vector<Neighbor>> neigh(static_cast<std::size_t>(nt));
  for (std::int64_t j = 0; j < npairs; ++j) {
    const PairBlock &pb = system.pairs[static_cast<std::size_t>(j)];
    if (pb.p_index >= 0)
      self_inc[static_cast<std::size_t>(pb.p_index)].push_back({j, true});
    if (pb.q_index >= 0)
      self_inc[static_cast<std::size_t>(pb.q_index)].push_back({j, false});
    if (pb.p_index >= 0 && pb.q_index >= 0) {
      neigh[static_cast<std::size_t>(pb.p_index)].push_back(
          {pb.q_index, j, false});
      neigh[static_cast<std::size_t>(pb.q_index)].push_back(
          {pb.p_index, j, true});
    }
  }
  for (auto &list : neigh)
    std::sort(list.begin(), list.end(), [](const Neighbor &a, const Neighbor &b) {
      return a.other != b.other ? a.other < b.other : a.pair < b.pair;
    });

  GramCache cache;
  CsrMatrix &g = cache.gram;
  g.rows = g.cols = nt * nc;
  g.row_ptr.assign(static_cast<std::size_t>(g.rows) + 1, 0);

  // Row sizes: (1 + distinct neighbors) * k entries per row.
  std::vector<std::int64_t> distinct(static_cast<std::size_t>(nt), 0);
  for (std::int64_t t = 0; t < nt; ++t) {
    std::int64_t d = 0;
    const auto &list = neigh[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < list.size(); ++i)
      if (i == 0 || list[i].other != list[i - 1].other)
        ++d;
    distinct[static_cast<std::size_t>(t)] = d;
  }
  for (std::int64_t t = 0; t < nt; ++t)
    for (int r = 0; r < nc; ++r)
      g.row_ptr[static_cast<std::size_t>(t * nc + r) + 1] =
          (1 + distinct[static_cast<std::size_t>(t)]) * k;
  for (std::size_t i = 1; i < g.row_ptr.size(); ++i)
    g.row_ptr[i] += g.row_ptr[i - 1];
  g.col.resize(static_cast<std::size_t>(g.row_ptr.back()));
  g.val.resize(static_cast<std::size_t>(g.row_ptr.back()));

#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t t = 0; t < nt; ++t) {
    // Diagonal block: sum of self contributions in pair order.
    std::vector<double> diag(kk, 0.0);
    for (const Incidence &inc : self_inc[static_cast<std::size_t>(t)]) {
      const double *src = inc.is_p
                              ? &self_p[static_cast<std::size_t>(inc.pair) * kk]
                              : &self_q[static_cast<std::size_t>(inc.pair) * kk];
      for (std::size_t i = 0; i < kk; ++i)
        diag[i] += src[i];
    }
    // Off-diagonal blocks, merged per distinct neighbor in pair order.
    const auto &list = neigh[static_cast<std::size_t>(t)];
    std::vector<std::pair<std::int64_t, std::vector<double>>> blocks;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i == 0 || list[i].other != list[i - 1].other)
        blocks.emplace_back(list[i].other, std::vector<double>(kk, 0.0));
      const double *src = &cross[static_cast<std::size_t>(list[i].pair) * kk];
      std::vector<double> &dst = blocks.back().second;
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
          const std::size_t at = static_cast<std::size_t>(r * k + c);
          // G(p,q) = -Σ w φp φqᵀ; the q side stores the transpose.
          dst[at] -= list[i].transposed
                         ? src[static_cast<std::size_t>(c * k + r)]
                         : src[at];
        }
    }

    for (int g_half = 0; g_half < 2; ++g_half) {
      for (int rr = 0; rr < k; ++rr) {
        const std::int64_t row = t * nc + g_half * k + rr;
        std::int64_t at = g.row_ptr[static_cast<std::size_t>(row)];
        auto emit = [&](std::int64_t other, const std::vector<double> &blk) {
          for (int cc = 0; cc < k; ++cc) {
            g.col[static_cast<std::size_t>(at)] =
                static_cast<std::int32_t>(other * nc + g_half * k + cc);
            g.val[static_cast<std::size_t>(at)] =
                blk[static_cast<std::size_t>(rr * k + cc)];
            ++at;
          }
        };
        std::size_t bi = 0;
        while (bi < blocks.size() && blocks[bi].first < t)
          emit(blocks[bi].first, blocks[bi].second), ++bi;
        emit(t, diag);
        while (bi < blocks.size())
          emit(blocks[bi].first, blocks[bi].second), ++bi;
      }
    }
  }

  // AᵀDb, accumulated serially in row order (cheap relative to the blocks).
  cache.atdb.assign(static_cast<std::size_t>(g.cols), 0.0);
  bool any_b = false;
  for (double v : system.b)
    if (v != 0.0) {
      any_b = true;
      break;
    }
  if (any_b) {
    for (std::int64_t r = 0; r < system.m(); ++r) {
      const double s = system.d_weights[static_cast<std::size_t>(r)] *
                       system.b[static_cast<std::size_t>(r)];
      if (s == 0.0)
        continue;
      for (std::int64_t e = system.a.row_ptr[static_cast<std::size_t>(r)];
           e < system.a.row_ptr[static_cast<std::size_t>(r) + 1]; ++e)
        cache.atdb[static_cast<std::size_t>(
            system.a.col[static_cast<std::size_t>(e)])] +=
            s * system.a.val[static_cast<std::size_t>(e)];
    }
  }
  return cache;
}

NormalSystem normal_from_cache(const GramCache &cache, const SparseSystem &system,
                               std::span<const double> lambda,
                               std::span<const double> b_diag,
                               std::span<const double> d) {
  const std::int64_t n = cache.gram.cols;
  if (static_cast<std::int64_t>(lambda.size()) != n ||
      static_cast<std::int64_t>(b_diag.size()) != n ||
      static_cast<std::int64_t>(d.size()) != n)
    throw DataError("regularization vectors must have length n = " +
                    std::to_string(n));
  for (double v : lambda)
    if (!(v >= 0.0))
      throw DataError("lambda entries must be nonnegative");

  // Nothing pins the global frame: without a fixed tile, a constant shift
  // of every tile is in the null space whenever the model has translation
  // parameters, so at least one of them needs positive regularization. The
  // rigid-approximation model has no translation class; any positive entry
  // counts there.
  if (system.fixed.empty()) {
    const int nc = coeffs_per_tile(system.kind);
    const bool has_tr_class = system.kind != ModelKind::RigidApprox;
    bool pinned = false;
    for (std::int64_t i = 0; i < n && !pinned; ++i) {
      const double v = lambda[static_cast<std::size_t>(i)] *
                       b_diag[static_cast<std::size_t>(i)] *
                       b_diag[static_cast<std::size_t>(i)];
      if (v <= 0.0)
        continue;
      pinned = !has_tr_class ||
               coeff_class(system.kind, static_cast<int>(i % nc)) ==
                   ParamClass::Translation;
    }
    if (!pinned)
      throw SolverError(
          "singular system: no tile is fixed and no positive regularization "
          "pins the global frame (fix a tile or set lambda > 0)");
  }

  NormalSystem ns;
  ns.a_tilde = cache.gram;
  ns.b_tilde.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double lb = lambda[static_cast<std::size_t>(i)] *
                      b_diag[static_cast<std::size_t>(i)];
    ns.b_tilde[static_cast<std::size_t>(i)] =
        cache.atdb[static_cast<std::size_t>(i)] +
        lb * d[static_cast<std::size_t>(i)];
    // Diagonal slot always exists: every tile block stores a dense k×k.
    bool found = false;
    for (std::int64_t e = ns.a_tilde.row_ptr[static_cast<std::size_t>(i)];
         e < ns.a_tilde.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
      if (ns.a_tilde.col[static_cast<std::size_t>(e)] == i) {
        ns.a_tilde.val[static_cast<std::size_t>(e)] +=
            lb * b_diag[static_cast<std::size_t>(i)];
        found = true;
        break;
      }
    }
    if (!found)
      throw SolverError("internal: missing diagonal slot in normal matrix");
  }

  for (std::int64_t r = 0; r < n; ++r) {
    bool nonzero = false;
    for (std::int64_t e = ns.a_tilde.row_ptr[static_cast<std::size_t>(r)];
         e < ns.a_tilde.row_ptr[static_cast<std::size_t>(r) + 1] && !nonzero; ++e)
      nonzero = ns.a_tilde.val[static_cast<std::size_t>(e)] != 0.0;
    if (!nonzero) {
      const int nc = coeffs_per_tile(system.kind);
      throw SolverError(
          "singular system: zero row/column for parameter " +
          std::to_string(r % nc) + " of tile '" +
          system.tile_order[static_cast<std::size_t>(r / nc)] + "'");
    }
  }
  return ns;
}

NormalSystem build_normal_equations(const SparseSystem &system,
                                    std::span<const double> lambda,
                                    std::span<const double> b_diag,
                                    std::span<const double> d) {
  return normal_from_cache(build_gram_cache(system), system, lambda, b_diag, d);
}

std::vector<double>
pack_solution(const SparseSystem &system,
              const std::map<std::string, TransformParams> &t) {
  const int nc = coeffs_per_tile(system.kind);
  std::vector<double> x(static_cast<std::size_t>(system.n()), 0.0);
  for (std::size_t i = 0; i < system.tile_order.size(); ++i) {
    auto it = t.find(system.tile_order[i]);
    if (it == t.end())
      throw DataError("solution is missing tile '" + system.tile_order[i] + "'");
    const TransformParams pt = promote(it->second, system.kind);
    for (int c = 0; c < nc; ++c)
      x[i * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)] =
          pt.coeffs[static_cast<std::size_t>(c)];
  }
  return x;
}

std::map<std::string, TransformParams>
unpack_solution(const SparseSystem &system, std::span<const double> x) {
  const int nc = coeffs_per_tile(system.kind);
  if (static_cast<std::int64_t>(x.size()) != system.n())
    throw DataError("solution vector has length " + std::to_string(x.size()) +
                    ", expected " + std::to_string(system.n()));
  std::map<std::string, TransformParams> out;
  for (std::size_t i = 0; i < system.tile_order.size(); ++i) {
    TransformParams t;
    t.kind = system.kind;
    t.coeffs.assign(x.begin() + static_cast<std::ptrdiff_t>(i) * nc,
                    x.begin() + static_cast<std::ptrdiff_t>(i + 1) * nc);
    out[system.tile_order[i]] = std::move(t);
  }
  for (const auto &[id, t] : system.fixed)
    out[id] = t;
  return out;
}

} // namespace montage
