#pragma once

#include "montage/assembly.hpp"
#include "montage/model.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace testhelp {

using namespace montage;

// Deterministic test point generator.
inline std::vector<Point2> random_points(std::uint64_t seed, std::size_t n,
                                         double lo = -100.0, double hi = 100.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Point2> pts(n);
  for (Point2 &p : pts)
    p = {dist(rng), dist(rng)};
  return pts;
}

// Composition g ∘ t for affine transforms: apply t, then g.
inline TransformParams compose_affine(const TransformParams &g,
                                      const TransformParams &t) {
  const auto &a = g.coeffs; // a1 a2 a0 a4 a5 a3
  const auto &b = t.coeffs;
  return TransformParams::affine(
      a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4],
      a[0] * b[2] + a[1] * b[5] + a[2], a[3] * b[0] + a[4] * b[3],
      a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]);
}

inline TileSpec tile(const std::string &id, double w = 1000.0, double h = 1000.0,
                     int z = 0) {
  TileSpec t;
  t.tile_id = id;
  t.z = z;
  t.width = w;
  t.height = h;
  return t;
}

// Match set generated from ground-truth transforms: world points drawn in a
// box, mapped into each tile's frame through the inverse truths (affine
// only), optional per-side noise.
inline MatchSet matches_from_truth(const std::string &p_id,
                                   const std::string &q_id,
                                   const TransformParams &tp,
                                   const TransformParams &tq,
                                   const std::vector<Point2> &world,
                                   double sigma = 0.0,
                                   std::uint64_t seed = 9) {
  auto invert = [](const TransformParams &t, Point2 u) {
    const auto &c = t.coeffs;
    const double det = c[0] * c[4] - c[1] * c[3];
    const double dx = u.x - c[2];
    const double dy = u.y - c[5];
    return Point2{(c[4] * dx - c[1] * dy) / det,
                  (-c[3] * dx + c[0] * dy) / det};
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  MatchSet ms;
  ms.p_tile = p_id;
  ms.q_tile = q_id;
  for (const Point2 &u : world) {
    Point2 p = invert(tp, u);
    Point2 q = invert(tq, u);
    if (sigma > 0.0) {
      p.x += noise(rng);
      p.y += noise(rng);
      q.x += noise(rng);
      q.y += noise(rng);
    }
    ms.p.push_back(p);
    ms.q.push_back(q);
  }
  return ms;
}

class TempDir {
public:
  explicit TempDir(const std::string &name) {
    path_ = std::filesystem::temp_directory_path() /
            ("montage_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string &name) const {
    return (path_ / name).string();
  }

private:
  std::filesystem::path path_;
};

} // namespace testhelp
