#pragma once

#include "montage/assembly.hpp"
#include "montage/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace montage {

// Synthetic montage/volume generator with known ground truth. All random
// draws come from per-entity streams derived from the seed, so generation
// is reproducible and independent of evaluation order or thread count.
struct SynthConfig {
  int grid_rows = 4;
  int grid_cols = 4;
  int sections = 1;
  double tile_w = 1000.0;
  double tile_h = 1000.0;
  double overlap_fraction = 0.1; // of the tile dimension, in (0,1)
  int matches_per_pair = 10;
  double noise_sigma_px = 0.0;
  ModelKind truth_model = ModelKind::Affine;

  // Perturbation scales per parameter class, applied to the nominal grid
  // placement: translation jitter in px, rotation in degrees, an additive
  // jitter on the 2x2 linear entries, and peak corner displacement in px
  // for the quadratic/cubic monomials of polynomial truths.
  double trans_jitter_px = 5.0;
  double rot_jitter_deg = 1.0;
  double linear_jitter = 0.005;
  double quad_jitter_px = 0.0;
  double cubic_jitter_px = 0.0;

  double section_drift_px = 20.0; // cumulative per-section drift (volumes)
  bool cross_z2 = false;          // also match sections two apart
  // Tiles of adjacent sections are matched when their nominal footprints
  // share at least this fraction of the tile area.
  double cross_overlap_min_frac = 0.25;

  std::uint64_t seed = 1;
};

struct GroundTruth {
  std::map<std::string, TransformParams> transforms; // tile -> local-to-world
};

struct SynthDataset {
  std::vector<TileSpec> tiles;
  std::vector<MatchSet> matches;
  GroundTruth truth;
};

// Single-section grid: tiles on an overlapping grid, truth transforms =
// nominal placement composed with seeded perturbations, matches sampled
// uniformly in each true overlap region and mapped into tile-local frames
// through the inverse truths, then perturbed per side by isotropic noise.
SynthDataset generate_montage(const SynthConfig &cfg);

// Stacked sections with per-section drift plus cross-section match sets
// between vertically overlapping tiles of adjacent z.
SynthDataset generate_volume(const SynthConfig &cfg);

struct GaugeAlignment {
  TransformParams g; // global affine applied to the solution
  double rms_px = 0.0;
  double max_px = 0.0;
};

// Accounts for the frame-of-reference freedom of a match-only solve: finds
// the single global affine g minimizing the squared distance between
// g(solution(corner)) and truth(corner) over the four corners of every
// tile, and reports the corner error statistics after alignment.
GaugeAlignment gauge_align(const std::vector<TileSpec> &tiles,
                           const std::map<std::string, TransformParams> &solution,
                           const GroundTruth &truth);

} // namespace montage
