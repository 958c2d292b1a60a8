#pragma once

#include "montage/assembly.hpp"
#include "montage/model.hpp"
#include "montage/regularize.hpp"

#include <array>
#include <string>
#include <vector>

namespace montage {

// Centered copies of the match sets, used by the similarity solve. Pairs
// with fewer than two points are dropped (a single point gives no rotation
// information once centered).
struct CenteredMatches {
  std::vector<MatchSet> centered;
  std::vector<Point2> p_centroids;
  std::vector<Point2> q_centroids;
  std::vector<std::string> dropped; // "p_tile|q_tile" of dropped pairs
};

CenteredMatches center_matches(const std::vector<MatchSet> &matches);

// Per-tile rigid approximation: a 2x2 block rescaled to unit |det| plus a
// translation, used as the explicit regularization target.
struct RigidApproxSolution {
  std::vector<std::string> tile_order;
  std::vector<std::array<double, 4>> rotation; // m1 m2 / m3 m4
  std::vector<Point2> translation;
  std::vector<double> scale_removed; // factor divided out per tile
  // |m1 - m4| + |m2 + m3| relative to the block norm: how far the solved
  // block is from a true similarity. Reported, never asserted.
  std::vector<double> similarity_defect;
  std::vector<bool> degenerate; // fell back to the identity rotation
  std::string anchor;           // lowest tile_id, fixed to identity
};

// Builds the similarity-augmented system: for every centered point the
// original row plus a row built from the rotated point (x,y) -> (y,-x), in
// both the u and v column groups. The anchor tile is fixed to the identity
// rotation, which moves its blocks to the right-hand side.
SparseSystem build_similarity_system(const CenteredMatches &centered,
                                     const std::vector<TileSpec> &tiles);

// Divides each 2x2 block by sqrt(|det|) so its determinant has magnitude 1.
// Blocks with |det| < 1e-14 are flagged and replaced by the identity.
RigidApproxSolution
rescale_to_unit_area(const std::vector<std::string> &tile_order,
                     const std::vector<std::array<double, 4>> &blocks,
                     const std::string &anchor);

// Solves the translation-only system over all tiles with points pre-rotated
// by each tile's block; the anchor translation is fixed to (0,0).
void solve_translations(const std::vector<TileSpec> &tiles,
                        const std::vector<MatchSet> &matches,
                        RigidApproxSolution &rigid);

// Regularization target d plus its diagonal weights for a target model.
struct PriorVector {
  std::vector<double> d;
  std::vector<double> b_diag;      // defaults to all ones
  std::vector<double> lambda_diag; // expanded LambdaSpec
};

// Packs the rigid solution into the target model's coefficient layout
// (rotation and translation into the linear/translation slots, zeros for
// higher-order monomials) for the tiles listed in tile_order.
PriorVector assemble_prior(const RigidApproxSolution &rigid, ModelKind kind,
                           const LambdaSpec &lambda_spec,
                           const std::vector<TileSpec> &tiles_in_order);

// Full pipeline: center -> similarity solve -> rescale -> translations.
// Tiles missing from the similarity system (all their pairs dropped) fall
// back to the identity rotation and are flagged degenerate.
RigidApproxSolution estimate_rigid_prior(const std::vector<TileSpec> &tiles,
                                         const std::vector<MatchSet> &matches);

// The rigid approximation of one tile as an affine transform.
TransformParams rigid_as_affine(const RigidApproxSolution &rigid,
                                std::size_t index);

} // namespace montage
