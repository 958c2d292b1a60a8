#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace montage {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

// One acquired image tile: identity, section index and pixel dimensions.
struct TileSpec {
  std::string tile_id;
  int z = 0;
  double width = 0.0;  // pixels, > 0
  double height = 0.0; // pixels, > 0
};

// Transformation model of a tile. Coefficient count per tile is twice the
// monomial basis size (one set for u, one for v).
enum class ModelKind { Translation, RigidApprox, Affine, Poly2, Poly3 };

int basis_size(ModelKind kind);     // columns per output coordinate
int coeffs_per_tile(ModelKind kind); // 2 * basis_size

std::string_view model_name(ModelKind kind);
std::optional<ModelKind> model_from_name(std::string_view name);

// Regularization class of each coefficient, following the per-tile packing
// order (u block then v block, monomials in basis order).
enum class ParamClass { Translation, Linear, Quadratic, Cubic };
ParamClass coeff_class(ModelKind kind, int coeff_index);

// Monomial basis evaluated at p, for one output coordinate.
//   Translation -> [1]
//   RigidApprox -> [x, y]
//   Affine      -> [x, y, 1]
//   Poly2       -> [x, y, 1, x^2, x*y, y^2]
//   Poly3       -> Poly2 basis followed by [x^3, x^2*y, x*y^2, y^3]
void basis_row(ModelKind kind, Point2 p, std::span<double> out);
std::vector<double> basis_row(ModelKind kind, Point2 p);

// Part of the map not carried by coefficients: the point itself for the
// Translation model (u = x + t1), zero for every other model. Rows built
// from such models move this term to the right-hand side.
Point2 model_offset(ModelKind kind, Point2 p);

// Packed coefficients for one tile. Layout is u-coefficients in basis order
// followed by v-coefficients, so an affine transform packs as
// (a1, a2, a0, a4, a5, a3) and applies as
//   u = a1*x + a2*y + a0,  v = a4*x + a5*y + a3.
struct TransformParams {
  ModelKind kind = ModelKind::Affine;
  std::vector<double> coeffs;

  static TransformParams identity(ModelKind kind);
  static TransformParams affine(double a1, double a2, double a0, double a4,
                                double a5, double a3);
  // Rotation by theta (radians) about the local origin plus translation.
  static TransformParams rotation_translation(double theta, double tx,
                                              double ty);
};

Point2 apply_transform(const TransformParams &t, Point2 p);

// |a1*a5 - a2*a4|, the absolute determinant of the 2x2 linear part.
// Defined for Translation (1), RigidApprox and Affine; throws for
// polynomial kinds, whose area change is measured by boundary sampling.
double linear_area_scale(const TransformParams &t);

// Column range [first, last) of tile `tile_index` in the packed vector.
std::pair<std::int64_t, std::int64_t> param_offset(std::int64_t tile_index,
                                                   ModelKind kind);

// Re-express params in a higher-order model: identity linear part for a
// promoted translation, zeros for monomials the source model lacks.
TransformParams promote(const TransformParams &t, ModelKind target);

} // namespace montage
