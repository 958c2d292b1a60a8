#include "montage/model.hpp"

#include "montage/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace montage {

int basis_size(ModelKind kind) {
  switch (kind) {
  case ModelKind::Translation:
    return 1;
  case ModelKind::RigidApprox:
    return 2;
  case ModelKind::Affine:
    return 3;
  case ModelKind::Poly2:
    return 6;
  case ModelKind::Poly3:
    return 10;
  }
  throw std::logic_error("unknown model kind");
}

int coeffs_per_tile(ModelKind kind) { return 2 * basis_size(kind); }

std::string_view model_name(ModelKind kind) {
  switch (kind) {
  case ModelKind::Translation:
    return "translation";
  case ModelKind::RigidApprox:
    return "rigid_approx";
  case ModelKind::Affine:
    return "affine";
  case ModelKind::Poly2:
    return "poly2";
  case ModelKind::Poly3:
    return "poly3";
  }
  return "unknown";
}

std::optional<ModelKind> model_from_name(std::string_view name) {
  if (name == "translation")
    return ModelKind::Translation;
  if (name == "rigid_approx" || name == "rigid")
    return ModelKind::RigidApprox;
  if (name == "affine")
    return ModelKind::Affine;
  if (name == "poly2")
    return ModelKind::Poly2;
  if (name == "poly3")
    return ModelKind::Poly3;
  return std::nullopt;
}

ParamClass coeff_class(ModelKind kind, int coeff_index) {
  const int k = basis_size(kind);
  const int i = coeff_index % k; // same classes in the u and v halves
  switch (kind) {
  case ModelKind::Translation:
    return ParamClass::Translation;
  case ModelKind::RigidApprox:
    return ParamClass::Linear;
  case ModelKind::Affine:
    return i == 2 ? ParamClass::Translation : ParamClass::Linear;
  case ModelKind::Poly2:
    if (i == 2)
      return ParamClass::Translation;
    return i < 2 ? ParamClass::Linear : ParamClass::Quadratic;
  case ModelKind::Poly3:
    if (i == 2)
      return ParamClass::Translation;
    if (i < 2)
      return ParamClass::Linear;
    return i < 6 ? ParamClass::Quadratic : ParamClass::Cubic;
  }
  throw std::logic_error("unknown model kind");
}

void basis_row(ModelKind kind, Point2 p, std::span<double> out) {
  const double x = p.x;
  const double y = p.y;
  switch (kind) {
  case ModelKind::Translation:
    out[0] = 1.0;
    return;
  case ModelKind::RigidApprox:
    out[0] = x;
    out[1] = y;
    return;
  case ModelKind::Affine:
    out[0] = x;
    out[1] = y;
    out[2] = 1.0;
    return;
  case ModelKind::Poly2:
    out[0] = x;
    out[1] = y;
    out[2] = 1.0;
    out[3] = x * x;
    out[4] = x * y;
    out[5] = y * y;
    return;
  case ModelKind::Poly3:
    out[0] = x;
    out[1] = y;
    out[2] = 1.0;
    out[3] = x * x;
    out[4] = x * y;
    out[5] = y * y;
    out[6] = x * x * x;
    out[7] = x * x * y;
    out[8] = x * y * y;
    out[9] = y * y * y;
    return;
  }
  throw std::logic_error("unknown model kind");
}

std::vector<double> basis_row(ModelKind kind, Point2 p) {
  std::vector<double> out(static_cast<std::size_t>(basis_size(kind)));
  basis_row(kind, p, out);
  return out;
}

Point2 model_offset(ModelKind kind, Point2 p) {
  if (kind == ModelKind::Translation)
    return p;
  return {0.0, 0.0};
}

TransformParams TransformParams::identity(ModelKind kind) {
  TransformParams t;
  t.kind = kind;
  const int k = basis_size(kind);
  t.coeffs.assign(static_cast<std::size_t>(2 * k), 0.0);
  switch (kind) {
  case ModelKind::Translation:
    break; // u = x + 0
  case ModelKind::RigidApprox:
    t.coeffs[0] = 1.0; // u = x
    t.coeffs[3] = 1.0; // v = y
    break;
  default:
    t.coeffs[0] = 1.0;                      // x coefficient of u
    t.coeffs[static_cast<std::size_t>(k) + 1] = 1.0; // y coefficient of v
    break;
  }
  return t;
}

TransformParams TransformParams::affine(double a1, double a2, double a0,
                                        double a4, double a5, double a3) {
  TransformParams t;
  t.kind = ModelKind::Affine;
  t.coeffs = {a1, a2, a0, a4, a5, a3};
  return t;
}

TransformParams TransformParams::rotation_translation(double theta, double tx,
                                                      double ty) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return affine(c, -s, tx, s, c, ty);
}

Point2 apply_transform(const TransformParams &t, Point2 p) {
  const int k = basis_size(t.kind);
  if (t.coeffs.size() != static_cast<std::size_t>(2 * k))
    throw DataError("transform for model '" + std::string(model_name(t.kind)) +
                    "' must have " + std::to_string(2 * k) + " coefficients");
  double phi[10];
  basis_row(t.kind, p, std::span<double>(phi, static_cast<std::size_t>(k)));
  Point2 out = model_offset(t.kind, p);
  for (int i = 0; i < k; ++i) {
    out.x += phi[i] * t.coeffs[static_cast<std::size_t>(i)];
    out.y += phi[i] * t.coeffs[static_cast<std::size_t>(k + i)];
  }
  return out;
}

double linear_area_scale(const TransformParams &t) {
  switch (t.kind) {
  case ModelKind::Translation:
    return 1.0;
  case ModelKind::RigidApprox:
    return std::abs(t.coeffs[0] * t.coeffs[3] - t.coeffs[1] * t.coeffs[2]);
  case ModelKind::Affine:
    return std::abs(t.coeffs[0] * t.coeffs[4] - t.coeffs[1] * t.coeffs[3]);
  case ModelKind::Poly2:
  case ModelKind::Poly3:
    throw DataError("linear_area_scale is undefined for polynomial models; "
                    "use boundary-sampled deformation ratios");
  }
  throw std::logic_error("unknown model kind");
}

std::pair<std::int64_t, std::int64_t> param_offset(std::int64_t tile_index,
                                                   ModelKind kind) {
  const std::int64_t nc = coeffs_per_tile(kind);
  return {tile_index * nc, (tile_index + 1) * nc};
}

TransformParams promote(const TransformParams &t, ModelKind target) {
  if (t.kind == target)
    return t;
  const int k_src = basis_size(t.kind);
  const int k_dst = basis_size(target);

  // Normalize the source into (linear 2x2, translation) form first.
  double lin[4] = {1.0, 0.0, 0.0, 1.0}; // a1 a2 / a4 a5
  double tr[2] = {0.0, 0.0};
  switch (t.kind) {
  case ModelKind::Translation:
    tr[0] = t.coeffs[0];
    tr[1] = t.coeffs[1];
    break;
  case ModelKind::RigidApprox:
    lin[0] = t.coeffs[0];
    lin[1] = t.coeffs[1];
    lin[2] = t.coeffs[2];
    lin[3] = t.coeffs[3];
    break;
  case ModelKind::Affine:
  case ModelKind::Poly2:
  case ModelKind::Poly3:
    lin[0] = t.coeffs[0];
    lin[1] = t.coeffs[1];
    tr[0] = t.coeffs[2];
    lin[2] = t.coeffs[static_cast<std::size_t>(k_src)];
    lin[3] = t.coeffs[static_cast<std::size_t>(k_src) + 1];
    tr[1] = t.coeffs[static_cast<std::size_t>(k_src) + 2];
    break;
  }

  TransformParams out;
  out.kind = target;
  out.coeffs.assign(static_cast<std::size_t>(2 * k_dst), 0.0);
  switch (target) {
  case ModelKind::Translation: {
    bool pure_shift = lin[0] == 1.0 && lin[1] == 0.0 && lin[2] == 0.0 &&
                      lin[3] == 1.0;
    for (int i = 3; i < k_src; ++i)
      pure_shift = pure_shift && t.coeffs[static_cast<std::size_t>(i)] == 0.0 &&
                   t.coeffs[static_cast<std::size_t>(k_src + i)] == 0.0;
    if (!pure_shift)
      throw DataError("cannot demote a transform with non-translation terms "
                      "to the translation model");
    out.coeffs[0] = tr[0];
    out.coeffs[1] = tr[1];
    break;
  }
  case ModelKind::RigidApprox:
    out.coeffs = {lin[0], lin[1], lin[2], lin[3]};
    break;
  case ModelKind::Affine:
  case ModelKind::Poly2:
  case ModelKind::Poly3: {
    out.coeffs[0] = lin[0];
    out.coeffs[1] = lin[1];
    out.coeffs[2] = tr[0];
    out.coeffs[static_cast<std::size_t>(k_dst)] = lin[2];
    out.coeffs[static_cast<std::size_t>(k_dst) + 1] = lin[3];
    out.coeffs[static_cast<std::size_t>(k_dst) + 2] = tr[1];
    // Copy any higher-order terms the source already had.
    for (int i = 3; i < std::min(k_src, k_dst); ++i) {
      out.coeffs[static_cast<std::size_t>(i)] = t.coeffs[static_cast<std::size_t>(i)];
      out.coeffs[static_cast<std::size_t>(k_dst + i)] =
          t.coeffs[static_cast<std::size_t>(k_src + i)];
    }
    break;
  }
  }
  return out;
}

} // namespace montage
