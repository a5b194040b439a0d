#pragma once

#include <array>

#include "nrroom/ad.hpp"
#include "nrroom/image.hpp"
#include "nrroom/vec.hpp"

namespace nrroom {

// Real SH basis, bands 0..2, order [00, 1-1, 10, 11, 2-2, 2-1, 20, 21, 22].
template <class T>
std::array<T, 9> sh_basis(const V3<T>& n) {
  T xx = n.x * n.x, yy = n.y * n.y, zz = n.z * n.z;
  return {T(0.282095),
          T(0.488603) * n.y,
          T(0.488603) * n.z,
          T(0.488603) * n.x,
          T(1.092548) * (n.x * n.y),
          T(1.092548) * (n.y * n.z),
          T(0.315392) * (T(3.0) * zz - T(1.0)),
          T(1.092548) * (n.x * n.z),
          T(0.546274) * (xx - yy)};
}

// Diffuse environment lighting as 27 irradiance coefficients (9 SH x RGB,
// channel-major: coeffs[3*i + ch]). Normalized so a uniform unit-radiance
// environment yields gain 1.0 for every normal; lighting acts as a unitless
// multiplier on albedo.
struct ShIrradiance {
  std::array<double, 27> coeffs{};

  static ShIrradiance uniform(double gain = 1.0) {
    ShIrradiance sh;
    // DC basis is 0.282095; irradiance(n) = c0 * Y00 == gain
    double c0 = gain / 0.282095;
    sh.coeffs[0] = sh.coeffs[1] = sh.coeffs[2] = c0;
    return sh;
  }
};

// Order-2 SH irradiance lookup, clamped at 0.
template <class T>
V3<T> irradiance_eval(const std::array<T, 27>& c, const V3<T>& n) {
  std::array<T, 9> y = sh_basis(n);
  V3<T> e{T(0), T(0), T(0)};
  for (int i = 0; i < 9; ++i) {
    e.x = e.x + c[3 * i + 0] * y[i];
    e.y = e.y + c[3 * i + 1] * y[i];
    e.z = e.z + c[3 * i + 2] * y[i];
  }
  using std::max;
  using ad::max;
  return {max(e.x, T(0)), max(e.y, T(0)), max(e.z, T(0))};
}

Vec3 irradiance(const ShIrradiance& sh, const Vec3& n);

// Cosine-convolved order-2 SH projection of an equirectangular radiance map
// (width must be 2x height). The mean is handled analytically so constant
// maps project to exactly uniform irradiance.
ShIrradiance project_envmap(const Image& envmap);

// out(p) = image(p) * irradiance(normal(p)); pixels whose normal is invalid
// (near-zero or non-finite) pass through unchanged.
Image augment_image(const Image& image, const Image& normals, const ShIrradiance& sh);

ShIrradiance interpolate_lighting(const ShIrradiance& a, const ShIrradiance& b, double t);

// Per-object affine color correction: c~ = (c - t) / s.
struct ToneAdjust {
  Vec3 t{0, 0, 0};
  Vec3 s{1, 1, 1};
};

template <class T>
V3<T> tone_apply(const V3<T>& c, const V3<T>& shift, const V3<T>& scale) {
  return {(c.x - shift.x) / scale.x, (c.y - shift.y) / scale.y, (c.z - shift.z) / scale.z};
}

Vec3 tone_apply(const Vec3& c, const ToneAdjust& ta);

}  // namespace nrroom
