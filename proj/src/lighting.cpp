#include "nrroom/lighting.hpp"

#include <cmath>

#include "nrroom/errors.hpp"

namespace nrroom {

Vec3 irradiance(const ShIrradiance& sh, const Vec3& n) {
  return irradiance_eval<double>(sh.coeffs, n);
}

ShIrradiance project_envmap(const Image& envmap) {
  if (envmap.w != 2 * envmap.h || envmap.h < 1) throw BadAspect();
  const int W = envmap.w, H = envmap.h;

  // Cosine-lobe convolution factors A_l / pi for bands 0..2.
  static const double kBand[9] = {1.0,       2.0 / 3.0, 2.0 / 3.0,
                                  2.0 / 3.0, 0.25,      0.25,
                                  0.25,      0.25,      0.25};

  // Area-weighted mean first: the DC term of a constant map is handled
  // analytically, so residual quadrature error cannot tint flat lighting.
  double wsum = 0.0;
  Vec3 mean{0, 0, 0};
  for (int v = 0; v < H; ++v) {
    double theta = M_PI / 2.0 - M_PI * (v + 0.5) / H;  // latitude
    double wlat = std::cos(theta);
    for (int u = 0; u < W; ++u) {
      mean += envmap.rgb(u, v) * wlat;
      wsum += wlat;
    }
  }
  mean = mean / wsum;

  std::array<double, 27> L{};  // radiance SH coefficients of the residual
  const double dphi = 2.0 * M_PI / W;
  const double dtheta = M_PI / H;
  for (int v = 0; v < H; ++v) {
    double theta = M_PI / 2.0 - M_PI * (v + 0.5) / H;
    double domega = dphi * dtheta * std::cos(theta);
    for (int u = 0; u < W; ++u) {
      double phi = 2.0 * M_PI * (u + 0.5) / W - M_PI;
      Vec3 dir{std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
               std::sin(theta)};
      Vec3 r = envmap.rgb(u, v) - mean;
      std::array<double, 9> y = sh_basis(dir);
      for (int i = 0; i < 9; ++i) {
        double w = y[i] * domega;
        L[3 * i + 0] += r.x * w;
        L[3 * i + 1] += r.y * w;
        L[3 * i + 2] += r.z * w;
      }
    }
  }

  ShIrradiance sh;
  for (int i = 0; i < 9; ++i)
    for (int ch = 0; ch < 3; ++ch) sh.coeffs[3 * i + ch] = kBand[i] * L[3 * i + ch];
  // constant part: irradiance(n) == mean for every n
  sh.coeffs[0] += mean.x / 0.282095;
  sh.coeffs[1] += mean.y / 0.282095;
  sh.coeffs[2] += mean.z / 0.282095;
  return sh;
}

Image augment_image(const Image& image, const Image& normals, const ShIrradiance& sh) {
  if (image.w != normals.w || image.h != normals.h)
    throw ValidationError("augment_image: image/normals size mismatch");
  if (normals.c < 3) throw ValidationError("augment_image: normals must have 3 channels");
  Image out = image;
  for (int y = 0; y < image.h; ++y) {
    for (int x = 0; x < image.w; ++x) {
      Vec3 n = normals.rgb(x, y);
      double len2 = dot(n, n);
      if (!std::isfinite(len2) || len2 < 1e-12) continue;  // pass through
      Vec3 e = irradiance(sh, n / std::sqrt(len2));
      out.set_rgb(x, y, image.rgb(x, y).cmul(e));
    }
  }
  return out;
}

ShIrradiance interpolate_lighting(const ShIrradiance& a, const ShIrradiance& b, double t) {
  ShIrradiance out;
  for (int i = 0; i < 27; ++i) out.coeffs[i] = (1.0 - t) * a.coeffs[i] + t * b.coeffs[i];
  return out;
}

Vec3 tone_apply(const Vec3& c, const ToneAdjust& ta) {
  return tone_apply<double>(c, ta.t, ta.s);
}

}  // namespace nrroom
