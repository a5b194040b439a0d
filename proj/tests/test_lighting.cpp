#include <cmath>
#include <random>

#include "doctest.h"
#include "nrroom/lighting.hpp"
#include "nrroom/render.hpp"
#include "test_util.hpp"

using namespace nrroom;

namespace {

Vec3 random_unit(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (;;) {
    Vec3 v{uni(gen), uni(gen), uni(gen)};
    double n = norm(v);
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

Image constant_envmap(int h, Vec3 value) {
  Image img(2 * h, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) img.set_rgb(x, y, value);
  return img;
}

// Brute-force cosine-weighted hemisphere integral of an equirect radiance
// map; the independent oracle for SH irradiance values.
Vec3 irradiance_bruteforce(const Image& env, const Vec3& n, int steps = 256) {
  Vec3 total{0, 0, 0};
  for (int v = 0; v < steps; ++v) {
    double theta = M_PI / 2.0 - M_PI * (v + 0.5) / steps;
    double domega = (2.0 * M_PI / (2 * steps)) * (M_PI / steps) * std::cos(theta);
    for (int u = 0; u < 2 * steps; ++u) {
      double phi = 2.0 * M_PI * (u + 0.5) / (2 * steps) - M_PI;
      Vec3 dir{std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), std::sin(theta)};
      double c = dot(dir, n);
      if (c <= 0) continue;
      double uu, vv;
      equirect_uv(dir, env.w, env.h, uu, vv);
      int px = std::clamp(static_cast<int>(std::lround(uu)), 0, env.w - 1);
      int py = std::clamp(static_cast<int>(std::lround(vv)), 0, env.h - 1);
      total += env.rgb(px, py) * (c * domega);
    }
  }
  return total / M_PI;
}

}  // namespace

TEST_SUITE_BEGIN("lighting");

TEST_CASE("uniform environment projects to unit irradiance") {
  Image env = constant_envmap(32, {1, 1, 1});
  ShIrradiance sh = project_envmap(env);
  auto gen = test::rng(5);
  for (int i = 0; i < 1000; ++i) {
    Vec3 e = irradiance(sh, random_unit(gen));
    CHECK(std::abs(e.x - 1.0) < 1e-3);
    CHECK(std::abs(e.y - 1.0) < 1e-3);
    CHECK(std::abs(e.z - 1.0) < 1e-3);
  }
}

TEST_CASE("projection rejects bad aspect ratios") {
  Image bad(10, 10, 3);
  CHECK_THROWS_AS(project_envmap(bad), BadAspect);
}

TEST_CASE("upper-hemisphere light brightens upward normals") {
  Image env(64, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) env.set_rgb(x, y, y < 16 ? Vec3{1, 1, 1} : Vec3{0, 0, 0});
  ShIrradiance sh = project_envmap(env);
  Vec3 up = irradiance(sh, {0, 0, 1});
  Vec3 down = irradiance(sh, {0, 0, -1});
  CHECK(up.x > down.x);
  // order-2 band limit puts the pole values at 1 and 0 exactly; allow the
  // quadrature a hair of slack
  CHECK(up.x > 0.9);
  CHECK(up.x < 1.05);
  CHECK(down.x >= 0.0);
  CHECK(down.x < 0.1);
}

TEST_CASE("single bright texel: maximal toward the texel, matches brute force") {
  const int h = 32;
  Image env(2 * h, h, 3);
  int tx = 40, ty = 10;
  env.set_rgb(tx, ty, {50, 50, 50});
  ShIrradiance sh = project_envmap(env);

  Vec3 texel_dir = equirect_dir(tx, ty, env.w, env.h);
  Vec3 at_texel = irradiance(sh, texel_dir);
  auto gen = test::rng(21);
  for (int i = 0; i < 200; ++i) {
    Vec3 n = random_unit(gen);
    CHECK(irradiance(sh, n).x <= at_texel.x + 1e-9);
  }

  // order-2 SH is band limited; compare against the SH-projected brute-force
  // integral at moderate tolerance
  for (const Vec3& n : {texel_dir, Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0, -1, 0}}) {
    Vec3 ref = irradiance_bruteforce(env, n);
    Vec3 got = irradiance(sh, n);
    CHECK(std::abs(got.x - ref.x) < 0.05 * std::max(1.0, std::abs(ref.x)));
  }
}

TEST_CASE("projection is linear in the radiance map") {
  const int h = 16;
  Image env(2 * h, h, 3);
  auto gen = test::rng(8);
  std::uniform_real_distribution<double> uni(0.0, 2.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) env.set_rgb(x, y, {uni(gen), uni(gen), uni(gen)});
  // a power-of-two factor keeps the float32 pixel scaling exact
  Image scaled = env;
  for (float& f : scaled.data) f *= 4.0f;
  ShIrradiance a = project_envmap(env);
  ShIrradiance b = project_envmap(scaled);
  for (int i = 0; i < 27; ++i)
    CHECK(b.coeffs[i] == doctest::Approx(4.0 * a.coeffs[i]).epsilon(1e-12));
}

TEST_CASE("rotation equivariance for a band-limited map") {
  const int h = 64;
  Image env(2 * h, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) {
      Vec3 d = equirect_dir(x, y, 2 * h, h);
      // smooth low-order radiance pattern
      double v = 0.6 + 0.3 * d.z + 0.2 * d.x - 0.1 * d.y;
      env.set_rgb(x, y, {v, 0.8 * v, 1.1 * v});
    }
  ShIrradiance sh = project_envmap(env);

  // rotate the map a quarter turn about z: exact pixel shift
  Image rot(2 * h, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * h; ++x) rot.set_rgb((x + h / 2) % (2 * h), y, env.rgb(x, y));
  ShIrradiance sh_rot = project_envmap(rot);

  Mat3 rz = yaw_matrix(M_PI / 2.0);
  auto gen = test::rng(13);
  for (int i = 0; i < 200; ++i) {
    Vec3 n = random_unit(gen);
    Vec3 a = irradiance(sh_rot, n);
    Vec3 b = irradiance(sh, transpose(rz).mul(n));
    CHECK(std::abs(a.x - b.x) < 1e-2);
    CHECK(std::abs(a.y - b.y) < 1e-2);
    CHECK(std::abs(a.z - b.z) < 1e-2);
  }
}

TEST_CASE("energy: constant map of value v") {
  Image env = constant_envmap(24, {0.7, 0.7, 0.7});
  ShIrradiance sh = project_envmap(env);
  auto gen = test::rng(55);
  for (int i = 0; i < 1000; ++i) {
    Vec3 e = irradiance(sh, random_unit(gen));
    CHECK(std::abs(e.x - 0.7) < 1e-3);
  }
}

TEST_CASE("augment_image: identity, exact linearity, invalid normals") {
  const int w = 16, h = 8;
  Image img(w, h, 3);
  Image normals(w, h, 3);
  auto gen = test::rng(3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.set_rgb(x, y, {uni(gen), uni(gen), uni(gen)});
      normals.set_rgb(x, y, x == 0 ? Vec3{0, 0, 0} : random_unit(gen));
    }

  Image same = augment_image(img, normals, ShIrradiance::uniform(1.0));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));

  ShIrradiance sh = ShIrradiance::uniform(0.8);
  sh.coeffs[6] = 0.2;  // some directional variation
  ShIrradiance sh2 = sh;
  for (double& c : sh2.coeffs) c *= 2.0;
  Image lit = augment_image(img, normals, sh);
  Image lit2 = augment_image(img, normals, sh2);
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x)  // x == 0 column carries invalid normals
      for (int c = 0; c < 3; ++c) CHECK(lit2.at(x, y, c) == 2.0f * lit.at(x, y, c));

  // zero normal passes through
  for (int y = 0; y < h; ++y) CHECK(lit.at(0, y, 0) == img.at(0, y, 0));

  // direct per-pixel reference multiply
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x) {
      Vec3 e = irradiance(sh, normals.rgb(x, y));
      Vec3 expect = img.rgb(x, y).cmul(e);
      CHECK(lit.at(x, y, 0) == doctest::Approx(expect.x).epsilon(1e-6));
      CHECK(lit.at(x, y, 1) == doctest::Approx(expect.y).epsilon(1e-6));
    }
}

TEST_CASE("tone adjuster arithmetic and round trip") {
  CHECK(tone_apply(Vec3{0.3, 0.6, 0.9}, ToneAdjust{}).x == doctest::Approx(0.3));

  ToneAdjust ta{{0.1, 0.1, 0.1}, {2, 2, 2}};
  Vec3 out = tone_apply(Vec3{0.5, 0.5, 0.5}, ta);
  CHECK(out.x == doctest::Approx(0.2));
  CHECK(out.y == doctest::Approx(0.2));
  CHECK(out.z == doctest::Approx(0.2));

  auto gen = test::rng(77);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Vec3 c{uni(gen), uni(gen), uni(gen)};
    ToneAdjust t{{uni(gen) * 0.2, uni(gen) * 0.2, uni(gen) * 0.2},
                 {0.5 + uni(gen), 0.5 + uni(gen), 0.5 + uni(gen)}};
    Vec3 fwd = tone_apply(c, t);
    Vec3 back{fwd.x * t.s.x + t.t.x, fwd.y * t.s.y + t.t.y, fwd.z * t.s.z + t.t.z};
    CHECK(std::abs(back.x - c.x) < 1e-7);
    CHECK(std::abs(back.y - c.y) < 1e-7);
    CHECK(std::abs(back.z - c.z) < 1e-7);
  }
}

TEST_CASE("lighting interpolation endpoints are exact") {
  auto gen = test::rng(31);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  ShIrradiance a, b;
  for (int i = 0; i < 27; ++i) {
    a.coeffs[i] = uni(gen);
    b.coeffs[i] = uni(gen);
  }
  ShIrradiance at0 = interpolate_lighting(a, b, 0.0);
  ShIrradiance at1 = interpolate_lighting(a, b, 1.0);
  for (int i = 0; i < 27; ++i) {
    CHECK(at0.coeffs[i] == a.coeffs[i]);
    CHECK(at1.coeffs[i] == b.coeffs[i]);
  }
  ShIrradiance mid = interpolate_lighting(a, b, 0.25);
  for (int i = 0; i < 27; ++i)
    CHECK(mid.coeffs[i] == doctest::Approx(0.75 * a.coeffs[i] + 0.25 * b.coeffs[i]));
}

TEST_SUITE_END();
