#include <cmath>
#include <random>

#include "doctest.h"
#include "nrroom/render.hpp"
#include "test_util.hpp"

using namespace nrroom;

namespace {

Scene trace_scene() {
  // analytic-only scene for exact intersection oracles
  Scene scene;
  ObjectInstance sphere;
  sphere.id = 1;
  sphere.field = Field(AnalyticField::sphere({0, 0, 0}, 1.0));
  sphere.pose.p = {3, 0, 0};
  finalize_object_geometry(sphere);
  ObjectInstance box;
  box.id = 2;
  box.field = Field(AnalyticField::box({0, 0, 0}, {0.5, 0.5, 0.5}));
  box.pose.p = {0, 3, 0};
  finalize_object_geometry(box);
  scene.objects.push_back(std::move(sphere));
  scene.objects.push_back(std::move(box));
  return scene;
}

// closed-form ray/sphere and ray/box oracles
bool ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r, double& t) {
  Vec3 oc = o - c;
  double b = dot(oc, d);
  double disc = b * b - (dot(oc, oc) - r * r);
  if (disc < 0) return false;
  double s = std::sqrt(disc);
  double t0 = -b - s, t1 = -b + s;
  t = t0 >= 0 ? t0 : t1;
  return t >= 0;
}

bool ray_box(const Vec3& o, const Vec3& d, const Vec3& c, const Vec3& half, double& t) {
  Aabb box{c - half, c + half};
  double t0, t1;
  if (!ray_aabb(o, d, box, t0, t1) || t1 < 0) return false;
  t = t0 >= 0 ? t0 : t1;
  return true;
}

GridField colored_box(Vec3 half, Vec3 color, int n = 48) {
  Aabb bbox{-1.0 * half - Vec3{0.15, 0.15, 0.15}, half + Vec3{0.15, 0.15, 0.15}};
  return bake_grid(AnalyticField::box({0, 0, 0}, half), n, n, n, bbox,
                   [color](const Vec3&) { return color; });
}

}  // namespace

TEST_SUITE_BEGIN("render");

TEST_CASE("equirectangular mapping") {
  Vec3 d = equirect_dir(1, 0, 2, 1);
  CHECK(d.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.z == doctest::Approx(0.0).epsilon(1e-12));

  const int w = 32, h = 16;
  Vec3 top = equirect_dir(5, 0, w, h);
  CHECK(top.z == doctest::Approx(std::sin(M_PI / 2 - M_PI / (2 * h))));

  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      Vec3 dir = equirect_dir(u, v, w, h);
      CHECK(norm(dir) == doctest::Approx(1.0).epsilon(1e-12));
      double ru, rv;
      equirect_uv(dir, w, h, ru, rv);
      Vec3 back = equirect_dir(ru, rv, w, h);
      CHECK(norm(back - dir) < 1e-12);
    }
}

TEST_CASE("pinhole camera and orientation") {
  Vec3 center = pinhole_dir((64 - 1) / 2.0, (48 - 1) / 2.0, 64, 48, 90.0);
  CHECK(center.x == doctest::Approx(1.0).epsilon(1e-9));

  Camera cam;
  cam.r6 = matrix_to_rot6d(yaw_matrix(M_PI / 2));
  cam.position = {1, 2, 3};
  Ray r = camera_ray(cam, 64 / 2.0 - 0.5, 32 / 2.0 - 0.5, 64, 32);
  CHECK(r.origin.x == doctest::Approx(1.0));
  CHECK(r.dir.y == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sphere trace against analytic oracles") {
  Scene scene = trace_scene();
  RenderConfig cfg;
  SceneRenderer renderer(scene, cfg);

  // head-on sphere 3 m ahead
  RayHit hit = renderer.sphere_trace(Ray{{0, 0, 0}, {1, 0, 0}});
  CHECK(hit.hit);
  CHECK(hit.field_index == 1);
  CHECK(std::abs(hit.t - 2.0) < 1e-3);

  // ray parallel to a surface misses
  RayHit miss = renderer.sphere_trace(Ray{{0, 2.4, 0}, {1, 0, 0}});
  CHECK(!miss.hit);

  // back-offset recovers a surface behind the origin: the box spans
  // y in [2.5, 3.5]; from y = 3.2 travelling -y, the rear face is 0.3 behind
  RayHit back = renderer.sphere_trace(Ray{{0, 3.2, 0}, {0, -1, 0}}, 0.5);
  CHECK(back.hit);
  CHECK(back.field_index == 2);
  CHECK(std::abs(back.t - (-0.3)) < 1e-3);
}

TEST_CASE("sphere trace: 1000 random rays vs closed forms") {
  Scene scene = trace_scene();
  RenderConfig cfg;
  SceneRenderer renderer(scene, cfg);
  auto gen = test::rng(1001);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 o{uni(gen) * 0.5, uni(gen) * 0.5, uni(gen) * 0.5};
    Vec3 d = normalized(Vec3{uni(gen) + 0.01, uni(gen), uni(gen) * 0.5});
    RayHit hit = renderer.sphere_trace(Ray{o, d});

    double ts, tb;
    bool hs = ray_sphere(o, d, {3, 0, 0}, 1.0, ts);
    bool hb = ray_box(o, d, {0, 3, 0}, {0.5, 0.5, 0.5}, tb);
    double expect = 1e30;
    int expect_field = -1;
    if (hs && ts < expect) { expect = ts; expect_field = 1; }
    if (hb && tb < expect) { expect = tb; expect_field = 2; }

    if (expect_field < 0) {
      CHECK(!hit.hit);
    } else {
      // grazing rays may legitimately run out of steps
      if (hit.hit) {
        CHECK(hit.field_index == expect_field);
        CHECK(std::abs(hit.t - expect) < std::max(cfg.hit_eps * 10, 1e-3));
        ++hits;
      } else {
        double graze = std::min(std::abs(dot(d, normalized(o + d * expect - Vec3{3, 0, 0}))), 1.0);
        CHECK(graze < 0.2);  // only near-tangent rays may fail to converge
      }
    }
  }
  CHECK(hits > 30);  // most random rays miss the two small targets
}

TEST_CASE("alpha from consecutive sdf samples") {
  CHECK(alpha_from_sdf(0.5, 0.5, 64.0) == 0.0);
  CHECK(alpha_from_sdf(100.0, 99.0, 64.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(alpha_from_sdf(0.3, 0.5, 64.0) == 0.0);  // exiting

  // direct numeric evaluation of the logistic CDF ratio
  double s = 64.0;
  double phi_i = 1.0 / (1.0 + std::exp(-s * 0.01));
  double phi_n = 1.0 / (1.0 + std::exp(-s * -0.01));
  double expect = (phi_i - phi_n) / phi_i;
  CHECK(expect == doctest::Approx(0.4729).epsilon(1e-3));
  CHECK(alpha_from_sdf(0.01, -0.01, s) == doctest::Approx(expect).epsilon(1e-12));

  auto gen = test::rng(5);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    double a = alpha_from_sdf(uni(gen), uni(gen), 32.0);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
}

TEST_CASE("render: opaque box head-on") {
  Scene scene;
  ObjectInstance box;
  box.id = 1;
  box.field = Field(colored_box({0.5, 0.5, 0.5}, {0.8, 0.4, 0.2}));
  box.pose.p = {3, 0, 0};
  finalize_object_geometry(box);
  scene.objects.push_back(std::move(box));

  RenderConfig cfg;
  cfg.sharpness = 512.0;
  SceneRenderer renderer(scene, cfg);
  RenderOut<double> out = renderer.render_ray(Ray{{0, 0, 0}, {1, 0, 0}}, RenderMode::Safe);

  CHECK(out.weights[1] >= 0.99);
  // analytic hit at 2.5; fine spacing = band width / fine samples
  double band = cfg.safe_near_offset + cfg.safe_far_offset;
  CHECK(std::abs(out.depth / out.weights[1] - 2.5) <= 2.0 * band / cfg.fine_samples);
  // head-on face normal is -x; uniform lighting gives irradiance 1
  CHECK(out.color.x == doctest::Approx(0.8).epsilon(0.02));
  CHECK(out.color.y == doctest::Approx(0.4).epsilon(0.02));
  CHECK(out.color.z == doctest::Approx(0.2).epsilon(0.02));
}

TEST_CASE("render: empty scene falls through to the backdrop") {
  Scene scene;
  RenderConfig cfg;
  cfg.background_color = {0.25, 0.5, 0.75};
  SceneRenderer renderer(scene, cfg);
  RenderOut<double> out = renderer.render_ray(Ray{{0, 0, 0}, {1, 0, 0}}, RenderMode::Safe);
  CHECK(out.color.x == doctest::Approx(0.25));
  CHECK(out.color.y == doctest::Approx(0.5));
  CHECK(out.color.z == doctest::Approx(0.75));
  double total = 0;
  for (double w : out.weights) total += w;
  CHECK(total == 0.0);
}

TEST_CASE("render: occlusion kills the far object") {
  Scene scene;
  ObjectInstance near_box, far_box;
  near_box.id = 1;
  near_box.field = Field(colored_box({0.5, 0.5, 0.5}, {0.9, 0.1, 0.1}));
  near_box.pose.p = {2, 0, 0};
  finalize_object_geometry(near_box);
  far_box.id = 2;
  far_box.field = Field(colored_box({0.5, 0.5, 0.5}, {0.1, 0.9, 0.1}));
  far_box.pose.p = {5, 0, 0};
  finalize_object_geometry(far_box);
  scene.objects.push_back(std::move(near_box));
  scene.objects.push_back(std::move(far_box));

  RenderConfig cfg;
  cfg.sharpness = 512.0;
  SceneRenderer renderer(scene, cfg);
  Ray ray{{0, 0, 0}, {1, 0, 0}};
  RenderOut<double> out = renderer.render_ray(ray, RenderMode::Safe);
  CHECK(out.weights[1] >= 0.99);
  CHECK(out.weights[2] <= 0.01);

  // monotone occlusion: removing the occluder can only raise the far weight
  Scene solo;
  ObjectInstance clone = scene.objects[1];
  solo.objects.push_back(std::move(clone));
  SceneRenderer solo_renderer(solo, cfg);
  RenderOut<double> alone = solo_renderer.render_ray(ray, RenderMode::Safe);
  CHECK(alone.weights[1] >= out.weights[2]);
}

TEST_CASE("render invariants on random rays") {
  Scene scene = test::small_scene();
  RenderConfig cfg;
  SceneRenderer renderer(scene, cfg);
  auto gen = test::rng(2024);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    Vec3 o = scene.camera.position + Vec3{uni(gen) * 0.3, uni(gen) * 0.3, uni(gen) * 0.2};
    Vec3 d = normalized(Vec3{uni(gen), uni(gen), uni(gen) * 0.8 + 0.01});
    RayDebug dbg;
    RenderOut<double> out =
        renderer.render_ray(Ray{o, d}, i % 2 ? RenderMode::Safe : RenderMode::Full, nullptr, &dbg);
    double total = 0;
    for (double w : out.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0 + 1e-6);
      total += w;
    }
    CHECK(total <= 1.0 + 1e-6);
    double prev_t = 1.0;
    for (std::size_t j = 0; j < dbg.alphas.size(); ++j) {
      CHECK(dbg.alphas[j] >= 0.0);
      CHECK(dbg.alphas[j] <= 1.0);
      CHECK(dbg.transmittance[j] <= prev_t + 1e-12);
      prev_t = dbg.transmittance[j];
    }
  }
}

TEST_CASE("compositing is independent of object list order") {
  Scene scene = test::small_scene();
  REQUIRE(scene.objects.size() == 2);
  Scene permuted = scene;
  std::swap(permuted.objects[0], permuted.objects[1]);

  RenderConfig cfg;
  RenderImages a = render_image(scene, 32, 16, cfg, RenderMode::Safe);
  RenderImages b = render_image(permuted, 32, 16, cfg, RenderMode::Safe);
  for (std::size_t i = 0; i < a.color.data.size(); ++i) CHECK(a.color.data[i] == b.color.data[i]);
  for (std::size_t i = 0; i < a.depth.data.size(); ++i) CHECK(a.depth.data[i] == b.depth.data[i]);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(a.weights.at(x, y, 0) == b.weights.at(x, y, 0));
      CHECK(a.weights.at(x, y, 1) == b.weights.at(x, y, 2));
      CHECK(a.weights.at(x, y, 2) == b.weights.at(x, y, 1));
    }
}

TEST_CASE("safe-region plans stay in the band around the traced hit") {
  Scene scene;
  ObjectInstance box;
  box.id = 1;
  box.field = Field(colored_box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}));
  box.pose.p = {3, 0, 0};
  finalize_object_geometry(box);
  scene.objects.push_back(std::move(box));
  RenderConfig cfg;
  SceneRenderer renderer(scene, cfg);

  Ray ray{{0, 0, 0}, {1, 0, 0}};
  RayHit hit = renderer.sphere_trace_field(1, ray);
  REQUIRE(hit.hit);
  RaySamplePlan plan = renderer.plan_ray(ray, RenderMode::Safe);
  REQUIRE(plan.fields.size() == 1);
  const auto& ts = plan.fields[0].ts;
  CHECK(static_cast<int>(ts.size()) == cfg.coarse_samples + cfg.fine_samples);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(ts[i] >= hit.t - cfg.safe_near_offset - 1e-9);
    CHECK(ts[i] <= hit.t + cfg.safe_far_offset + 1e-9);
    if (i > 0) CHECK(ts[i] >= ts[i - 1]);
  }

  // miss rays fall back to wide stratified sampling across the bbox span
  Ray miss{{0, 2, 0}, {1, 0, 0}};
  RaySamplePlan fallback = renderer.plan_ray(miss, RenderMode::Safe);
  if (!fallback.fields.empty()) {
    const auto& fts = fallback.fields[0].ts;
    CHECK(static_cast<int>(fts.size()) == cfg.coarse_samples + cfg.fine_samples);
    CHECK(fts.back() - fts.front() > 0.5);  // much wider than the band
  }
}

TEST_CASE("safe-region matches full rendering and costs far fewer queries") {
  Scene scene = test::small_scene();
  RenderConfig cfg;
  QueryCounter q_safe, q_full;
  RenderImages safe = render_image(scene, 64, 32, cfg, RenderMode::Safe, &q_safe);
  RenderImages full = render_image(scene, 64, 32, cfg, RenderMode::Full, &q_full);

  CHECK(psnr(safe.color, full.color) >= 35.0);
  CHECK(q_safe.total() * 3 <= q_full.total());

  // repeated invocations count identically
  QueryCounter q_again;
  render_image(scene, 64, 32, cfg, RenderMode::Safe, &q_again);
  CHECK(q_again.total() == q_safe.total());
}

TEST_SUITE_END();
