// Acceptance suite: one criterion per invocation, one PASS/FAIL line each.
// Thresholds are pinned here, not tuned at runtime.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "nrroom/eval.hpp"
#include "nrroom/lighting.hpp"
#include "nrroom/losses.hpp"
#include "nrroom/optimize.hpp"
#include "nrroom/relations.hpp"
#include "nrroom/render.hpp"
#include "nrroom/scene.hpp"
#include "nrroom/synth.hpp"

using namespace nrroom;

namespace {

int g_failures = 0;

void verdict(bool ok, const char* name, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

struct FitOutcome {
  double ape_cm;
  double are_deg;
};

FitOutcome run_fit(const SynthResult& synth, const OptimConfig& base, uint64_t seed,
                   double lambda_phy, bool full_sampling) {
  RenderConfig rcfg;
  Scene scene = synth.scene;
  apply_poses(scene, synth.init_poses);
  OptimConfig ocfg = base;
  ocfg.seed = seed;
  ocfg.lambda_phy = lambda_phy;
  ocfg.full_sampling = full_sampling;
  holistic_optimize(scene, synth.panorama, ocfg, rcfg, RuleTable::defaults());
  std::vector<std::pair<int, Aabb>> boxes;
  for (const auto& o : scene.objects) boxes.emplace_back(o.id, o.local_bbox_tight);
  EvalReport rep = evaluate(scene_poses(scene), synth.gt_poses, boxes);
  return {rep.mean_ape_cm, rep.mean_are_deg};
}

OptimConfig fit_config() {
  OptimConfig ocfg;            // lambda_pho = 1, lambda_obs = 100, lambda_phy = 1
  ocfg.iterations = 500;       // pose phase budget under test
  ocfg.phase2_iterations = 0;  // pose metrics only
  return ocfg;
}

// --- criteria ---

// End-to-end pose recovery: 10 seeded synthetic rooms, detector-grade init
// noise (<= 15 deg yaw, <= 0.2 m translation), mean APE <= 2 cm and mean
// ARE <= 2 deg within 500 iterations of the weighted objective.
void pose_recovery() {
  RenderConfig rcfg;
  SynthSpec spec;  // 3 objects, 320x160 panorama, 128^3 room / 96^3 objects
  double sum_ape = 0, sum_are = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    SynthResult synth = synth_scene(spec, seed, rcfg);
    FitOutcome out = run_fit(synth, fit_config(), seed, 1.0, false);
    std::printf("  scene %2llu: APE %.2f cm  ARE %.2f deg\n",
                static_cast<unsigned long long>(seed), out.ape_cm, out.are_deg);
    sum_ape += out.ape_cm;
    sum_are += out.are_deg;
  }
  double mean_ape = sum_ape / 10, mean_are = sum_are / 10;
  verdict(mean_ape <= 2.0 && mean_are <= 2.0, "pose_recovery",
          fmt("mean APE %.2f cm (<= 2.00), mean ARE %.2f deg (<= 2.00) over 10 scenes", mean_ape,
              mean_are));
}

// Disabling the physical losses on scenes whose initial poses penetrate the
// floor must degrade mean APE by at least 2x.
void ablation_physical() {
  RenderConfig rcfg;
  SynthSpec spec;
  spec.penetrate_init = true;
  double sum_full = 0, sum_nophy = 0;
  const uint64_t seeds[3] = {21, 22, 23};
  for (uint64_t seed : seeds) {
    SynthResult synth = synth_scene(spec, seed, rcfg);
    FitOutcome full = run_fit(synth, fit_config(), seed, 1.0, false);
    FitOutcome nophy = run_fit(synth, fit_config(), seed, 0.0, false);
    std::printf("  scene %llu: APE %.2f cm with physics, %.2f cm without\n",
                static_cast<unsigned long long>(seed), full.ape_cm, nophy.ape_cm);
    sum_full += full.ape_cm;
    sum_nophy += nophy.ape_cm;
  }
  double ratio = sum_nophy / std::max(sum_full, 1e-9);
  verdict(ratio >= 2.0, "ablation_physical",
          fmt("mean APE %.2f cm -> %.2f cm without physical losses (%.2fx, need >= 2x)",
              sum_full / 3, sum_nophy / 3, ratio));
}

// Safe-region sampling: at least a 3x query reduction at >= 35 dB fidelity,
// and pose recovery no more than 20% worse than full sampling (1 mm floor
// guards the comparison where both land at the noise level).
void safe_region() {
  RenderConfig rcfg;
  SynthSpec spec;
  SynthResult standard = synth_scene(spec, 1, rcfg);

  QueryCounter q_safe, q_full;
  RenderImages safe = render_image(standard.scene, 320, 160, rcfg, RenderMode::Safe, &q_safe);
  RenderImages full = render_image(standard.scene, 320, 160, rcfg, RenderMode::Full, &q_full);
  double db = psnr(safe.color, full.color);
  bool render_ok = q_safe.total() * 3 <= q_full.total() && db >= 35.0;
  std::printf("  queries: safe %lld vs full %lld (%.2fx), psnr %.1f dB\n", q_safe.total(),
              q_full.total(), static_cast<double>(q_full.total()) / q_safe.total(), db);

  double sum_safe = 0, sum_full_fit = 0;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    SynthResult synth = synth_scene(spec, seed, rcfg);
    FitOutcome s = run_fit(synth, fit_config(), seed, 1.0, false);
    FitOutcome f = run_fit(synth, fit_config(), seed, 1.0, true);
    std::printf("  scene %llu: APE safe %.2f cm vs full %.2f cm\n",
                static_cast<unsigned long long>(seed), s.ape_cm, f.ape_cm);
    sum_safe += s.ape_cm;
    sum_full_fit += f.ape_cm;
  }
  double mean_safe = sum_safe / 3, mean_full = sum_full_fit / 3;
  bool fit_ok = mean_safe <= 1.2 * mean_full + 0.1;
  verdict(render_ok && fit_ok, "safe_region",
          fmt("%.2fx queries, %.1f dB, APE safe %.2f vs full %.2f cm",
              static_cast<double>(q_full.total()) / q_safe.total(), db, mean_safe, mean_full));
}

// Analytic vs central-difference gradients for all five losses and all four
// parameter blocks, within 1e-3 relative (1e-6 absolute floor), under 60 s.
void gradient_suite() {
  auto t0 = std::chrono::steady_clock::now();
  RenderConfig rcfg;
  rcfg.sharpness = 16.0;  // smooth configuration
  SynthSpec spec;
  spec.objects = 2;
  spec.room_dims = {4.0, 3.2, 2.4};
  spec.width = 64;
  spec.height = 32;
  spec.room_grid = 64;
  spec.object_grid = 48;
  SynthResult synth = synth_scene(spec, 11, rcfg);
  Scene scene = synth.scene;
  Image observed = render_image(scene, 64, 32, rcfg, RenderMode::Safe).color;

  ContextInputs inputs;
  inputs.observed = &observed;
  for (const auto& o : scene.objects) inputs.init_positions.push_back(o.pose.p);

  // perturbed state with an active floor penetration
  scene.objects[0].pose.p += Vec3{0.04, -0.03, -0.12};
  scene.objects[0].pose.r6 =
      matrix_to_rot6d(matmul(yaw_matrix(0.06), scene.objects[0].pose.rotation()));
  scene.objects[1].pose.p += Vec3{-0.02, 0.05, 0.03};
  scene.objects[1].tone.t = {0.02, -0.01, 0.015};
  scene.objects[1].tone.s = {1.05, 0.95, 1.02};
  scene.lighting.coeffs[4] += 0.05;

  OptimConfig ocfg;
  ocfg.vio_points = 200;
  RuleTable rules = RuleTable::defaults();
  SceneRenderer renderer(scene, rcfg);
  inputs.relations = generate_relations(scene, rules, rcfg);
  inputs.gravity_flags = gravity_flags_for(scene, rules);
  std::vector<std::vector<Vec3>> cache = build_surface_caches(scene, ocfg.vio_points);
  inputs.surface_points = &cache;
  inputs.n_obj_rays = 48;
  inputs.n_bg_rays = 12;
  inputs.ray_seed = 99;
  Image mask = render_object_mask(scene, 64, 32, rcfg);
  LossContext ctx = build_loss_context(renderer, mask, ocfg, inputs);
  std::vector<double> params = pack_params(scene);

  GradCheckReport report =
      grad_check(renderer, params, ctx, ocfg,
                 {LossTerm::Pho, LossTerm::Obs, LossTerm::Mag, LossTerm::Vio, LossTerm::G});
  for (const auto& e : report.entries)
    std::printf("  %-4s %-9s rel %.2e abs %.2e\n", e.term.c_str(), e.block.c_str(), e.max_rel_err,
                e.max_abs_err);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  verdict(report.passed(1e-3) && secs < 60.0, "gradient_suite",
          fmt("worst rel err %.2e (<= 1e-3) in %.1f s (< 60)", report.worst_rel_err, secs));
}

// 1e4 random rays: opacities in [0,1], non-increasing transmittance, weight
// sum <= 1 + 1e-6; traced hits within max(1e-4 m, half voxel diagonal) of
// analytic intersections for sphere and box fields.
void render_invariants() {
  RenderConfig rcfg;
  SynthSpec spec;
  spec.objects = 2;
  spec.width = 64;
  spec.height = 32;
  spec.room_grid = 64;
  spec.object_grid = 48;
  SynthResult synth = synth_scene(spec, 11, rcfg);
  SceneRenderer renderer(synth.scene, rcfg);

  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  bool ok = true;
  for (int i = 0; i < 10000 && ok; ++i) {
    Vec3 o = synth.scene.camera.position + Vec3{0.3 * uni(gen), 0.3 * uni(gen), 0.2 * uni(gen)};
    Vec3 d = normalized(Vec3{uni(gen), uni(gen), 0.8 * uni(gen) + 0.01});
    RayDebug dbg;
    RenderOut<double> out =
        renderer.render_ray(Ray{o, d}, i % 2 ? RenderMode::Safe : RenderMode::Full, nullptr, &dbg);
    double total = 0;
    for (double w : out.weights) {
      if (w < 0 || w > 1 + 1e-6) ok = false;
      total += w;
    }
    if (total > 1 + 1e-6) ok = false;
    double prev = 1.0;
    for (std::size_t j = 0; j < dbg.alphas.size(); ++j) {
      if (dbg.alphas[j] < 0 || dbg.alphas[j] > 1) ok = false;
      if (dbg.transmittance[j] > prev + 1e-12) ok = false;
      prev = dbg.transmittance[j];
    }
  }

  // traced grids against the analytic primitives they were baked from
  GridField sphere_grid = bake_grid(AnalyticField::sphere({0, 0, 0}, 0.6), 96, 96, 96,
                                    {{-0.8, -0.8, -0.8}, {0.8, 0.8, 0.8}});
  GridField box_grid = bake_grid(AnalyticField::box({0, 0, 0}, {0.5, 0.35, 0.25}), 96, 96, 96,
                                 {{-0.7, -0.55, -0.45}, {0.7, 0.55, 0.45}});
  double tol = std::max(1e-4, sphere_grid.voxel_diagonal() / 2);
  Scene trace_scene;
  ObjectInstance a, b;
  a.id = 1;
  a.field = Field(std::move(sphere_grid));
  a.pose.p = {3, 0, 0};
  finalize_object_geometry(a);
  b.id = 2;
  b.field = Field(std::move(box_grid));
  b.pose.p = {0, 3, 0};
  finalize_object_geometry(b);
  trace_scene.objects.push_back(std::move(a));
  trace_scene.objects.push_back(std::move(b));
  SceneRenderer tracer(trace_scene, rcfg);

  double worst = 0;
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 o{0.3 * uni(gen), 0.3 * uni(gen), 0.3 * uni(gen)};
    bool at_sphere = i % 2 == 0;
    Vec3 target = at_sphere ? Vec3{3, 0, 0} : Vec3{0, 3, 0};
    Vec3 d = normalized(target - o + Vec3{0.25 * uni(gen), 0.25 * uni(gen), 0.25 * uni(gen)});
    RayHit hit = tracer.sphere_trace(Ray{o, d});
    if (!hit.hit) continue;
    double expect = -1;
    if (hit.field_index == 1) {
      Vec3 oc = o - Vec3{3, 0, 0};
      double bq = dot(oc, d);
      double disc = bq * bq - (dot(oc, oc) - 0.36);
      if (disc >= 0) expect = -bq - std::sqrt(disc);
    } else {
      double t0, t1;
      Aabb box{Vec3{0, 3, 0} - Vec3{0.5, 0.35, 0.25}, Vec3{0, 3, 0} + Vec3{0.5, 0.35, 0.25}};
      if (ray_aabb(o, d, box, t0, t1) && t0 > 0) expect = t0;
    }
    if (expect < 0) continue;
    worst = std::max(worst, std::abs(hit.t - expect));
    ++hits;
  }
  ok = ok && hits > 300 && worst <= tol;
  verdict(ok, "render_invariants",
          fmt("1e4 rays within bounds; %d traced hits, worst |dt| %.2e (<= %.2e)", hits, worst,
              tol));
}

// Lighting: uniform projection within 1e-3 of unit gain, tone recovery to
// 1e-3 from identity, interpolation endpoints exact.
void lighting() {
  // uniform envmap -> unit irradiance over 1000 normals
  Image env(128, 64, 3);
  for (float& f : env.data) f = 1.0f;
  ShIrradiance sh = project_envmap(env);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst_gain = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 n = normalized(Vec3{uni(gen), uni(gen), uni(gen) + 1e-3});
    Vec3 e = irradiance(sh, n);
    worst_gain = std::max({worst_gain, std::abs(e.x - 1), std::abs(e.y - 1), std::abs(e.z - 1)});
  }
  bool uniform_ok = worst_gain < 1e-3;

  // tone recovery: render with a known adjustment, refit it from identity
  RenderConfig rcfg;
  SynthSpec spec;
  spec.objects = 2;
  spec.width = 64;
  spec.height = 32;
  spec.room_grid = 64;
  spec.object_grid = 48;
  SynthResult synth = synth_scene(spec, 11, rcfg);
  Scene truth = synth.scene;
  ToneAdjust known{{0.05, -0.03, 0.02}, {1.2, 0.9, 1.1}};
  truth.objects[0].tone = known;
  Image observed = render_image(truth, 64, 32, rcfg, RenderMode::Safe).color;

  Scene fit_scene = synth.scene;  // identity tone
  SceneRenderer renderer(fit_scene, rcfg);
  ParamLayout layout{2};
  std::vector<double> params = pack_params(fit_scene);
  std::vector<uint8_t> active(params.size(), 0);
  for (int i = 0; i < 6; ++i) active[layout.obj_tone(0) + i] = 1;

  ContextInputs inputs;
  inputs.observed = &observed;
  for (const auto& o : fit_scene.objects) inputs.init_positions.push_back(o.pose.p);
  inputs.gravity_flags = gravity_flags_for(fit_scene, RuleTable::defaults());
  std::vector<std::vector<Vec3>> cache = build_surface_caches(fit_scene, 50);
  inputs.surface_points = &cache;
  inputs.n_obj_rays = 256;
  inputs.n_bg_rays = 64;
  Image mask = render_object_mask(fit_scene, 64, 32, rcfg);
  OptimConfig ocfg;

  // plain Adam on the tone block alone, annealed for a tight final fit (the
  // shift and scale trade off along a sloppy direction, so the tail is long)
  std::vector<double> m(params.size(), 0), v(params.size(), 0);
  for (int step = 0; step < 1500; ++step) {
    inputs.ray_seed = 1000 + step;
    LossContext ctx = build_loss_context(renderer, mask, ocfg, inputs);
    TermGrad g = eval_term_grad(renderer, params, ctx, ocfg, LossTerm::Pho, &active);
    double bc1 = 1.0 - std::pow(0.9, step + 1), bc2 = 1.0 - std::pow(0.999, step + 1);
    double lr = step < 600 ? 1e-2 : (step < 1200 ? 1e-3 : 1e-4);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!active[i]) continue;
      m[i] = 0.9 * m[i] + 0.1 * g.grad[i];
      v[i] = 0.999 * v[i] + 0.001 * g.grad[i] * g.grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
    }
  }
  int t0 = layout.obj_tone(0);
  double tone_err = std::max(
      {std::abs(params[t0 + 0] - known.t.x), std::abs(params[t0 + 1] - known.t.y),
       std::abs(params[t0 + 2] - known.t.z), std::abs(params[t0 + 3] - known.s.x),
       std::abs(params[t0 + 4] - known.s.y), std::abs(params[t0 + 5] - known.s.z)});
  bool tone_ok = tone_err < 1e-3;

  // interpolation endpoints bitwise exact
  ShIrradiance sa, sb;
  for (int i = 0; i < 27; ++i) {
    sa.coeffs[i] = uni(gen);
    sb.coeffs[i] = uni(gen);
  }
  ShIrradiance e0 = interpolate_lighting(sa, sb, 0.0);
  ShIrradiance e1 = interpolate_lighting(sa, sb, 1.0);
  bool interp_ok = true;
  for (int i = 0; i < 27; ++i)
    if (e0.coeffs[i] != sa.coeffs[i] || e1.coeffs[i] != sb.coeffs[i]) interp_ok = false;

  verdict(uniform_ok && tone_ok && interp_ok, "lighting",
          fmt("uniform gain err %.1e (< 1e-3), tone recovery err %.1e (< 1e-3), endpoints %s",
              worst_gain, tone_err, interp_ok ? "exact" : "inexact"));
}

// Magnetic loss alone closes a 0.3 m two-box gap to within 5 mm of contact
// in at most 200 Adam steps.
void magnetic_convergence() {
  RenderConfig rcfg;
  Scene scene;
  auto box_field = [](Vec3 half) {
    Aabb bb{-1.0 * half - Vec3{0.1, 0.1, 0.1}, half + Vec3{0.1, 0.1, 0.1}};
    return Field(bake_grid(AnalyticField::box({0, 0, 0}, half), 64, 64, 64, bb,
                           [](const Vec3&) { return Vec3{0.5, 0.5, 0.5}; }));
  };
  ObjectInstance target;
  target.id = 1;
  target.field = box_field({0.4, 0.4, 0.25});
  target.pose.p = {0, 0, 0.25};
  finalize_object_geometry(target);
  ObjectInstance subject;
  subject.id = 2;
  subject.field = box_field({0.2, 0.2, 0.15});
  // bottom at 0.8; target top at 0.5: a 0.3 m gap
  subject.pose.p = {0, 0, 0.95};
  finalize_object_geometry(subject);
  scene.objects.push_back(std::move(target));
  scene.objects.push_back(std::move(subject));

  std::vector<Relation> rels{{RelationKind::ObjectSupport, 2, 1, {0, 0, -1}}};
  ParamLayout layout{2};
  std::vector<double> params = pack_params(scene);
  std::vector<uint8_t> active(params.size(), 0);
  for (int i = 0; i < 3; ++i) active[layout.obj_p(1) + i] = 1;  // subject position only

  OptimConfig ocfg;
  std::vector<double> m(params.size(), 0), v(params.size(), 0);
  double gap = 0.3;
  int steps_used = 200;
  for (int step = 0; step < 200; ++step) {
    apply_params(scene, params);
    SceneRenderer renderer(scene, rcfg);
    LossContext ctx;
    ctx.relations = rels;
    ctx.mag = plan_mag(renderer, rels);
    ctx.gravity_flags = {1, 1};
    TermGrad g = eval_term_grad(renderer, params, ctx, ocfg, LossTerm::Mag, &active);
    double bc1 = 1.0 - std::pow(0.9, step + 1), bc2 = 1.0 - std::pow(0.999, step + 1);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!active[i]) continue;
      m[i] = 0.9 * m[i] + 0.1 * g.grad[i];
      v[i] = 0.999 * v[i] + 0.001 * g.grad[i] * g.grad[i];
      params[i] -= 1e-2 * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
    }
    gap = (params[layout.obj_p(1) + 2] - 0.15) - 0.5;  // subject bottom vs target top
    if (std::abs(gap) <= 0.005 && steps_used == 200) steps_used = step + 1;
  }
  verdict(std::abs(gap) <= 0.005, "magnetic_convergence",
          fmt("final gap %.1f mm after %d steps (|gap| <= 5 mm within 200)", gap * 1000,
              steps_used));
}

// Identical seed and config produce byte-identical trace CSVs.
void determinism() {
  namespace fs = std::filesystem;
  RenderConfig rcfg;
  SynthSpec spec;
  spec.objects = 2;
  spec.width = 64;
  spec.height = 32;
  spec.room_grid = 64;
  spec.object_grid = 48;
  SynthResult synth = synth_scene(spec, 11, rcfg);

  OptimConfig ocfg;
  ocfg.iterations = 30;
  ocfg.phase2_iterations = 10;
  ocfg.rays_per_step = 256;
  ocfg.vio_points = 200;
  ocfg.seed = 4242;

  std::string paths[2];
  for (int run = 0; run < 2; ++run) {
    Scene scene = synth.scene;
    apply_poses(scene, synth.init_poses);
    FitResult fit = holistic_optimize(scene, synth.panorama, ocfg, rcfg, RuleTable::defaults());
    paths[run] =
        (fs::temp_directory_path() / ("nrroom_trace_" + std::to_string(run) + ".csv")).string();
    write_trace_csv(paths[run], fit.trace);
  }
  std::ifstream a(paths[0], std::ios::binary), b(paths[1], std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  std::remove(paths[0].c_str());
  std::remove(paths[1].c_str());
  verdict(!sa.empty() && sa == sb, "determinism",
          fmt("two runs, %zu-byte traces %s", sa.size(), sa == sb ? "identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  std::string which = argc > 1 ? argv[1] : "all";
  bool all = which == "all";
  if (all || which == "pose_recovery") pose_recovery();
  if (all || which == "ablation_physical") ablation_physical();
  if (all || which == "safe_region") safe_region();
  if (all || which == "gradient_suite") gradient_suite();
  if (all || which == "render_invariants") render_invariants();
  if (all || which == "lighting") lighting();
  if (all || which == "magnetic_convergence") magnetic_convergence();
  if (all || which == "determinism") determinism();
  return g_failures == 0 ? 0 : 1;
}
