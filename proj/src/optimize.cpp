#include "nrroom/optimize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace nrroom {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

struct Adam {
  std::vector<double> m, v;
  int step = 0;
  double beta1, beta2, eps;

  Adam(std::size_t n, const OptimConfig& cfg)
      : m(n, 0.0), v(n, 0.0), beta1(cfg.adam_beta1), beta2(cfg.adam_beta2), eps(cfg.adam_eps) {}

  void update(std::vector<double>& params, const std::vector<double>& grad,
              const std::vector<double>& lr, const std::vector<uint8_t>& active, double decay) {
    ++step;
    double bc1 = 1.0 - std::pow(beta1, step);
    double bc2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!active[i]) continue;
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      params[i] -= decay * lr[i] * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

std::vector<double> block_learning_rates(const ParamLayout& layout, const OptimConfig& cfg) {
  std::vector<double> lr(layout.total());
  for (int i = 0; i < layout.total(); ++i) {
    switch (layout.kind_of(i)) {
      case ParamLayout::BlockKind::Rotation: lr[i] = cfg.lr_rotation; break;
      case ParamLayout::BlockKind::Position: lr[i] = cfg.lr_position; break;
      case ParamLayout::BlockKind::Tone: lr[i] = cfg.lr_tone; break;
      case ParamLayout::BlockKind::Lighting: lr[i] = cfg.lr_lighting; break;
    }
  }
  return lr;
}

std::vector<uint8_t> phase_mask(const ParamLayout& layout, bool poses) {
  std::vector<uint8_t> mask(layout.total(), 0);
  for (int i = 0; i < layout.total(); ++i) {
    auto kind = layout.kind_of(i);
    bool is_pose = kind == ParamLayout::BlockKind::Rotation ||
                   kind == ParamLayout::BlockKind::Position;
    mask[i] = (poses ? is_pose : !is_pose) ? 1 : 0;
  }
  return mask;
}

}  // namespace

Image render_object_mask(const Scene& scene, int w, int h, const RenderConfig& cfg) {
  int hw = std::max(w / 2, 2), hh = std::max(h / 2, 1);
  RenderImages imgs = render_image(scene, hw, hh, cfg, RenderMode::Safe);
  Image mask(w, h, 1);
  for (int y = 0; y < h; ++y) {
    int sy = std::min(y * hh / h, hh - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::min(x * hw / w, hw - 1);
      double obj_w = 0;
      for (int c = 1; c < imgs.weights.c; ++c) obj_w += imgs.weights.at(sx, sy, c);
      mask.at(x, y, 0) = obj_w > 0.5 ? 1.0f : 0.0f;
    }
  }
  return mask;
}

std::vector<std::vector<Vec3>> build_surface_caches(const Scene& scene, int points_per_object) {
  std::vector<std::vector<Vec3>> out;
  out.reserve(scene.objects.size());
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const ObjectInstance& o = scene.objects[k];
    out.push_back(sample_surface_points(o.field, o.local_bbox, points_per_object,
                                        0x5DF0C0DEull + k));
  }
  return out;
}

std::vector<uint8_t> gravity_flags_for(const Scene& scene, const RuleTable& rules) {
  std::vector<uint8_t> flags;
  flags.reserve(scene.objects.size());
  for (const auto& o : scene.objects)
    flags.push_back(rules.lookup(o.category).gravity_aligned ? 1 : 0);
  return flags;
}

LossContext build_loss_context(const SceneRenderer& renderer, const Image& mask,
                               const OptimConfig& cfg, const ContextInputs& inputs) {
  LossContext ctx;
  ctx.observed = inputs.observed;
  ctx.relations = inputs.relations;
  ctx.init_positions = inputs.init_positions;
  ctx.gravity_flags = inputs.gravity_flags;
  ctx.surface_points = inputs.surface_points;

  const Scene& scene = renderer.scene();
  if (inputs.observed && inputs.n_obj_rays + inputs.n_bg_rays > 0) {
    ctx.rays = sample_rays(mask, scene.camera, inputs.observed->w, inputs.observed->h,
                           inputs.n_obj_rays, inputs.n_bg_rays, cfg.mask_dilation,
                           inputs.ray_seed);
    RenderMode mode = cfg.full_sampling ? RenderMode::Full : RenderMode::Safe;
    ctx.plans.resize(ctx.rays.size());
    for (std::size_t i = 0; i < ctx.rays.size(); ++i)
      ctx.plans[i] = renderer.plan_ray(ctx.rays[i].ray, mode);
  }
  ctx.mag = plan_mag(renderer, ctx.relations);
  ctx.neighbors = nearest_neighbors(scene, cfg.vio_neighbors);
  return ctx;
}

FitResult holistic_optimize(Scene& scene, const Image& observed, const OptimConfig& ocfg,
                            const RenderConfig& rcfg, const RuleTable& rules) {
  FitResult result;
  ParamLayout layout{static_cast<int>(scene.objects.size())};
  std::vector<double> params = pack_params(scene);
  std::vector<double> lr = block_learning_rates(layout, ocfg);

  ContextInputs inputs;
  inputs.observed = &observed;
  inputs.gravity_flags = gravity_flags_for(scene, rules);
  for (const auto& o : scene.objects) inputs.init_positions.push_back(o.pose.p);
  std::vector<std::vector<Vec3>> surface_cache = build_surface_caches(scene, ocfg.vio_points);
  inputs.surface_points = &surface_cache;
  inputs.n_obj_rays = ocfg.rays_per_step;
  inputs.n_bg_rays = std::max(1, ocfg.rays_per_step / 5);

  Image mask(observed.w, observed.h, 1);
  std::vector<Relation> relations;

  auto run_phase = [&](int phase, int steps, int step_offset) {
    if (steps <= 0) return;
    std::vector<uint8_t> active = phase_mask(layout, phase == 1);
    // warm-restarted Adam: fresh state and a re-annealed learning rate per
    // cycle escapes the plateaus a single monotone schedule gets stuck on
    const int cycle = ocfg.restart_period > 0 ? std::min(ocfg.restart_period, steps) : steps;
    Adam adam(params.size(), ocfg);
    for (int it = 0; it < steps; ++it) {
      if (it % cycle == 0 && it > 0) adam = Adam(params.size(), ocfg);
      apply_params(scene, params);
      bool regen = phase == 1 && (it % std::max(1, ocfg.relation_regen_period) == 0);
      if (regen || (phase == 2 && it == 0)) {
        // relations and sampling masks track the current poses; lighting
        // phases reuse the pose-phase results
        if (phase == 1) {
          relations = generate_relations(scene, rules, rcfg);
          inputs.relations = relations;
        }
        mask = render_object_mask(scene, observed.w, observed.h, rcfg);
      }
      SceneRenderer renderer(scene, rcfg);
      inputs.ray_seed = mix_seed(ocfg.seed, static_cast<uint64_t>(step_offset + it));
      LossContext ctx = build_loss_context(renderer, mask, ocfg, inputs);

      LossResult loss = eval_total_loss(renderer, params, ctx, ocfg, &active);
      TraceRow row;
      row.step = step_offset + it;
      row.terms = loss.terms;
      row.total = loss.terms.weighted_total(ocfg);
      result.trace.push_back(row);

      double progress = cycle > 1 ? static_cast<double>(it % cycle) / (cycle - 1) : 0.0;
      double decay = 1.0 - (1.0 - ocfg.lr_final_frac) * progress;
      adam.update(params, loss.grad, lr, active, decay);
    }
    apply_params(scene, params);
  };

  run_phase(1, ocfg.iterations, 0);
  run_phase(2, ocfg.phase2_iterations, ocfg.iterations);

  apply_params(scene, params);
  result.final_relations = relations;
  return result;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "step,L_pho,L_obs,L_mag,L_vio,L_g,total\n";
  char buf[256];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  r.terms.pho, r.terms.obs, r.terms.mag, r.terms.vio, r.terms.g, r.total);
    out << buf;
  }
}

GradCheckReport grad_check(const SceneRenderer& renderer, const std::vector<double>& params,
                           const LossContext& ctx, const OptimConfig& cfg,
                           const std::vector<LossTerm>& terms, double h, double abs_floor) {
  GradCheckReport report;
  ParamLayout layout{static_cast<int>(renderer.scene().objects.size())};
  const char* block_names[4] = {"rotation", "position", "tone", "lighting"};

  for (LossTerm term : terms) {
    TermGrad analytic = eval_term_grad(renderer, params, ctx, cfg, term, nullptr);
    GradCheckEntry per_block[4];
    for (int b = 0; b < 4; ++b) {
      per_block[b].term = loss_term_name(term);
      per_block[b].block = block_names[b];
    }
    std::vector<double> p = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
      double step = h * std::max(1.0, std::abs(params[i]));
      p[i] = params[i] + step;
      double f_plus = eval_term_value(renderer, p, ctx, cfg, term);
      p[i] = params[i] - step;
      double f_minus = eval_term_value(renderer, p, ctx, cfg, term);
      p[i] = params[i];
      double fd = (f_plus - f_minus) / (2.0 * step);
      double diff = std::abs(fd - analytic.grad[i]);
      double denom = std::max(std::abs(fd), std::abs(analytic.grad[i]));
      double rel = diff <= abs_floor ? 0.0 : diff / std::max(denom, abs_floor);
      int b = static_cast<int>(layout.kind_of(static_cast<int>(i)));
      per_block[b].max_rel_err = std::max(per_block[b].max_rel_err, rel);
      per_block[b].max_abs_err = std::max(per_block[b].max_abs_err, diff);
      per_block[b].checked++;
      report.worst_rel_err = std::max(report.worst_rel_err, rel);
    }
    for (int b = 0; b < 4; ++b)
      if (per_block[b].checked > 0) report.entries.push_back(per_block[b]);
  }
  return report;
}

}  // namespace nrroom
