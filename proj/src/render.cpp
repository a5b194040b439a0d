#include "nrroom/render.hpp"

#include <algorithm>
#include <cmath>

#include "nrroom/parallel.hpp"

namespace nrroom {

Vec3 equirect_dir(double u, double v, int w, int h) {
  double phi = 2.0 * M_PI * (u + 0.5) / w - M_PI;
  double theta = M_PI / 2.0 - M_PI * (v + 0.5) / h;
  double ct = std::cos(theta);
  return {ct * std::cos(phi), ct * std::sin(phi), std::sin(theta)};
}

void equirect_uv(const Vec3& dir, int w, int h, double& u, double& v) {
  double phi = std::atan2(dir.y, dir.x);
  double theta = std::asin(std::clamp(dir.z, -1.0, 1.0));
  u = (phi + M_PI) * w / (2.0 * M_PI) - 0.5;
  v = (M_PI / 2.0 - theta) * h / M_PI - 0.5;
}

Vec3 pinhole_dir(double u, double v, int w, int h, double fov_deg) {
  // +x forward, +y screen right, +z up
  double tan_x = std::tan(fov_deg * M_PI / 360.0);
  double tan_z = tan_x * h / w;
  double sx = 2.0 * (u + 0.5) / w - 1.0;
  double sz = 1.0 - 2.0 * (v + 0.5) / h;
  return normalized(Vec3{1.0, tan_x * sx, tan_z * sz});
}

Ray camera_ray(const Camera& cam, double u, double v, int w, int h) {
  Vec3 d = cam.model == Camera::Model::Equirect ? equirect_dir(u, v, w, h)
                                                : pinhole_dir(u, v, w, h, cam.fov_deg);
  return {cam.position, cam.rotation().mul(d)};
}

SceneRenderer::SceneRenderer(const Scene& scene, const RenderConfig& cfg)
    : scene_(&scene), cfg_(cfg) {
  int nf = scene.num_fields();
  field_of_.resize(nf);
  rot_.resize(nf);
  pos_.resize(nf);
  world_bbox_.resize(nf);
  has_albedo_.resize(nf);

  field_of_[0] = scene.background.valid() ? &scene.background : nullptr;
  rot_[0] = Mat3::identity();
  pos_[0] = {0, 0, 0};
  world_bbox_[0] = field_of_[0] ? scene.background.domain() : Aabb{};
  has_albedo_[0] = field_of_[0] && scene.background.has_albedo();

  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const ObjectInstance& o = scene.objects[k];
    int i = static_cast<int>(k) + 1;
    field_of_[i] = &o.field;
    rot_[i] = o.pose.rotation();
    pos_[i] = o.pose.p;
    has_albedo_[i] = o.field.has_albedo();
    // world AABB of the posed local domain, re-boxed
    Aabb local = o.field.domain();
    Aabb wb{{1e30, 1e30, 1e30}, {-1e30, -1e30, -1e30}};
    for (int corner = 0; corner < 8; ++corner) {
      Vec3 c{(corner & 1) ? local.max.x : local.min.x,
             (corner & 2) ? local.max.y : local.min.y,
             (corner & 4) ? local.max.z : local.min.z};
      wb.expand(rot_[i].mul(c) + pos_[i]);
    }
    world_bbox_[i] = wb;
  }
}

double SceneRenderer::sdf_world(int i, const Vec3& pw) const {
  if (!field_of_[i]) return 1e30;
  Vec3 local = i == 0 ? pw : rot_[i].tmul(pw - pos_[i]);
  return sdf_eval(*field_of_[i], local);
}

Vec3 SceneRenderer::sdf_grad_world(int i, const Vec3& pw) const {
  if (!field_of_[i]) return {0, 0, 0};
  Vec3 local = i == 0 ? pw : rot_[i].tmul(pw - pos_[i]);
  Vec3 g = sdf_grad(*field_of_[i], local);
  return i == 0 ? g : rot_[i].mul(g);
}

namespace {

// Secant refinement of the crossing along the ray once the march is inside
// hit_eps; grazing incidence otherwise leaves t short by hit_eps / cos.
// Starts at or below the surface (f <= 0) are returned as-is, and steps are
// clamped so a flat SDF cannot extrapolate the root far from the march.
template <class F>
double refine_hit(F&& sdf_at, double u, double f) {
  if (f <= 0) return u;
  const double lo = u, hi = u + 0.05;
  double u0 = u, f0 = f;
  double u1 = std::min(u + std::max(f, 1e-6), hi);
  for (int i = 0; i < 6; ++i) {
    double f1 = sdf_at(u1);
    if (f1 == f0) break;
    double u2 = u1 - f1 * (u1 - u0) / (f1 - f0);
    if (!std::isfinite(u2)) break;
    u0 = u1;
    f0 = f1;
    u1 = std::clamp(u2, lo, hi);
    if (std::abs(f1) < 1e-9) break;
  }
  return u1;
}

}  // namespace

RayHit SceneRenderer::sphere_trace(const Ray& ray, double back_offset, QueryCounter* qc) const {
  Vec3 start = ray.origin - ray.dir * back_offset;
  double budget = cfg_.max_distance + back_offset;
  double u = 0;
  for (int step = 0; step < cfg_.max_steps; ++step) {
    Vec3 p = start + ray.dir * u;
    double best = 1e30;
    int best_i = -1;
    for (int i = 0; i < num_fields(); ++i) {
      double d = sdf_world(i, p);
      if (qc) qc->sdf++;
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    if (best < cfg_.hit_eps) {
      u = refine_hit(
          [&](double uu) {
            if (qc) qc->sdf++;
            return sdf_world(best_i, start + ray.dir * uu);
          },
          u, best);
      return {true, u - back_offset, best_i};
    }
    u += best;
    if (u > budget) break;
  }
  return {};
}

RayHit SceneRenderer::sphere_trace_field(int i, const Ray& ray, double back_offset,
                                         QueryCounter* qc) const {
  if (!field_of_[i]) return {};
  Vec3 start = ray.origin - ray.dir * back_offset;
  double budget = cfg_.max_distance + back_offset;
  double u = 0;
  for (int step = 0; step < cfg_.max_steps; ++step) {
    double d = sdf_world(i, start + ray.dir * u);
    if (qc) qc->sdf++;
    if (d < cfg_.hit_eps) {
      u = refine_hit(
          [&](double uu) {
            if (qc) qc->sdf++;
            return sdf_world(i, start + ray.dir * uu);
          },
          u, d);
      return {true, u - back_offset, i};
    }
    u += d;
    if (u > budget) break;
  }
  return {};
}

namespace {

// Midpoint-stratified coarse pass followed by inverse-CDF importance
// resampling of the per-bin alpha weights. Fully deterministic.
std::vector<double> hierarchical_samples(const SceneRenderer& r, int field_index, const Ray& ray,
                                         double t0, double t1, int n_coarse, int n_fine,
                                         QueryCounter* qc) {
  std::vector<double> ts;
  if (n_coarse < 2) n_coarse = 2;
  ts.reserve(n_coarse + n_fine);
  double span = t1 - t0;
  for (int j = 0; j < n_coarse; ++j) ts.push_back(t0 + span * (j + 0.5) / n_coarse);

  std::vector<double> sdfs(n_coarse);
  for (int j = 0; j < n_coarse; ++j) {
    sdfs[j] = r.sdf_world(field_index, ray.origin + ray.dir * ts[j]);
    if (qc) qc->sdf++;
  }

  // per-bin weights w_j = T_j * alpha_j over this field alone
  std::vector<double> w(n_coarse - 1);
  double trans = 1.0;
  double wsum = 0.0;
  for (int j = 0; j + 1 < n_coarse; ++j) {
    double a = alpha_from_sdf(sdfs[j], sdfs[j + 1], r.config().sharpness);
    w[j] = trans * a;
    trans *= (1.0 - a);
    wsum += w[j];
  }
  double floor = (wsum > 0 ? 0.01 * wsum / w.size() : 1.0);
  wsum = 0;
  for (double& x : w) {
    x += floor;
    wsum += x;
  }

  // inverse CDF at fine strata midpoints
  int bin = 0;
  double cdf_lo = 0.0;
  for (int k = 0; k < n_fine; ++k) {
    double target = wsum * (k + 0.5) / n_fine;
    while (bin + 1 < static_cast<int>(w.size()) && cdf_lo + w[bin] < target) {
      cdf_lo += w[bin];
      ++bin;
    }
    double frac = std::clamp((target - cdf_lo) / w[bin], 0.0, 1.0);
    double lo = ts[bin], hi = ts[bin + 1];
    ts.push_back(lo + frac * (hi - lo));
  }
  std::sort(ts.begin(), ts.end());
  return ts;
}

}  // namespace

RaySamplePlan SceneRenderer::plan_ray(const Ray& ray, RenderMode mode, QueryCounter* qc) const {
  RaySamplePlan plan;
  for (int i = 0; i < num_fields(); ++i) {
    if (!field_of_[i]) continue;
    double t0, t1;
    if (!ray_aabb(ray.origin, ray.dir, world_bbox_[i], t0, t1)) continue;
    t0 = std::max(t0, cfg_.t_min);
    t1 = std::min(t1, cfg_.max_distance);
    if (t1 <= t0) continue;

    FieldSamplePlan fp;
    fp.field_index = i;
    if (mode == RenderMode::Full) {
      fp.ts = hierarchical_samples(*this, i, ray, t0, t1, cfg_.full_coarse, cfg_.full_fine, qc);
    } else {
      RayHit hit = sphere_trace_field(i, ray, 0.0, qc);
      if (hit.hit) {
        double near = std::max(hit.t - cfg_.safe_near_offset, cfg_.t_min);
        double far = std::max(hit.t + cfg_.safe_far_offset, near + 1e-4);
        fp.ts = hierarchical_samples(*this, i, ray, near, far, cfg_.coarse_samples,
                                     cfg_.fine_samples, qc);
      } else {
        // Miss fallback: wide stratified sampling keeps photometric gradients
        // alive when the pose is grossly wrong.
        fp.ts = hierarchical_samples(*this, i, ray, t0, t1, cfg_.coarse_samples,
                                     cfg_.fine_samples, qc);
      }
    }
    plan.fields.push_back(std::move(fp));
  }
  return plan;
}

template <class S>
RenderOut<S> SceneRenderer::eval_ray(const Ray& ray, const RaySamplePlan& plan,
                                     const SceneParamsT<S>& params, QueryCounter* qc,
                                     RayDebug* dbg) const {
  using std::max;
  using std::min;
  using std::sqrt;
  using ad::max;
  using ad::min;
  using ad::sqrt;

  RenderOut<S> out;
  out.init(num_fields());

  struct Entry {
    double t;
    int field_index;
    int slot;
    int j;
  };
  std::vector<Entry> entries;
  std::vector<std::vector<S>> alphas(plan.fields.size());
  std::vector<std::vector<V3<S>>> colors(plan.fields.size());

  for (std::size_t slot = 0; slot < plan.fields.size(); ++slot) {
    const FieldSamplePlan& fp = plan.fields[slot];
    const int i = fp.field_index;
    const Field& fld = *field_of_[i];
    if (!has_albedo_[i]) throw NoAlbedo();
    const auto& fpar = params.fields[i];
    const int n = static_cast<int>(fp.ts.size());
    std::vector<S> sdfs(n);
    colors[slot].resize(n);

    for (int j = 0; j < n; ++j) {
      Vec3 xw = ray.origin + ray.dir * fp.ts[j];
      V3<S> local;
      if (fpar.identity_pose) {
        local = {S(xw.x), S(xw.y), S(xw.z)};
      } else {
        V3<S> rel{S(xw.x) - fpar.pos.x, S(xw.y) - fpar.pos.y, S(xw.z) - fpar.pos.z};
        local = fpar.rot.tmul(rel);
      }
      sdfs[j] = sdf_eval(fld, local);
      if (qc) qc->sdf++;
      V3<S> alb = albedo_eval(*fld.grid(), local);
      if (qc) qc->albedo++;

      // Lambertian shading: albedo * irradiance(world normal), then the
      // field's tone adjustment.
      V3<S> g = sdf_grad(*fld.grid(), local);
      double g2 = value_of(g.x) * value_of(g.x) + value_of(g.y) * value_of(g.y) +
                  value_of(g.z) * value_of(g.z);
      V3<S> shaded;
      if (g2 > 1e-18) {
        S inv_len = S(1.0) / sqrt(dot(g, g));
        V3<S> nl{g.x * inv_len, g.y * inv_len, g.z * inv_len};
        V3<S> nw = fpar.identity_pose ? nl : fpar.rot.mul(nl);
        V3<S> irr = irradiance_eval(params.sh, nw);
        shaded = alb.cmul(irr);
      } else {
        shaded = alb;  // degenerate gradient: unshaded
      }
      colors[slot][j] = tone_apply(shaded, fpar.tone_t, fpar.tone_s);
      entries.push_back({fp.ts[j], i, static_cast<int>(slot), j});
    }

    // Telescoping alphas: sample j owns the (j-1, j] interval and the first
    // sample carries the lead-in opacity 1 - Phi(s * sdf_0), so the field's
    // accumulated opacity is exactly Phi(s * sdf_last) no matter how the
    // band was sampled. Without the lead-in, a band entered at sdf ~ +0.05
    // silently drops the logistic tail the full path integrates.
    alphas[slot].resize(n);
    for (int j = 0; j < n; ++j) {
      alphas[slot][j] = j == 0 ? alpha_from_sdf(S(1e9), sdfs[0], cfg_.sharpness)
                               : alpha_from_sdf(sdfs[j - 1], sdfs[j], cfg_.sharpness);
    }
    // A band that ends inside the solid closes at full opacity; fields are
    // watertight so the ray cannot re-emerge (grazing hits otherwise leak
    // the Phi(s * sdf_last) tail to whatever lies behind).
    if (n > 0 && value_of(sdfs[n - 1]) < 0) alphas[slot][n - 1] = S(1.0);
  }

  // Merge all fields' samples by distance; ties break on ascending field
  // index for determinism.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.field_index < b.field_index;
  });

  S trans(1.0);
  for (const Entry& e : entries) {
    const S& a = alphas[e.slot][e.j];
    if (dbg) {
      dbg->alphas.push_back(value_of(a));
      dbg->transmittance.push_back(value_of(trans));
    }
    if (value_of(a) == 0.0) continue;
    S w = trans * a;
    const V3<S>& c = colors[e.slot][e.j];
    out.color.x = out.color.x + w * c.x;
    out.color.y = out.color.y + w * c.y;
    out.color.z = out.color.z + w * c.z;
    out.depth = out.depth + w * S(e.t);
    out.weights[e.field_index] += value_of(w);
    trans = trans * (S(1.0) - a);
    if (cfg_.early_stop_transmittance > 0 && value_of(trans) < cfg_.early_stop_transmittance)
      break;
  }
  out.background_weight = out.weights.empty() ? 0.0 : out.weights[0];
  // leftover transmittance falls through to the configured backdrop
  out.color.x = out.color.x + trans * S(cfg_.background_color.x);
  out.color.y = out.color.y + trans * S(cfg_.background_color.y);
  out.color.z = out.color.z + trans * S(cfg_.background_color.z);
  return out;
}

template RenderOut<double> SceneRenderer::eval_ray<double>(const Ray&, const RaySamplePlan&,
                                                           const SceneParamsT<double>&,
                                                           QueryCounter*, RayDebug*) const;
template RenderOut<ad::Val> SceneRenderer::eval_ray<ad::Val>(const Ray&, const RaySamplePlan&,
                                                             const SceneParamsT<ad::Val>&,
                                                             QueryCounter*, RayDebug*) const;

SceneParamsT<double> SceneRenderer::scene_params() const {
  SceneParamsT<double> p;
  p.fields.resize(num_fields());
  p.fields[0].valid = true;
  p.fields[0].identity_pose = true;
  p.fields[0].rot = Mat3::identity();
  p.fields[0].pos = {0, 0, 0};
  p.fields[0].tone_t = scene_->background_tone.t;
  p.fields[0].tone_s = scene_->background_tone.s;
  for (std::size_t k = 0; k < scene_->objects.size(); ++k) {
    const ObjectInstance& o = scene_->objects[k];
    auto& f = p.fields[k + 1];
    f.valid = true;
    f.identity_pose = false;
    f.rot = rot_[k + 1];
    f.pos = pos_[k + 1];
    f.tone_t = o.tone.t;
    f.tone_s = o.tone.s;
  }
  p.sh = scene_->lighting.coeffs;
  return p;
}

RenderOut<double> SceneRenderer::render_ray(const Ray& ray, RenderMode mode, QueryCounter* qc,
                                            RayDebug* dbg) const {
  RaySamplePlan plan = plan_ray(ray, mode, qc);
  return eval_ray<double>(ray, plan, scene_params(), qc, dbg);
}

RenderImages render_image(const Scene& scene, int w, int h, const RenderConfig& cfg,
                          RenderMode mode, QueryCounter* qc) {
  SceneRenderer renderer(scene, cfg);
  SceneParamsT<double> params = renderer.scene_params();
  RenderImages out;
  out.color = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  out.weights = Image(w, h, renderer.num_fields());

  const std::size_t n_rows = static_cast<std::size_t>(h);
  std::vector<QueryCounter> counters((n_rows + 3) / 4);
  parallel_chunks(n_rows, 4, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    QueryCounter local;
    for (std::size_t y = begin; y < end; ++y) {
      for (int x = 0; x < w; ++x) {
        Ray ray = camera_ray(scene.camera, x, static_cast<double>(y), w, h);
        RenderOut<double> r = renderer.render_ray(ray, mode, &local);
        out.color.set_rgb(x, static_cast<int>(y), r.color);
        out.depth.at(x, static_cast<int>(y), 0) = static_cast<float>(r.depth);
        for (int i = 0; i < renderer.num_fields(); ++i)
          out.weights.at(x, static_cast<int>(y), i) = static_cast<float>(r.weights[i]);
      }
    }
    counters[chunk] = local;
  });
  if (qc)
    for (const auto& c : counters) *qc += c;
  return out;
}

}  // namespace nrroom
