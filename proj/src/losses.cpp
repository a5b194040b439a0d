#include "nrroom/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "nrroom/parallel.hpp"

namespace nrroom {

using nlohmann::json;
using ad::Val;

OptimConfig OptimConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config parse error: " + std::string(e.what()));
  }
  OptimConfig c;
  c.lambda_pho = j.value("lambda_pho", c.lambda_pho);
  c.lambda_obs = j.value("lambda_obs", c.lambda_obs);
  c.lambda_phy = j.value("lambda_phy", c.lambda_phy);
  c.iterations = j.value("iterations", c.iterations);
  c.phase2_iterations = j.value("phase2_iterations", c.phase2_iterations);
  c.relation_regen_period = j.value("relation_regen_period", c.relation_regen_period);
  c.rays_per_step = j.value("rays_per_step", c.rays_per_step);
  c.lr_position = j.value("lr_position", c.lr_position);
  c.lr_rotation = j.value("lr_rotation", c.lr_rotation);
  c.lr_tone = j.value("lr_tone", c.lr_tone);
  c.lr_lighting = j.value("lr_lighting", c.lr_lighting);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.lr_final_frac = j.value("lr_final_frac", c.lr_final_frac);
  c.restart_period = j.value("restart_period", c.restart_period);
  c.vio_epsilon = j.value("vio_epsilon", c.vio_epsilon);
  c.vio_neighbors = j.value("vio_neighbors", c.vio_neighbors);
  c.vio_points = j.value("vio_points", c.vio_points);
  c.mask_dilation = j.value("mask_dilation", c.mask_dilation);
  c.full_sampling = j.value("full_sampling", c.full_sampling);
  c.seed = j.value("seed", c.seed);
  if (c.lambda_pho < 0 || c.lambda_obs < 0 || c.lambda_phy < 0)
    throw ValidationError("loss weights must be >= 0");
  if (c.rays_per_step < 1) throw ValidationError("rays_per_step must be >= 1");
  return c;
}

void OptimConfig::save(const std::string& path) const {
  json j{{"lambda_pho", lambda_pho},
         {"lambda_obs", lambda_obs},
         {"lambda_phy", lambda_phy},
         {"iterations", iterations},
         {"phase2_iterations", phase2_iterations},
         {"relation_regen_period", relation_regen_period},
         {"rays_per_step", rays_per_step},
         {"lr_position", lr_position},
         {"lr_rotation", lr_rotation},
         {"lr_tone", lr_tone},
         {"lr_lighting", lr_lighting},
         {"adam_beta1", adam_beta1},
         {"adam_beta2", adam_beta2},
         {"adam_eps", adam_eps},
         {"lr_final_frac", lr_final_frac},
         {"restart_period", restart_period},
         {"vio_epsilon", vio_epsilon},
         {"vio_neighbors", vio_neighbors},
         {"vio_points", vio_points},
         {"mask_dilation", mask_dilation},
         {"full_sampling", full_sampling},
         {"seed", seed}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

const char* loss_term_name(LossTerm t) {
  switch (t) {
    case LossTerm::Pho: return "pho";
    case LossTerm::Obs: return "obs";
    case LossTerm::Mag: return "mag";
    case LossTerm::Vio: return "vio";
    case LossTerm::G: return "g";
  }
  return "?";
}

// --- ray sampling ---

std::vector<PixelRay> sample_rays(const Image& mask, const Camera& cam, int w, int h, int n_obj,
                                  int n_bg, int dilation, uint64_t seed) {
  if (mask.w != w || mask.h != h) throw ValidationError("sample_rays: mask size mismatch");
  std::vector<uint8_t> dilated(static_cast<std::size_t>(w) * h, 0);
  int r = dilation / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y, 0) <= 0.0f) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          dilated[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
    }

  // cumulative sampling weights: cos(latitude) compensates pole stretching
  std::vector<double> cdf_obj, cdf_bg;
  std::vector<int> px_obj, px_bg;
  cdf_obj.reserve(dilated.size());
  cdf_bg.reserve(dilated.size());
  double acc_obj = 0, acc_bg = 0;
  for (int y = 0; y < h; ++y) {
    double lat = M_PI / 2.0 - M_PI * (y + 0.5) / h;
    double wlat = cam.model == Camera::Model::Equirect ? std::cos(lat) : 1.0;
    for (int x = 0; x < w; ++x) {
      int idx = y * w + x;
      if (dilated[idx]) {
        acc_obj += wlat;
        cdf_obj.push_back(acc_obj);
        px_obj.push_back(idx);
      } else {
        acc_bg += wlat;
        cdf_bg.push_back(acc_bg);
        px_bg.push_back(idx);
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto draw = [&](const std::vector<double>& cdf, const std::vector<int>& px, double total) {
    double target = uni(rng) * total;
    std::size_t lo = std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
    if (lo >= px.size()) lo = px.size() - 1;
    return px[lo];
  };

  std::vector<PixelRay> out;
  out.reserve(n_obj + n_bg);
  auto push_pixel = [&](int idx) {
    PixelRay pr;
    pr.x = idx % w;
    pr.y = idx / w;
    pr.ray = camera_ray(cam, pr.x, pr.y, w, h);
    out.push_back(pr);
  };
  // degenerate masks redirect their share of rays to the other region
  if (px_obj.empty()) n_bg += n_obj;
  if (px_bg.empty()) n_obj += n_bg;
  for (int i = 0; i < n_obj && !px_obj.empty(); ++i) push_pixel(draw(cdf_obj, px_obj, acc_obj));
  for (int i = 0; i < n_bg && !px_bg.empty(); ++i) push_pixel(draw(cdf_bg, px_bg, acc_bg));
  return out;
}

// --- magnetic probes ---

namespace {

constexpr int kMagGrid = 8;
constexpr double kBackoffStart = 0.5;
constexpr double kBackoffStep = 0.5;
constexpr double kBackoffMax = 1.5;
constexpr double kMinSlope = 0.1;

}  // namespace

MagPlan plan_mag(const SceneRenderer& renderer, const std::vector<Relation>& relations) {
  const Scene& scene = renderer.scene();
  MagPlan plan;
  plan.relations.resize(relations.size());

  for (std::size_t ri = 0; ri < relations.size(); ++ri) {
    const Relation& rel = relations[ri];
    MagRelationPlan& rp = plan.relations[ri];
    rp.subject = rel.subject;
    rp.target = rel.target;
    const ObjectInstance& subj = scene.objects[rel.subject - 1];
    Mat3 rot = subj.pose.rotation();
    Vec3 dir_local = transpose(rot).mul(rel.direction);

    // probe grid on the subject bbox face facing the relation direction,
    // snapped to the actual surface by tracing inward
    int axis = 0;
    double best = std::abs(dir_local.x);
    if (std::abs(dir_local.y) > best) { axis = 1; best = std::abs(dir_local.y); }
    if (std::abs(dir_local.z) > best) { axis = 2; }
    bool positive = dir_local[axis] > 0;
    const Aabb& box = subj.local_bbox_tight;
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;

    std::vector<Vec3> starts;
    for (int i = 0; i < kMagGrid; ++i) {
      for (int j = 0; j < kMagGrid; ++j) {
        Vec3 fp;
        fp.ref(axis) = positive ? box.max[axis] : box.min[axis];
        fp.ref(a1) = box.min[a1] + (box.max[a1] - box.min[a1]) * (i + 0.5) / kMagGrid;
        fp.ref(a2) = box.min[a2] + (box.max[a2] - box.min[a2]) * (j + 0.5) / kMagGrid;
        // world-frame inward trace of the subject itself
        Vec3 fw = rot.mul(fp) + subj.pose.p;
        RayHit snap = renderer.sphere_trace_field(rel.subject, Ray{fw, -1.0 * rel.direction});
        if (snap.hit && snap.t >= 0 && snap.t < 2.0)
          starts.push_back(transpose(rot).mul((fw - rel.direction * snap.t) - subj.pose.p));
      }
    }
    if (starts.empty()) {
      for (int i = 0; i < kMagGrid; ++i)
        for (int j = 0; j < kMagGrid; ++j) {
          Vec3 fp;
          fp.ref(axis) = positive ? box.max[axis] : box.min[axis];
          fp.ref(a1) = box.min[a1] + (box.max[a1] - box.min[a1]) * (i + 0.5) / kMagGrid;
          fp.ref(a2) = box.min[a2] + (box.max[a2] - box.min[a2]) * (j + 0.5) / kMagGrid;
          starts.push_back(fp);
        }
    }

    for (const Vec3& sl : starts) {
      Vec3 sw = rot.mul(sl) + subj.pose.p;
      // grow the back-offset until the trace starts outside the target and
      // finds an intersection
      bool found = false;
      double t_star = 0;
      for (double b = kBackoffStart; b <= kBackoffMax + 1e-9; b += kBackoffStep) {
        if (renderer.sdf_world(rel.target, sw - rel.direction * b) <= renderer.config().hit_eps)
          continue;
        RayHit hit = renderer.sphere_trace_field(rel.target, Ray{sw, rel.direction}, b);
        if (hit.hit) {
          t_star = hit.t;
          found = true;
          break;
        }
      }
      if (!found) continue;
      MagProbe probe;
      probe.start_local = sl;
      probe.dir = rel.direction;
      probe.t_star = t_star;
      double slope = dot(renderer.sdf_grad_world(rel.target, sw + rel.direction * t_star),
                         rel.direction);
      if (slope > -kMinSlope) slope = -kMinSlope;  // grazing hits: clamp for stability
      probe.slope = slope;
      rp.probes.push_back(probe);
    }

    // freeze the attachment subset: the nearest quarter of positive hits
    std::vector<std::pair<double, int>> positives;
    for (std::size_t i = 0; i < rp.probes.size(); ++i)
      if (rp.probes[i].t_star > 0) positives.emplace_back(rp.probes[i].t_star, static_cast<int>(i));
    std::sort(positives.begin(), positives.end());
    std::size_t keep = positives.empty() ? 0 : std::max<std::size_t>(1, positives.size() / 4);
    for (std::size_t i = 0; i < keep; ++i) rp.probes[positives[i].second].attach_term = true;
  }
  return plan;
}

std::vector<Vec3> sample_surface_points(const Field& field, const Aabb& bbox, int count,
                                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec3 ext = bbox.extent();
  double areas[3] = {ext.y * ext.z, ext.x * ext.z, ext.x * ext.y};
  double total_area = 2 * (areas[0] + areas[1] + areas[2]);

  std::vector<Vec3> points;
  points.reserve(count);
  const double hit_eps = 1e-4;
  int attempts = 0;
  const int max_attempts = count * 20;
  while (static_cast<int>(points.size()) < count && attempts++ < max_attempts) {
    double pick = uni(rng) * total_area;
    int axis = 0;
    for (; axis < 2; ++axis) {
      if (pick < 2 * areas[axis]) break;
      pick -= 2 * areas[axis];
    }
    bool positive = pick >= areas[axis];
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    Vec3 o;
    o.ref(axis) = positive ? bbox.max[axis] : bbox.min[axis];
    o.ref(a1) = bbox.min[a1] + ext[a1] * uni(rng);
    o.ref(a2) = bbox.min[a2] + ext[a2] * uni(rng);
    Vec3 d{0, 0, 0};
    d.ref(axis) = positive ? -1.0 : 1.0;

    double budget = ext[axis];
    double u = 0;
    for (int step = 0; step < 64; ++step) {
      double s = sdf_eval(field, o + d * u);
      if (s < hit_eps) {
        points.push_back(o + d * u);
        break;
      }
      u += s;
      if (u > budget) break;
    }
  }
  return points;
}

// --- parameter views ---

namespace {

// Maps the flat parameter vector to leaves on the active tape. Inactive
// parameters become plain constants, so frozen blocks cost no tape nodes and
// keep exact-zero gradients.
struct ParamContext {
  const std::vector<double>* values = nullptr;
  const std::vector<uint8_t>* active = nullptr;
  std::vector<int32_t> leaf_of;
  std::vector<int> touched;

  void init(const std::vector<double>& v, const std::vector<uint8_t>* a) {
    values = &v;
    active = a;
    leaf_of.assign(v.size(), -1);
    touched.clear();
  }
  void reset() {
    for (int i : touched) leaf_of[i] = -1;
    touched.clear();
  }
  Val get(int i) {
    double v = (*values)[i];
    if (active && !(*active)[i]) return Val(v);
    int32_t& l = leaf_of[i];
    if (l < 0) {
      l = ad::active_tape()->leaf();
      touched.push_back(i);
    }
    return Val(v, l);
  }
  void add_adjoints(const ad::Tape& tape, double scale, std::vector<double>& grad) const {
    for (int i : touched) grad[i] += scale * tape.adjoint(leaf_of[i]);
  }
};

template <class S, class Getter>
SceneParamsT<S> build_view(const Scene& scene, const ParamLayout& layout, Getter get) {
  SceneParamsT<S> view;
  view.fields.resize(scene.num_fields());
  auto& bg = view.fields[0];
  bg.valid = true;
  bg.identity_pose = true;
  bg.rot = M3<S>::identity();
  bg.pos = {S(0), S(0), S(0)};
  int bt = layout.background_tone();
  bg.tone_t = {get(bt + 0), get(bt + 1), get(bt + 2)};
  bg.tone_s = {get(bt + 3), get(bt + 4), get(bt + 5)};
  for (int k = 0; k < layout.num_objects; ++k) {
    auto& f = view.fields[k + 1];
    f.valid = true;
    f.identity_pose = false;
    std::array<S, 6> r6;
    for (int i = 0; i < 6; ++i) r6[i] = get(layout.obj_r6(k) + i);
    f.rot = rot6d_to_matrix<S>(r6);
    f.pos = {get(layout.obj_p(k) + 0), get(layout.obj_p(k) + 1), get(layout.obj_p(k) + 2)};
    int t = layout.obj_tone(k);
    f.tone_t = {get(t + 0), get(t + 1), get(t + 2)};
    f.tone_s = {get(t + 3), get(t + 4), get(t + 5)};
  }
  for (int i = 0; i < 27; ++i) view.sh[i] = get(layout.sh() + i);
  return view;
}

SceneParamsT<double> view_from_params(const Scene& scene, const std::vector<double>& params) {
  ParamLayout layout{static_cast<int>(scene.objects.size())};
  return build_view<double>(scene, layout, [&](int i) { return params[i]; });
}

SceneParamsT<Val> view_from_context(const Scene& scene, ParamContext& ctx) {
  ParamLayout layout{static_cast<int>(scene.objects.size())};
  return build_view<Val>(scene, layout, [&](int i) { return ctx.get(i); });
}

// --- per-term evaluation, templated on the scalar ---

template <class S>
S pho_ray(const SceneRenderer& renderer, const SceneParamsT<S>& view, const PixelRay& pr,
          const RaySamplePlan& plan, const Image& observed) {
  RenderOut<S> out = renderer.eval_ray(pr.ray, plan, view, nullptr);
  Vec3 c = observed.rgb(pr.x, pr.y);
  S dx = out.color.x - S(c.x);
  S dy = out.color.y - S(c.y);
  S dz = out.color.z - S(c.z);
  return dx * dx + dy * dy + dz * dz;
}

template <class S>
S obs_term(const Scene& scene, const SceneParamsT<S>& view, const LossContext& ctx) {
  using std::sqrt;
  using ad::sqrt;
  S total(0);
  Vec3 cam = scene.camera.position;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    Vec3 u = ctx.init_positions[k] - cam;
    double un = norm(u);
    if (un < 1e-9) continue;
    const auto& f = view.fields[k + 1];
    V3<S> v{f.pos.x - S(cam.x), f.pos.y - S(cam.y), f.pos.z - S(cam.z)};
    S vn2 = dot(v, v);
    if (value_of(vn2) < 1e-18) continue;
    S cosine = dot(v, V3<S>{S(u.x / un), S(u.y / un), S(u.z / un)}) / sqrt(vn2);
    S dev = S(1.0) - cosine;
    total = total + dev * dev;
  }
  return total;
}

template <class S>
S g_term(const Scene& scene, const SceneParamsT<S>& view, const LossContext& ctx) {
  S total(0);
  V3<S> g{S(scene.gravity.x), S(scene.gravity.y), S(scene.gravity.z)};
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    if (!ctx.gravity_flags[k]) continue;
    // rotation columns are orthonormal, so the dot product is the cosine
    S cosine = dot(view.fields[k + 1].rot.mul(g), g);
    total = total + (S(1.0) - cosine);
  }
  return total;
}

template <class S>
S mag_term(const Scene& scene, const SceneParamsT<S>& view, const LossContext& ctx) {
  using std::max;
  using ad::max;
  if (ctx.mag.relations.empty()) return S(0);
  S total(0);
  for (const MagRelationPlan& rp : ctx.mag.relations) {
    if (rp.probes.empty()) continue;  // skipped relation, zero contribution
    const auto& fs = view.fields[rp.subject];
    const auto& ft = view.fields[rp.target];
    const Field& target_field =
        rp.target == 0 ? scene.background : scene.objects[rp.target - 1].field;
    S d_a(0), d_v(0);
    int n_a = 0, n_v = 0;
    for (const MagProbe& p : rp.probes) {
      // differentiable gap: frozen hit parameter corrected by the target SDF
      // at the (frozen) hit point, divided by the frozen approach slope
      V3<S> start{S(p.start_local.x), S(p.start_local.y), S(p.start_local.z)};
      V3<S> sw = fs.rot.mul(start) + fs.pos;
      V3<S> xw{sw.x + S(p.dir.x * p.t_star), sw.y + S(p.dir.y * p.t_star),
               sw.z + S(p.dir.z * p.t_star)};
      V3<S> xl = rp.target == 0 ? xw : ft.rot.tmul(xw - ft.pos);
      S sdf = sdf_eval(target_field, xl);
      S gap = S(p.t_star) - sdf / S(p.slope);
      if (p.attach_term) {
        d_a = d_a + gap;
        ++n_a;
      }
      if (p.t_star <= 0) {
        d_v = d_v - gap;
        ++n_v;
      }
    }
    if (n_a > 0) d_a = d_a / S(static_cast<double>(n_a));
    if (n_v > 0) d_v = d_v / S(static_cast<double>(n_v));
    total = total + max(d_a, S(0)) + max(d_v, S(0));
  }
  return total / S(static_cast<double>(ctx.mag.relations.size()));
}

template <class S>
S vio_term(const Scene& scene, const SceneParamsT<S>& view, const LossContext& ctx,
           const OptimConfig& cfg) {
  using std::max;
  using ad::max;
  S total(0);
  const double eps = cfg.vio_epsilon;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    if (ctx.neighbors.size() <= k) break;
    const auto& pts = (*ctx.surface_points)[k];
    const auto& fk = view.fields[k + 1];
    for (int o : ctx.neighbors[k]) {
      const Field& field_o = o == 0 ? scene.background : scene.objects[o - 1].field;
      const auto& fo = view.fields[o];
      for (const Vec3& pl : pts) {
        V3<S> xw = fk.rot.mul(V3<S>{S(pl.x), S(pl.y), S(pl.z)}) + fk.pos;
        V3<S> xo = o == 0 ? xw : fo.rot.tmul(xw - fo.pos);
        S sdf = sdf_eval(field_o, xo);
        total = total + max(-(sdf + S(eps)), S(0));
      }
    }
  }
  return total;
}

}  // namespace

double eval_term_value(const SceneRenderer& renderer, const std::vector<double>& params,
                       const LossContext& ctx, const OptimConfig& cfg, LossTerm term) {
  const Scene& scene = renderer.scene();
  SceneParamsT<double> view = view_from_params(scene, params);
  switch (term) {
    case LossTerm::Pho: {
      if (ctx.rays.empty()) return 0;
      // per-chunk partial sums reduced in chunk order: bit-stable at any
      // worker count
      const std::size_t chunk_size = 64;
      std::vector<double> partial((ctx.rays.size() + chunk_size - 1) / chunk_size, 0.0);
      parallel_chunks(ctx.rays.size(), chunk_size,
                      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                        double acc = 0;
                        for (std::size_t i = begin; i < end; ++i)
                          acc += pho_ray(renderer, view, ctx.rays[i], ctx.plans[i], *ctx.observed);
                        partial[chunk] = acc;
                      });
      double total = 0;
      for (double p : partial) total += p;
      return total / static_cast<double>(ctx.rays.size());
    }
    case LossTerm::Obs: return obs_term(scene, view, ctx);
    case LossTerm::Mag: return mag_term(scene, view, ctx);
    case LossTerm::Vio: return vio_term(scene, view, ctx, cfg);
    case LossTerm::G: return g_term(scene, view, ctx);
  }
  return 0;
}

TermGrad eval_term_grad(const SceneRenderer& renderer, const std::vector<double>& params,
                        const LossContext& ctx, const OptimConfig& cfg, LossTerm term,
                        const std::vector<uint8_t>* active) {
  const Scene& scene = renderer.scene();
  TermGrad out;
  out.grad.assign(params.size(), 0.0);

  if (term == LossTerm::Pho) {
    if (ctx.rays.empty()) return out;
    const double inv_n = 1.0 / static_cast<double>(ctx.rays.size());
    const std::size_t chunk_size = 32;
    const std::size_t n_chunks = (ctx.rays.size() + chunk_size - 1) / chunk_size;
    std::vector<double> partial_val(n_chunks, 0.0);
    std::vector<std::vector<double>> partial_grad(n_chunks);
    parallel_chunks(ctx.rays.size(), chunk_size,
                    [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                      ad::Tape tape;
                      ad::TapeScope scope(&tape);
                      ParamContext pctx;
                      pctx.init(params, active);
                      std::vector<double> grad(params.size(), 0.0);
                      double acc = 0;
                      for (std::size_t i = begin; i < end; ++i) {
                        tape.reset();
                        pctx.reset();
                        SceneParamsT<Val> view = view_from_context(scene, pctx);
                        Val loss =
                            pho_ray(renderer, view, ctx.rays[i], ctx.plans[i], *ctx.observed);
                        acc += loss.v;
                        if (loss.ix >= 0) {
                          tape.backward(loss.ix);
                          pctx.add_adjoints(tape, inv_n, grad);
                        }
                      }
                      partial_val[chunk] = acc;
                      partial_grad[chunk] = std::move(grad);
                    });
    for (std::size_t c = 0; c < n_chunks; ++c) {
      out.value += partial_val[c];
      for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += partial_grad[c][i];
    }
    out.value *= inv_n;
    return out;
  }

  ad::Tape tape;
  ad::TapeScope scope(&tape);
  ParamContext pctx;
  pctx.init(params, active);
  SceneParamsT<Val> view = view_from_context(scene, pctx);
  Val loss(0);
  switch (term) {
    case LossTerm::Obs: loss = obs_term(scene, view, ctx); break;
    case LossTerm::Mag: loss = mag_term(scene, view, ctx); break;
    case LossTerm::Vio: loss = vio_term(scene, view, ctx, cfg); break;
    case LossTerm::G: loss = g_term(scene, view, ctx); break;
    case LossTerm::Pho: break;  // handled above
  }
  out.value = loss.v;
  if (loss.ix >= 0) {
    tape.backward(loss.ix);
    pctx.add_adjoints(tape, 1.0, out.grad);
  }
  return out;
}

LossResult eval_total_loss(const SceneRenderer& renderer, const std::vector<double>& params,
                           const LossContext& ctx, const OptimConfig& cfg,
                           const std::vector<uint8_t>* active) {
  LossResult res;
  res.grad.assign(params.size(), 0.0);
  struct TermSpec {
    LossTerm term;
    double weight;
    double* slot;
  };
  TermSpec specs[5] = {{LossTerm::Pho, cfg.lambda_pho, &res.terms.pho},
                       {LossTerm::Obs, cfg.lambda_obs, &res.terms.obs},
                       {LossTerm::Mag, cfg.lambda_phy, &res.terms.mag},
                       {LossTerm::Vio, cfg.lambda_phy, &res.terms.vio},
                       {LossTerm::G, cfg.lambda_phy, &res.terms.g}};
  for (const TermSpec& s : specs) {
    TermGrad tg = eval_term_grad(renderer, params, ctx, cfg, s.term, active);
    if (!std::isfinite(tg.value))
      throw NonFiniteLoss(std::string(loss_term_name(s.term)) + " = " + std::to_string(tg.value));
    *s.slot = tg.value;
    for (std::size_t i = 0; i < res.grad.size(); ++i) res.grad[i] += s.weight * tg.grad[i];
  }
  return res;
}

}  // namespace nrroom
