#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nrroom/ad.hpp"
#include "nrroom/image.hpp"
#include "nrroom/lighting.hpp"
#include "nrroom/scene.hpp"
#include "nrroom/vec.hpp"

namespace nrroom {

struct Ray {
  Vec3 origin{0, 0, 0};
  Vec3 dir{1, 0, 0};  // unit
};

struct RenderConfig {
  double sharpness = 64.0;        // logistic scale s
  int coarse_samples = 8;
  int fine_samples = 16;
  double safe_near_offset = 0.05;  // meters below the traced hit
  double safe_far_offset = 0.10;   // meters beyond the traced hit
  int full_coarse = 64;            // reference path
  int full_fine = 64;
  int max_steps = 128;
  double hit_eps = 1e-4;           // meters
  double max_distance = 30.0;
  double t_min = 1e-3;             // closest sample distance
  Vec3 background_color{0, 0, 0};
  double early_stop_transmittance = 1e-4;  // 0 disables
};

enum class RenderMode { Safe, Full };

// Tally of field evaluations (sdf_eval + albedo_eval) made by a render call.
// Workers keep private tallies that are merged after the batch.
struct QueryCounter {
  long long sdf = 0;
  long long albedo = 0;
  long long total() const { return sdf + albedo; }
  QueryCounter& operator+=(const QueryCounter& o) {
    sdf += o.sdf;
    albedo += o.albedo;
    return *this;
  }
};

struct RayHit {
  bool hit = false;
  double t = 0;         // measured from the ray origin (negative = behind)
  int field_index = -1; // 0 = background, k >= 1 = object k-1
};

// Equirectangular mapping for a Z-up world. Pixel (u,v) of a WxH panorama
// (W = 2H) maps to longitude phi = 2 pi (u+0.5)/W - pi and latitude
// theta = pi/2 - pi (v+0.5)/H; the direction is in the camera frame.
Vec3 equirect_dir(double u, double v, int w, int h);
void equirect_uv(const Vec3& dir, int w, int h, double& u, double& v);
Vec3 pinhole_dir(double u, double v, int w, int h, double fov_deg);
Ray camera_ray(const Camera& cam, double u, double v, int w, int h);

// One per-sample value along a merged ray.
struct RaySample {
  double t = 0;
  int field_index = 0;
  double sdf = 0;
  Vec3 albedo{0, 0, 0};
};

template <class S>
struct RenderOut {
  V3<S> color{S(0), S(0), S(0)};
  S depth{0};
  std::vector<double> weights;     // per field accumulated weight, index 0 = background
  double background_weight = 0;

  void init(int num_fields) {
    color = {S(0), S(0), S(0)};
    depth = S(0);
    weights.assign(num_fields, 0.0);
    background_weight = 0;
  }
};

// Opacity from two consecutive SDF samples of the same field (logistic CDF
// ratio). Zero whenever the ray is exiting or parallel to the surface.
template <class S>
S alpha_from_sdf(S sdf_i, S sdf_next, double s) {
  using std::max;
  using ad::max;
  S phi_i = ad::logistic(sdf_i, s);
  S phi_n = ad::logistic(sdf_next, s);
  return max((phi_i - phi_n) / phi_i, S(0));
}

// Per-field sample distances chosen for one ray; placement is detached from
// the gradient path by design.
struct FieldSamplePlan {
  int field_index = 0;
  std::vector<double> ts;  // ascending
};

struct RaySamplePlan {
  std::vector<FieldSamplePlan> fields;
  bool empty() const {
    for (const auto& f : fields)
      if (!f.ts.empty()) return false;
    return true;
  }
};

// Parameter-typed view of the scene: poses, tones and lighting as S so one
// evaluation path serves plain rendering, autodiff and finite differences.
template <class S>
struct SceneParamsT {
  struct FieldP {
    bool valid = false;
    bool identity_pose = false;  // background
    M3<S> rot;
    V3<S> pos;
    V3<S> tone_t, tone_s;
  };
  std::vector<FieldP> fields;
  std::array<S, 27> sh;
};

// Introspection for invariant tests: per-merged-sample opacity and the
// transmittance before each sample.
struct RayDebug {
  std::vector<double> alphas;
  std::vector<double> transmittance;
};

class SceneRenderer {
 public:
  SceneRenderer(const Scene& scene, const RenderConfig& cfg);

  const Scene& scene() const { return *scene_; }
  const RenderConfig& config() const { return cfg_; }
  int num_fields() const { return static_cast<int>(field_of_.size()); }
  const Field& field(int index) const { return *field_of_[index]; }
  const Aabb& world_bbox(int index) const { return world_bbox_[index]; }
  const Mat3& field_rot(int index) const { return rot_[index]; }
  const Vec3& field_pos(int index) const { return pos_[index]; }

  // Whole-scene sphere trace: marches from origin - back_offset*dir stepping
  // by the min SDF over all fields; returns the arg-min field on a hit.
  RayHit sphere_trace(const Ray& ray, double back_offset = 0, QueryCounter* qc = nullptr) const;
  // Single-field trace used for per-field sample placement and probing.
  RayHit sphere_trace_field(int field_index, const Ray& ray, double back_offset = 0,
                            QueryCounter* qc = nullptr) const;

  RaySamplePlan plan_ray(const Ray& ray, RenderMode mode, QueryCounter* qc = nullptr) const;

  // Differentiable evaluation over a fixed plan.
  template <class S>
  RenderOut<S> eval_ray(const Ray& ray, const RaySamplePlan& plan, const SceneParamsT<S>& params,
                        QueryCounter* qc = nullptr, RayDebug* dbg = nullptr) const;

  RenderOut<double> render_ray(const Ray& ray, RenderMode mode, QueryCounter* qc = nullptr,
                               RayDebug* dbg = nullptr) const;

  SceneParamsT<double> scene_params() const;

  double sdf_world(int field_index, const Vec3& p_world) const;
  Vec3 sdf_grad_world(int field_index, const Vec3& p_world) const;

 private:
  const Scene* scene_;
  RenderConfig cfg_;
  std::vector<const Field*> field_of_;
  std::vector<Mat3> rot_;
  std::vector<Vec3> pos_;
  std::vector<Aabb> world_bbox_;
  std::vector<bool> has_albedo_;
};

struct RenderImages {
  Image color;    // 3 channels
  Image depth;    // 1 channel
  Image weights;  // num_fields channels; channel 0 = background
};

RenderImages render_image(const Scene& scene, int w, int h, const RenderConfig& cfg,
                          RenderMode mode, QueryCounter* qc = nullptr);

}  // namespace nrroom
