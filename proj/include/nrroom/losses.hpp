#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrroom/image.hpp"
#include "nrroom/relations.hpp"
#include "nrroom/render.hpp"
#include "nrroom/scene.hpp"

namespace nrroom {

struct OptimConfig {
  double lambda_pho = 1.0;
  double lambda_obs = 100.0;
  double lambda_phy = 1.0;
  int iterations = 500;
  int phase2_iterations = 200;
  int relation_regen_period = 50;
  int rays_per_step = 1024;        // N object-mask rays; 0.2N background rays
  double lr_position = 1e-2;
  double lr_rotation = 5e-2;
  double lr_tone = 1e-2;
  double lr_lighting = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_final_frac = 0.1;      // linear decay floor within each cycle
  int restart_period = 100;        // warm-restart cycle length; 0 disables
  double vio_epsilon = 0.025;      // contact tolerance band, meters
  int vio_neighbors = 3;           // O
  int vio_points = 1000;           // P
  int mask_dilation = 5;           // square kernel size
  bool full_sampling = false;      // bypass safe-region sampling in the fit
  uint64_t seed = 0;

  static OptimConfig load(const std::string& path);
  void save(const std::string& path) const;
};

struct PixelRay {
  int x = 0, y = 0;
  Ray ray;
};

// Draws n_obj rays on the dilated object mask and n_bg on its complement,
// with vertical placement weighted by cos(latitude) to compensate
// equirectangular solid-angle distortion. Deterministic under the seed.
std::vector<PixelRay> sample_rays(const Image& mask, const Camera& cam, int w, int h, int n_obj,
                                  int n_bg, int dilation, uint64_t seed);

// Magnetic-loss probes, planned against current poses. Hit parameters and
// slopes are detached; the differentiable gap re-evaluates the target SDF at
// the frozen hit point.
struct MagProbe {
  Vec3 start_local;  // on the subject surface, subject-local frame
  Vec3 dir;          // world probe direction
  double t_star = 0;
  double slope = -1;   // d(SDF)/dt at the hit, clamped away from 0
  bool attach_term = false;  // selected for the nearest-25% attachment mean
};

struct MagRelationPlan {
  int subject = 0;
  int target = 0;
  std::vector<MagProbe> probes;  // only probes that found an intersection
};

struct MagPlan {
  std::vector<MagRelationPlan> relations;  // aligned with the relation list
};

MagPlan plan_mag(const SceneRenderer& renderer, const std::vector<Relation>& relations);

// P visible-surface points in the field's local frame, found by outside-in
// sphere tracing from random bbox-face points. Pose independent, cacheable.
std::vector<Vec3> sample_surface_points(const Field& field, const Aabb& bbox, int count,
                                        uint64_t seed);

// Everything a loss evaluation needs beyond the parameter vector. All
// members are frozen sample placements or constants, which makes finite
// differences of the evaluation well defined.
struct LossContext {
  const Image* observed = nullptr;
  std::vector<PixelRay> rays;
  std::vector<RaySamplePlan> plans;                 // aligned with rays
  std::vector<Relation> relations;
  MagPlan mag;
  std::vector<std::vector<int>> neighbors;          // per object, field indices
  const std::vector<std::vector<Vec3>>* surface_points = nullptr;  // per object
  std::vector<Vec3> init_positions;                 // p_init per object
  std::vector<uint8_t> gravity_flags;               // per object
};

enum class LossTerm { Pho, Obs, Mag, Vio, G };

const char* loss_term_name(LossTerm t);

struct TermValues {
  double pho = 0, obs = 0, mag = 0, vio = 0, g = 0;
  double weighted_total(const OptimConfig& cfg) const {
    return cfg.lambda_pho * pho + cfg.lambda_obs * obs + cfg.lambda_phy * (mag + vio + g);
  }
};

// Value-only evaluation at an arbitrary parameter vector (the FD oracle path).
double eval_term_value(const SceneRenderer& renderer, const std::vector<double>& params,
                       const LossContext& ctx, const OptimConfig& cfg, LossTerm term);

// Reverse-mode value + gradient. `active` masks parameters (frozen entries
// get exact-zero gradients and add no tape nodes); null means all active.
struct TermGrad {
  double value = 0;
  std::vector<double> grad;
};
TermGrad eval_term_grad(const SceneRenderer& renderer, const std::vector<double>& params,
                        const LossContext& ctx, const OptimConfig& cfg, LossTerm term,
                        const std::vector<uint8_t>* active);

struct LossResult {
  TermValues terms;
  std::vector<double> grad;  // of the weighted total
};
LossResult eval_total_loss(const SceneRenderer& renderer, const std::vector<double>& params,
                           const LossContext& ctx, const OptimConfig& cfg,
                           const std::vector<uint8_t>* active);

}  // namespace nrroom
