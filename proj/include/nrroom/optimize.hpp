#pragma once

#include <string>
#include <vector>

#include "nrroom/losses.hpp"
#include "nrroom/relations.hpp"
#include "nrroom/scene.hpp"

namespace nrroom {

struct TraceRow {
  int step = 0;
  TermValues terms;
  double total = 0;
};

struct FitResult {
  std::vector<TraceRow> trace;
  std::vector<Relation> final_relations;
};

// Two-phase holistic fit: Adam over object poses with periodic relation and
// mask regeneration, then Adam over tone adjusters and SH lighting with
// poses frozen. The scene is updated in place; the loss trace is returned
// for reproducibility checks.
FitResult holistic_optimize(Scene& scene, const Image& observed, const OptimConfig& ocfg,
                            const RenderConfig& rcfg, const RuleTable& rules);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

// Central-difference validation of the analytic gradients. Sample placement
// (rays, volume samples, probes, neighbor sets) is frozen in the context, so
// the comparison probes exactly the function the tape differentiates.
struct GradCheckEntry {
  std::string term;
  std::string block;
  double max_rel_err = 0;
  double max_abs_err = 0;
  int checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_rel_err = 0;
  bool passed(double tol) const { return worst_rel_err <= tol; }
};

GradCheckReport grad_check(const SceneRenderer& renderer, const std::vector<double>& params,
                           const LossContext& ctx, const OptimConfig& cfg,
                           const std::vector<LossTerm>& terms, double h = 1e-5,
                           double abs_floor = 1e-6);

// Builds a frozen loss context from the current scene state: samples rays,
// plans them, generates probing data and neighbor sets.
struct ContextInputs {
  const Image* observed = nullptr;
  std::vector<Relation> relations;
  std::vector<Vec3> init_positions;
  std::vector<uint8_t> gravity_flags;
  const std::vector<std::vector<Vec3>>* surface_points = nullptr;
  uint64_t ray_seed = 0;
  int n_obj_rays = 0;
  int n_bg_rays = 0;
};

LossContext build_loss_context(const SceneRenderer& renderer, const Image& mask,
                               const OptimConfig& cfg, const ContextInputs& inputs);

// Object-region mask (1 channel, 0/1) rendered from the current poses at
// half resolution and upsampled; stands in for detector segmentation.
Image render_object_mask(const Scene& scene, int w, int h, const RenderConfig& cfg);

std::vector<std::vector<Vec3>> build_surface_caches(const Scene& scene, int points_per_object);

std::vector<uint8_t> gravity_flags_for(const Scene& scene, const RuleTable& rules);

}  // namespace nrroom
