#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrroom/image.hpp"
#include "nrroom/render.hpp"
#include "nrroom/scene.hpp"

namespace nrroom {

// Synthetic closed-scene generator: a room shell plus baked box objects
// resting on the floor (the first one optionally against a wall), a
// ground-truth panorama, and noisy initial poses standing in for detector
// output.
struct SynthSpec {
  int objects = 3;
  Vec3 room_dims{5.0, 4.0, 2.6};
  int width = 320, height = 160;
  double rot_noise_deg = 15.0;   // yaw-only for gravity-bound categories
  double trans_noise_m = 0.2;
  bool penetrate_init = false;   // push initial poses into the floor
  int room_grid = 128;
  int object_grid = 96;

  static SynthSpec load(const std::string& path);
};

struct SynthResult {
  Scene scene;  // ground-truth poses applied
  Image panorama;
  std::vector<PoseEntry> gt_poses;
  std::vector<PoseEntry> init_poses;
};

SynthResult synth_scene(const SynthSpec& spec, uint64_t seed, const RenderConfig& rcfg);

// Writes scene.json, the referenced SDFG fields, pano.png/pano.imgf and the
// gt/init pose files into out_dir.
void write_synth(const std::string& out_dir, const SynthResult& result);

}  // namespace nrroom
