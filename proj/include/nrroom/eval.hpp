#pragma once

#include <string>
#include <vector>

#include "nrroom/scene.hpp"

namespace nrroom {

struct ObjectEval {
  int id = 0;
  double iou_pct = 0;   // 3D oriented-box overlap, percent
  double are_deg = 0;   // geodesic rotation error
  double ape_cm = 0;    // position error
  bool has_iou = false;
};

struct EvalReport {
  std::vector<ObjectEval> objects;
  double mean_iou_pct = 0;
  double mean_are_deg = 0;
  double mean_ape_cm = 0;
  bool has_iou = false;
};

struct OrientedBox {
  Mat3 rot;
  Vec3 pos;
  Aabb local;  // extents in the box frame
};

// Volumetric IoU via a 64^3 voxelization of the union AABB; error is about
// a percent at this resolution and is validated against axis-aligned closed
// forms in the tests.
double oriented_box_iou(const OrientedBox& a, const OrientedBox& b, int resolution = 64);

EvalReport evaluate(const std::vector<PoseEntry>& fitted, const std::vector<PoseEntry>& gt,
                    const std::vector<std::pair<int, Aabb>>& bboxes);

void write_eval_report(const std::string& path, const EvalReport& report);

}  // namespace nrroom
