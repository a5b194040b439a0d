#include "nrroom/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

namespace nrroom {

using nlohmann::json;

namespace {

bool box_contains(const OrientedBox& b, const Vec3& p_world) {
  Vec3 local = transpose(b.rot).mul(p_world - b.pos);
  return b.local.contains(local);
}

Aabb world_bounds(const OrientedBox& b) {
  Aabb out{{1e30, 1e30, 1e30}, {-1e30, -1e30, -1e30}};
  for (int c = 0; c < 8; ++c) {
    Vec3 corner{(c & 1) ? b.local.max.x : b.local.min.x, (c & 2) ? b.local.max.y : b.local.min.y,
                (c & 4) ? b.local.max.z : b.local.min.z};
    out.expand(b.rot.mul(corner) + b.pos);
  }
  return out;
}

}  // namespace

double oriented_box_iou(const OrientedBox& a, const OrientedBox& b, int resolution) {
  Aabb wa = world_bounds(a), wb = world_bounds(b);
  Aabb un{cwise_min(wa.min, wb.min), cwise_max(wa.max, wb.max)};
  Vec3 ext = un.extent();
  long long in_a = 0, in_b = 0, in_both = 0;
  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        Vec3 p{un.min.x + ext.x * (i + 0.5) / resolution,
               un.min.y + ext.y * (j + 0.5) / resolution,
               un.min.z + ext.z * (k + 0.5) / resolution};
        bool ia = box_contains(a, p);
        bool ib = box_contains(b, p);
        in_a += ia;
        in_b += ib;
        in_both += ia && ib;
      }
    }
  }
  long long in_union = in_a + in_b - in_both;
  if (in_union <= 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_union);
}

EvalReport evaluate(const std::vector<PoseEntry>& fitted, const std::vector<PoseEntry>& gt,
                    const std::vector<std::pair<int, Aabb>>& bboxes) {
  std::map<int, PoseParam> gt_by_id;
  for (const auto& e : gt) gt_by_id[e.id] = e.pose;
  std::map<int, Aabb> box_by_id;
  for (const auto& [id, box] : bboxes) box_by_id[id] = box;

  EvalReport report;
  double sum_iou = 0, sum_are = 0, sum_ape = 0;
  int n_iou = 0;
  for (const auto& e : fitted) {
    auto it = gt_by_id.find(e.id);
    if (it == gt_by_id.end()) throw ValidationError("fitted pose has no ground-truth match");
    ObjectEval oe;
    oe.id = e.id;
    oe.are_deg = geodesic_angle_deg(e.pose.rotation(), it->second.rotation());
    oe.ape_cm = norm(e.pose.p - it->second.p) * 100.0;
    auto bit = box_by_id.find(e.id);
    if (bit != box_by_id.end()) {
      OrientedBox a{e.pose.rotation(), e.pose.p, bit->second};
      OrientedBox b{it->second.rotation(), it->second.p, bit->second};
      oe.iou_pct = 100.0 * oriented_box_iou(a, b);
      oe.has_iou = true;
      sum_iou += oe.iou_pct;
      ++n_iou;
    }
    sum_are += oe.are_deg;
    sum_ape += oe.ape_cm;
    report.objects.push_back(oe);
  }
  if (report.objects.empty()) throw ValidationError("no poses to evaluate");
  report.mean_are_deg = sum_are / report.objects.size();
  report.mean_ape_cm = sum_ape / report.objects.size();
  if (n_iou > 0) {
    report.mean_iou_pct = sum_iou / n_iou;
    report.has_iou = true;
  }
  return report;
}

void write_eval_report(const std::string& path, const EvalReport& report) {
  json j;
  j["objects"] = json::array();
  for (const auto& o : report.objects) {
    json jo{{"id", o.id}, {"are_deg", o.are_deg}, {"ape_cm", o.ape_cm}};
    if (o.has_iou) jo["iou_pct"] = o.iou_pct;
    j["objects"].push_back(jo);
  }
  j["mean_are_deg"] = report.mean_are_deg;
  j["mean_ape_cm"] = report.mean_ape_cm;
  if (report.has_iou) j["mean_iou_pct"] = report.mean_iou_pct;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace nrroom
