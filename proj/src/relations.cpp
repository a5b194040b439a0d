#include "nrroom/relations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace nrroom {

using nlohmann::json;

const char* relation_kind_name(RelationKind k) {
  switch (k) {
    case RelationKind::FloorSupport: return "floor_support";
    case RelationKind::WallAttach: return "wall_attach";
    case RelationKind::ObjectSupport: return "object_support";
  }
  return "?";
}

RuleTable RuleTable::defaults() {
  RuleTable t;
  t.rules["bed"] = {true, true, false, false, true};
  t.rules["shelf"] = {true, false, false, false, true};
  t.rules["nightstand"] = {true, false, false, false, true};
  t.rules["wall_picture"] = {true, false, true, false, false};
  t.rules["chair"] = {false, true, false, true, true};
  t.rules["bottom_cabinet"] = {false, true, false, false, true};
  t.rules["monitor"] = {false, false, true, true, true};
  t.rules["mirror"] = {true, false, true, false, false};
  t.rules["cabinet"] = {false, true, false, false, true};
  t.rules["table"] = {false, true, false, true, true};
  return t;
}

RuleTable RuleTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rule table " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("rule table parse error: " + std::string(e.what()));
  }
  RuleTable t;
  for (auto it = j.begin(); it != j.end(); ++it) {
    CategoryRule r;
    r.must_attach_wall = it.value().value("must_attach_wall", false);
    r.must_attach_floor = it.value().value("must_attach_floor", false);
    r.forbid_floor = it.value().value("forbid_floor", false);
    r.forbid_wall = it.value().value("forbid_wall", false);
    r.gravity_aligned = it.value().value("gravity_aligned", true);
    if (r.must_attach_floor && r.forbid_floor)
      throw ValidationError("rule for '" + it.key() + "' both requires and forbids the floor");
    if (r.must_attach_wall && r.forbid_wall)
      throw ValidationError("rule for '" + it.key() + "' both requires and forbids the wall");
    if (it.key() == "*")
      t.fallback = r;
    else
      t.rules[it.key()] = r;
  }
  return t;
}

void RuleTable::save(const std::string& path) const {
  json j;
  auto dump = [](const CategoryRule& r) {
    return json{{"must_attach_wall", r.must_attach_wall},
                {"must_attach_floor", r.must_attach_floor},
                {"forbid_floor", r.forbid_floor},
                {"forbid_wall", r.forbid_wall},
                {"gravity_aligned", r.gravity_aligned}};
  };
  for (const auto& [name, r] : rules) j[name] = dump(r);
  j["*"] = dump(fallback);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

namespace {

constexpr int kProbeGrid = 8;  // 8x8 probing rays
constexpr double kOppositionCos = 0.8660254037844387;  // cos(30 deg)

struct ProbeStats {
  int hits = 0;
  std::vector<double> dists;
  int opposed = 0;  // hits whose surface normal opposes the probe direction

  double median() const {
    std::vector<double> d = dists;
    std::sort(d.begin(), d.end());
    return d[d.size() / 2];
  }
};

// Probe one face of the subject toward `dir` and collect distances per
// target field. Probe origins snap to the subject's own surface by tracing
// inward from the bbox face; rays that never enter the subject are dropped
// (hollow regions), with the raw face point as a fallback when everything
// misses.
std::map<int, ProbeStats> probe_direction(const SceneRenderer& r, int subject, const Vec3& dir,
                                          const std::vector<Vec3>& face_points,
                                          double max_probe_dist) {
  std::vector<Vec3> starts;
  starts.reserve(face_points.size());
  const double snap_budget = 2.0;  // bbox diameters are well under this
  for (const Vec3& fp : face_points) {
    RayHit hit = r.sphere_trace_field(subject, Ray{fp, -1.0 * dir}, 0.0, nullptr);
    if (hit.hit && hit.t >= 0 && hit.t < snap_budget) starts.push_back(fp - dir * hit.t);
  }
  if (starts.empty()) starts = face_points;

  std::map<int, ProbeStats> per_target;
  for (const Vec3& s : starts) {
    // nearest surface along dir over all other fields
    double best_t = 1e30;
    int best_i = -1;
    for (int i = 0; i < r.num_fields(); ++i) {
      if (i == subject) continue;
      RayHit hit = r.sphere_trace_field(i, Ray{s, dir}, 0.0, nullptr);
      if (hit.hit && hit.t >= 0 && hit.t < best_t) {
        best_t = hit.t;
        best_i = i;
      }
    }
    if (best_i < 0 || best_t > max_probe_dist) continue;
    ProbeStats& st = per_target[best_i];
    st.hits++;
    st.dists.push_back(best_t);
    Vec3 n = normalized(r.sdf_grad_world(best_i, s + dir * best_t));
    if (dot(n, dir) < -kOppositionCos) st.opposed++;
  }
  return per_target;
}

std::vector<Vec3> face_grid(const Aabb& box, int axis, bool positive_side) {
  std::vector<Vec3> pts;
  pts.reserve(kProbeGrid * kProbeGrid);
  int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (int i = 0; i < kProbeGrid; ++i) {
    for (int j = 0; j < kProbeGrid; ++j) {
      Vec3 p;
      p.ref(axis) = positive_side ? box.max[axis] : box.min[axis];
      p.ref(a1) = box.min[a1] + (box.max[a1] - box.min[a1]) * (i + 0.5) / kProbeGrid;
      p.ref(a2) = box.min[a2] + (box.max[a2] - box.min[a2]) * (j + 0.5) / kProbeGrid;
      pts.push_back(p);
    }
  }
  return pts;
}

Aabb posed_bbox(const ObjectInstance& o) {
  Mat3 rot = o.pose.rotation();
  Aabb out{{1e30, 1e30, 1e30}, {-1e30, -1e30, -1e30}};
  for (int corner = 0; corner < 8; ++corner) {
    Vec3 c{(corner & 1) ? o.local_bbox_tight.max.x : o.local_bbox_tight.min.x,
           (corner & 2) ? o.local_bbox_tight.max.y : o.local_bbox_tight.min.y,
           (corner & 4) ? o.local_bbox_tight.max.z : o.local_bbox_tight.min.z};
    out.expand(rot.mul(c) + o.pose.p);
  }
  return out;
}

}  // namespace

std::vector<Relation> generate_relations(const Scene& scene, const RuleTable& rules,
                                         const RenderConfig& cfg, double candidate_dist) {
  SceneRenderer renderer(scene, cfg);
  std::vector<Relation> out;

  struct Candidate {
    Relation rel;
    double median;
    bool opposed;
  };

  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const ObjectInstance& obj = scene.objects[k];
    const int subject = static_cast<int>(k) + 1;
    const CategoryRule rule = rules.lookup(obj.category);
    const Aabb box = posed_bbox(obj);
    const double probe_budget = 3.0;  // collect candidates well past the gate

    std::vector<Candidate> support, attach;

    // downward probe from the bottom face
    {
      Vec3 dir{0, 0, -1};
      auto stats = probe_direction(renderer, subject, dir, face_grid(box, 2, false), probe_budget);
      for (const auto& [target, st] : stats) {
        if (st.hits * 4 < kProbeGrid * kProbeGrid) continue;  // need a quarter of the grid
        Relation rel;
        rel.kind = target == 0 ? RelationKind::FloorSupport : RelationKind::ObjectSupport;
        rel.subject = subject;
        rel.target = target;
        rel.direction = dir;
        support.push_back({rel, st.median(), true});
      }
    }

    // four horizontal outward normals of the posed bbox
    Mat3 rot = obj.pose.rotation();
    const Vec3 axes[4] = {rot.c0, -1.0 * rot.c0, rot.c1, -1.0 * rot.c1};
    for (const Vec3& axis : axes) {
      Vec3 dir = axis;
      dir.z = 0;  // attachment probes stay horizontal
      double len = norm(dir);
      if (len < 1e-6) continue;
      dir = dir / len;
      // pick the bbox face whose outward normal best matches dir
      int face_axis = std::abs(dir.x) >= std::abs(dir.y) ? 0 : 1;
      bool positive = dir[face_axis] > 0;
      auto stats =
          probe_direction(renderer, subject, dir, face_grid(box, face_axis, positive), probe_budget);
      for (const auto& [target, st] : stats) {
        if (target != 0) continue;  // only walls accept attachments
        if (st.hits * 4 < kProbeGrid * kProbeGrid) continue;
        bool opposed = st.opposed * 2 >= st.hits;
        Relation rel{RelationKind::WallAttach, subject, 0, dir};
        attach.push_back({rel, st.median(), opposed});
      }
    }

    // gate and rule filters
    auto emit_best = [&](std::vector<Candidate>& cands, auto pred, bool forced) {
      const Candidate* best = nullptr;
      for (const Candidate& c : cands) {
        if (!pred(c)) continue;
        if (!forced && c.median >= candidate_dist) continue;
        if (!best || c.median < best->median) best = &c;
      }
      if (best) out.push_back(best->rel);
      return best != nullptr;
    };

    // supports: at most one (the nearest surface below)
    bool has_floor = false;
    {
      auto pred = [&](const Candidate& c) {
        if (c.rel.kind == RelationKind::FloorSupport && rule.forbid_floor) return false;
        return true;
      };
      const Candidate* best = nullptr;
      for (const Candidate& c : support)
        if (pred(c) && c.median < candidate_dist && (!best || c.median < best->median)) best = &c;
      if (!best && rule.must_attach_floor) {
        for (const Candidate& c : support)
          if (c.rel.kind == RelationKind::FloorSupport && (!best || c.median < best->median))
            best = &c;
      }
      if (best) {
        out.push_back(best->rel);
        has_floor = best->rel.kind == RelationKind::FloorSupport;
      }
    }
    (void)has_floor;

    // wall attachment: nearest opposed wall within the gate, forced for
    // must_attach_wall categories whenever any geometric candidate exists
    if (!rule.forbid_wall) {
      bool attached = emit_best(attach, [](const Candidate& c) { return c.opposed; }, false);
      if (!attached && rule.must_attach_wall)
        emit_best(attach, [](const Candidate& c) { return c.opposed; }, true);
    }
  }

  // drop reversed duplicates of object-support pairs
  std::vector<Relation> filtered;
  for (const Relation& r : out) {
    bool reversed = false;
    for (const Relation& f : filtered)
      if (f.kind == RelationKind::ObjectSupport && r.kind == RelationKind::ObjectSupport &&
          f.subject == r.target && f.target == r.subject)
        reversed = true;
    if (!reversed) filtered.push_back(r);
  }
  return filtered;
}

std::vector<std::vector<int>> nearest_neighbors(const Scene& scene, int k) {
  const int n = static_cast<int>(scene.objects.size());
  std::vector<Vec3> centers(n);
  for (int i = 0; i < n; ++i) {
    const ObjectInstance& o = scene.objects[i];
    centers[i] = o.pose.rotation().mul(o.local_bbox.center()) + o.pose.p;
  }
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> by_dist;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      by_dist.emplace_back(norm(centers[j] - centers[i]), j + 1);
    }
    std::sort(by_dist.begin(), by_dist.end());
    out[i].push_back(0);  // background always included
    for (int m = 0; m < std::min<int>(k, by_dist.size()); ++m)
      out[i].push_back(by_dist[m].second);
  }
  return out;
}

std::string relations_to_json(const std::vector<Relation>& rels) {
  json j = json::array();
  for (const Relation& r : rels) {
    j.push_back(json{{"kind", relation_kind_name(r.kind)},
                     {"subject", r.subject},
                     {"target", r.target},
                     {"direction", json::array({r.direction.x, r.direction.y, r.direction.z})}});
  }
  return j.dump(2);
}

}  // namespace nrroom
