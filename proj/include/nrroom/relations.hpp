#pragma once

#include <map>
#include <string>
#include <vector>

#include "nrroom/render.hpp"
#include "nrroom/scene.hpp"

namespace nrroom {

enum class RelationKind { FloorSupport, WallAttach, ObjectSupport };

const char* relation_kind_name(RelationKind k);

// A generated physical constraint: the subject's relation surface is probed
// along `direction` toward the target. Field indices: 0 = background.
struct Relation {
  RelationKind kind = RelationKind::FloorSupport;
  int subject = 0;
  int target = 0;
  Vec3 direction{0, 0, -1};
};

struct CategoryRule {
  bool must_attach_wall = false;
  bool must_attach_floor = false;
  bool forbid_floor = false;
  bool forbid_wall = false;     // free-standing furniture never wall-attaches
  bool gravity_aligned = true;  // rotation restricted to yaw
};

struct RuleTable {
  std::map<std::string, CategoryRule> rules;
  CategoryRule fallback;  // applied to unknown categories

  CategoryRule lookup(const std::string& category) const {
    auto it = rules.find(category);
    return it != rules.end() ? it->second : fallback;
  }

  static RuleTable defaults();
  static RuleTable load(const std::string& path);
  void save(const std::string& path) const;
};

// Generates floor-support / wall-attach / object-support relations by
// probing 8x8 ray grids downward and along the four horizontal outward
// normals of each posed bbox, gated at a 0.5 m median hit distance and a
// 30-degree normal-opposition cone, then filtered by the rule table.
std::vector<Relation> generate_relations(const Scene& scene, const RuleTable& rules,
                                         const RenderConfig& cfg, double candidate_dist = 0.5);

// Per-object neighbor field indices for the violation loss: background (0)
// first, then up to k nearest objects by posed bbox-center distance, ties
// broken by index.
std::vector<std::vector<int>> nearest_neighbors(const Scene& scene, int k);

std::string relations_to_json(const std::vector<Relation>& rels);

}  // namespace nrroom
