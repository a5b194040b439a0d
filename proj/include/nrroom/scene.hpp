#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "nrroom/ad.hpp"
#include "nrroom/errors.hpp"
#include "nrroom/fields.hpp"
#include "nrroom/lighting.hpp"
#include "nrroom/vec.hpp"

namespace nrroom {

// Continuous 6D rotation parameterization: the two embedded 3-vectors are
// Gram-Schmidt-orthonormalized into the first two columns, the third column
// is their cross product.
template <class T>
M3<T> rot6d_to_matrix(const std::array<T, 6>& r6) {
  using std::sqrt;
  using ad::sqrt;
  V3<T> a{r6[0], r6[1], r6[2]};
  V3<T> c{r6[3], r6[4], r6[5]};
  double a2 = value_of(dot(a, a));
  if (a2 < 1e-24) throw DegenerateRotation();
  V3<T> b1 = a / sqrt(dot(a, a));
  V3<T> proj = c - dot(b1, c) * b1;
  double p2 = value_of(dot(proj, proj));
  if (p2 < 1e-24) throw DegenerateRotation();
  V3<T> b2 = proj / sqrt(dot(proj, proj));
  V3<T> b3 = cross(b1, b2);
  return {b1, b2, b3};
}

std::array<double, 6> matrix_to_rot6d(const Mat3& r);
Mat3 yaw_matrix(double angle_rad);
double geodesic_angle_deg(const Mat3& a, const Mat3& b);

// Object center position plus 6D rotation.
struct PoseParam {
  std::array<double, 6> r6{1, 0, 0, 0, 1, 0};
  Vec3 p{0, 0, 0};

  Mat3 rotation() const { return rot6d_to_matrix<double>(r6); }
};

struct ObjectInstance {
  int id = 0;
  std::string category;
  std::string field_path;  // as referenced by the scene file (may be empty)
  Field field;
  PoseParam pose;
  ToneAdjust tone;

  // Cached geometry (derived from the field at load time).
  Aabb local_bbox;        // padded, from extract_bbox
  Aabb local_bbox_tight;  // unpadded, used by relation probing
};

struct Camera {
  enum class Model { Equirect, Pinhole };
  Vec3 position{0, 0, 0};
  std::array<double, 6> r6{1, 0, 0, 0, 1, 0};
  Model model = Model::Equirect;
  double fov_deg = 90.0;  // horizontal, pinhole only

  Mat3 rotation() const { return rot6d_to_matrix<double>(r6); }
};

// A posed set of fields: background shell, movable objects, diffuse SH
// lighting and the capture camera. Field index 0 is the background, object
// k (0-based) is field index k+1.
struct Scene {
  Field background;
  std::string background_path;
  ToneAdjust background_tone;
  std::vector<ObjectInstance> objects;
  ShIrradiance lighting = ShIrradiance::uniform(1.0);
  Camera camera;
  Vec3 gravity{0, 0, 1};

  int num_fields() const { return static_cast<int>(objects.size()) + 1; }
  const ObjectInstance* find_object(int id) const;
  ObjectInstance* find_object(int id);

  // Compositional editing.
  void insert_object(ObjectInstance obj);
  void remove_object(int id);
  void move_object(int id, const PoseParam& pose);
};

void finalize_object_geometry(ObjectInstance& obj);

// Scene JSON (paths resolved relative to the scene file's directory).
Scene load_scene(const std::string& path);
void save_scene(const std::string& path, const Scene& scene);

// Pose files: JSON array of {id, r6:[6], p:[3]}.
struct PoseEntry {
  int id;
  PoseParam pose;
};
std::vector<PoseEntry> load_poses(const std::string& path);
void save_poses(const std::string& path, const std::vector<PoseEntry>& poses);
void apply_poses(Scene& scene, const std::vector<PoseEntry>& poses);
std::vector<PoseEntry> scene_poses(const Scene& scene);

// Flat parameter indexing for the optimizer and the gradient contract.
// Per object: [r6 x6][p x3][tone.t x3][tone.s x3], then background tone
// [t x3][s x3], then 27 SH coefficients.
struct ParamLayout {
  int num_objects = 0;

  enum class BlockKind { Rotation, Position, Tone, Lighting };

  int total() const { return num_objects * 15 + 6 + 27; }
  int obj_r6(int k) const { return 15 * k; }
  int obj_p(int k) const { return 15 * k + 6; }
  int obj_tone(int k) const { return 15 * k + 9; }
  int background_tone() const { return 15 * num_objects; }
  int sh() const { return 15 * num_objects + 6; }

  BlockKind kind_of(int index) const {
    if (index >= sh()) return BlockKind::Lighting;
    if (index >= background_tone()) return BlockKind::Tone;
    int r = index % 15;
    if (r < 6) return BlockKind::Rotation;
    if (r < 9) return BlockKind::Position;
    return BlockKind::Tone;
  }
};

std::vector<double> pack_params(const Scene& scene);
void apply_params(Scene& scene, const std::vector<double>& params);

}  // namespace nrroom
