#include "nrroom/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace nrroom {

namespace fs = std::filesystem;
using nlohmann::json;

std::array<double, 6> matrix_to_rot6d(const Mat3& r) {
  return {r.c0.x, r.c0.y, r.c0.z, r.c1.x, r.c1.y, r.c1.z};
}

Mat3 yaw_matrix(double a) {
  double c = std::cos(a), s = std::sin(a);
  return {{c, s, 0}, {-s, c, 0}, {0, 0, 1}};
}

double geodesic_angle_deg(const Mat3& a, const Mat3& b) {
  Mat3 d = matmul(transpose(a), b);
  double tr = d.c0.x + d.c1.y + d.c2.z;
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

const ObjectInstance* Scene::find_object(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

ObjectInstance* Scene::find_object(int id) {
  for (auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

void Scene::insert_object(ObjectInstance obj) {
  if (find_object(obj.id)) throw ValidationError("duplicate object id");
  objects.push_back(std::move(obj));
}

void Scene::remove_object(int id) {
  auto it = std::find_if(objects.begin(), objects.end(),
                         [&](const ObjectInstance& o) { return o.id == id; });
  if (it == objects.end()) throw ValidationError("no object with requested id");
  objects.erase(it);
}

void Scene::move_object(int id, const PoseParam& pose) {
  ObjectInstance* o = find_object(id);
  if (!o) throw ValidationError("no object with requested id");
  rot6d_to_matrix<double>(pose.r6);  // validates
  o->pose = pose;
}

void finalize_object_geometry(ObjectInstance& obj) {
  if (const GridField* g = obj.field.grid()) {
    obj.local_bbox = extract_bbox(*g);
    obj.local_bbox_tight = extract_bbox_tight(*g);
  } else {
    obj.local_bbox = obj.field.domain();
    obj.local_bbox_tight = obj.local_bbox;
  }
}

namespace {

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

std::array<double, 6> r6_from(const json& j) {
  if (!j.is_array() || j.size() != 6) throw ValidationError("expected 6-element array");
  std::array<double, 6> r;
  for (int i = 0; i < 6; ++i) r[i] = j[i].get<double>();
  return r;
}

json r6_to(const std::array<double, 6>& r) {
  return json::array({r[0], r[1], r[2], r[3], r[4], r[5]});
}

PoseParam pose_from(const json& j) {
  PoseParam p;
  p.r6 = r6_from(j.at("r6"));
  p.p = vec3_from(j.at("p"));
  rot6d_to_matrix<double>(p.r6);  // validates
  return p;
}

json pose_to(const PoseParam& p) { return json{{"r6", r6_to(p.r6)}, {"p", vec3_to(p.p)}}; }

ToneAdjust tone_from(const json& j) {
  ToneAdjust t;
  t.t = vec3_from(j.at("t"));
  t.s = vec3_from(j.at("s"));
  if (t.s.x <= 1e-3 || t.s.y <= 1e-3 || t.s.z <= 1e-3)
    throw ValidationError("tone scale must be > 1e-3");
  return t;
}

json tone_to(const ToneAdjust& t) { return json{{"t", vec3_to(t.t)}, {"s", vec3_to(t.s)}}; }

std::array<double, 6> r6_from_quat(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("quaternion must be [w,x,y,z]");
  double w = j[0], x = j[1], y = j[2], z = j[3];
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < 1e-12) throw ValidationError("zero quaternion");
  w /= n; x /= n; y /= n; z /= n;
  Mat3 r;
  r.c0 = {1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)};
  r.c1 = {2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)};
  r.c2 = {2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)};
  return matrix_to_rot6d(r);
}

}  // namespace

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("scene parse error: " + std::string(e.what()));
  }
  fs::path dir = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (dir / fp).string();
  };

  Scene scene;
  try {
    scene.background_path = j.at("background").get<std::string>();
    scene.background = Field(read_sdfg(resolve(scene.background_path)));
    if (j.contains("background_tone")) scene.background_tone = tone_from(j["background_tone"]);

    std::set<int> ids;
    for (const auto& jo : j.at("objects")) {
      ObjectInstance obj;
      obj.id = jo.at("id").get<int>();
      if (!ids.insert(obj.id).second) throw ValidationError("duplicate object id in scene");
      obj.category = jo.value("category", std::string());
      obj.field_path = jo.at("field").get<std::string>();
      obj.field = Field(read_sdfg(resolve(obj.field_path)));
      obj.pose = pose_from(jo.at("pose"));
      if (jo.contains("tone")) obj.tone = tone_from(jo["tone"]);
      finalize_object_geometry(obj);
      scene.objects.push_back(std::move(obj));
    }

    if (j.contains("lighting")) {
      const auto& jl = j["lighting"];
      if (!jl.is_array() || jl.size() != 27)
        throw ValidationError("lighting must be a 27-element array");
      for (int i = 0; i < 27; ++i) scene.lighting.coeffs[i] = jl[i].get<double>();
    }

    const auto& jc = j.at("camera");
    scene.camera.position = vec3_from(jc.at("position"));
    if (jc.contains("r6"))
      scene.camera.r6 = r6_from(jc["r6"]);
    else if (jc.contains("quat"))
      scene.camera.r6 = r6_from_quat(jc["quat"]);
    rot6d_to_matrix<double>(scene.camera.r6);  // validates
    std::string model = jc.value("model", std::string("equirect"));
    if (model == "equirect") {
      scene.camera.model = Camera::Model::Equirect;
    } else if (model == "pinhole") {
      scene.camera.model = Camera::Model::Pinhole;
      scene.camera.fov_deg = jc.value("fov", 90.0);
      if (scene.camera.fov_deg <= 0 || scene.camera.fov_deg >= 180)
        throw ValidationError("pinhole fov out of range");
    } else {
      throw ValidationError("unknown camera model: " + model);
    }

    if (j.contains("gravity")) scene.gravity = normalized(vec3_from(j["gravity"]));
  } catch (const json::exception& e) {
    throw ValidationError("scene schema error: " + std::string(e.what()));
  }
  return scene;
}

void save_scene(const std::string& path, const Scene& scene) {
  json j;
  j["background"] = scene.background_path;
  j["background_tone"] = tone_to(scene.background_tone);
  j["objects"] = json::array();
  for (const auto& o : scene.objects) {
    j["objects"].push_back(json{{"id", o.id},
                                {"category", o.category},
                                {"field", o.field_path},
                                {"pose", pose_to(o.pose)},
                                {"tone", tone_to(o.tone)}});
  }
  j["lighting"] = scene.lighting.coeffs;
  json jc;
  jc["position"] = vec3_to(scene.camera.position);
  jc["r6"] = r6_to(scene.camera.r6);
  jc["model"] = scene.camera.model == Camera::Model::Equirect ? "equirect" : "pinhole";
  if (scene.camera.model == Camera::Model::Pinhole) jc["fov"] = scene.camera.fov_deg;
  j["camera"] = jc;
  j["gravity"] = vec3_to(scene.gravity);

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<PoseEntry> load_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pose file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("pose parse error: " + std::string(e.what()));
  }
  if (!j.is_array()) throw ValidationError("pose file must be a JSON array");
  std::vector<PoseEntry> out;
  for (const auto& je : j) {
    PoseEntry e;
    e.id = je.at("id").get<int>();
    e.pose = pose_from(je);
    out.push_back(e);
  }
  return out;
}

void save_poses(const std::string& path, const std::vector<PoseEntry>& poses) {
  json j = json::array();
  for (const auto& e : poses) {
    json je = pose_to(e.pose);
    je["id"] = e.id;
    j.push_back(je);
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

void apply_poses(Scene& scene, const std::vector<PoseEntry>& poses) {
  for (const auto& e : poses) {
    ObjectInstance* o = scene.find_object(e.id);
    if (!o) throw ValidationError("pose file references unknown object id");
    o->pose = e.pose;
  }
}

std::vector<PoseEntry> scene_poses(const Scene& scene) {
  std::vector<PoseEntry> out;
  out.reserve(scene.objects.size());
  for (const auto& o : scene.objects) out.push_back({o.id, o.pose});
  return out;
}

std::vector<double> pack_params(const Scene& scene) {
  ParamLayout layout{static_cast<int>(scene.objects.size())};
  std::vector<double> p(layout.total());
  for (int k = 0; k < layout.num_objects; ++k) {
    const ObjectInstance& o = scene.objects[k];
    for (int i = 0; i < 6; ++i) p[layout.obj_r6(k) + i] = o.pose.r6[i];
    p[layout.obj_p(k) + 0] = o.pose.p.x;
    p[layout.obj_p(k) + 1] = o.pose.p.y;
    p[layout.obj_p(k) + 2] = o.pose.p.z;
    int t = layout.obj_tone(k);
    p[t + 0] = o.tone.t.x; p[t + 1] = o.tone.t.y; p[t + 2] = o.tone.t.z;
    p[t + 3] = o.tone.s.x; p[t + 4] = o.tone.s.y; p[t + 5] = o.tone.s.z;
  }
  int bt = layout.background_tone();
  p[bt + 0] = scene.background_tone.t.x;
  p[bt + 1] = scene.background_tone.t.y;
  p[bt + 2] = scene.background_tone.t.z;
  p[bt + 3] = scene.background_tone.s.x;
  p[bt + 4] = scene.background_tone.s.y;
  p[bt + 5] = scene.background_tone.s.z;
  for (int i = 0; i < 27; ++i) p[layout.sh() + i] = scene.lighting.coeffs[i];
  return p;
}

void apply_params(Scene& scene, const std::vector<double>& p) {
  ParamLayout layout{static_cast<int>(scene.objects.size())};
  if (static_cast<int>(p.size()) != layout.total())
    throw ValidationError("parameter vector size mismatch");
  for (int k = 0; k < layout.num_objects; ++k) {
    ObjectInstance& o = scene.objects[k];
    for (int i = 0; i < 6; ++i) o.pose.r6[i] = p[layout.obj_r6(k) + i];
    o.pose.p = {p[layout.obj_p(k)], p[layout.obj_p(k) + 1], p[layout.obj_p(k) + 2]};
    int t = layout.obj_tone(k);
    o.tone.t = {p[t + 0], p[t + 1], p[t + 2]};
    o.tone.s = {p[t + 3], p[t + 4], p[t + 5]};
  }
  int bt = layout.background_tone();
  scene.background_tone.t = {p[bt + 0], p[bt + 1], p[bt + 2]};
  scene.background_tone.s = {p[bt + 3], p[bt + 4], p[bt + 5]};
  for (int i = 0; i < 27; ++i) scene.lighting.coeffs[i] = p[layout.sh() + i];
}

}  // namespace nrroom
