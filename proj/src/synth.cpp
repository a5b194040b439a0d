#include "nrroom/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

namespace nrroom {

namespace fs = std::filesystem;
using nlohmann::json;

SynthSpec SynthSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open synth spec " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("synth spec parse error: " + std::string(e.what()));
  }
  SynthSpec s;
  s.objects = j.value("objects", s.objects);
  if (j.contains("room")) {
    const auto& r = j["room"];
    s.room_dims = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  }
  if (j.contains("resolution")) {
    s.width = j["resolution"].at(0).get<int>();
    s.height = j["resolution"].at(1).get<int>();
  }
  s.rot_noise_deg = j.value("rot_noise_deg", s.rot_noise_deg);
  s.trans_noise_m = j.value("trans_noise_m", s.trans_noise_m);
  s.penetrate_init = j.value("penetrate_init", s.penetrate_init);
  s.room_grid = j.value("room_grid", s.room_grid);
  s.object_grid = j.value("object_grid", s.object_grid);
  if (s.objects < 0 || s.width != 2 * s.height || s.height < 2)
    throw ValidationError("synth spec: need objects >= 0 and width == 2 * height");
  return s;
}

namespace {

constexpr double kWall = 0.3;  // wall slab thickness baked beyond the shell

GridField bake_room(const SynthSpec& spec) {
  Vec3 half = spec.room_dims * 0.5;
  Vec3 center{0, 0, half.z};
  AnalyticField shell = AnalyticField::room_shell(center, half);
  Aabb bbox{center - half - Vec3{kWall, kWall, kWall}, center + half + Vec3{kWall, kWall, kWall}};
  Vec3 ext = bbox.extent();
  // smooth linear albedo gradients give the photometric loss wall texture
  auto albedo = [&](const Vec3& p) {
    double sx = (p.x - bbox.min.x) / ext.x;
    double sy = (p.y - bbox.min.y) / ext.y;
    double sz = (p.z - bbox.min.z) / ext.z;
    return Vec3{0.30 + 0.45 * sx, 0.30 + 0.45 * sy, 0.25 + 0.5 * sz};
  };
  int n = spec.room_grid;
  return bake_grid(shell, n, n, n, bbox, albedo);
}

GridField bake_box_object(const Vec3& half, const Vec3& base_color, const Vec3& pattern_dir,
                          int grid) {
  AnalyticField box = AnalyticField::box({0, 0, 0}, half);
  Aabb bbox{-1.0 * half - Vec3{0.1, 0.1, 0.1}, half + Vec3{0.1, 0.1, 0.1}};
  auto albedo = [&](const Vec3& p) {
    double s = 0.55 + 0.45 * std::clamp(dot(p, pattern_dir) / norm(half), -1.0, 1.0);
    return Vec3{base_color.x * s, base_color.y * s, base_color.z * s};
  };
  return bake_grid(box, grid, grid, grid, bbox, albedo);
}

}  // namespace

SynthResult synth_scene(const SynthSpec& spec, uint64_t seed, const RenderConfig& rcfg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  SynthResult out;
  Scene& scene = out.scene;
  scene.background = Field(bake_room(spec));
  scene.background_path = "room.sdfg";

  // mildly directional lighting: brighter from above, never negative
  scene.lighting = ShIrradiance::uniform(1.0);
  scene.lighting.coeffs[3 * 2 + 0] = 0.25;  // Y10 (z) band, all channels
  scene.lighting.coeffs[3 * 2 + 1] = 0.25;
  scene.lighting.coeffs[3 * 2 + 2] = 0.25;

  scene.camera.model = Camera::Model::Equirect;
  scene.camera.position = {0.6 * (uni(rng) - 0.5), 0.6 * (uni(rng) - 0.5), 1.4};

  const Vec3 room_half = spec.room_dims * 0.5;
  const Vec3 palette[6] = {{0.85, 0.30, 0.25}, {0.25, 0.65, 0.85}, {0.35, 0.8, 0.35},
                           {0.85, 0.75, 0.25}, {0.7, 0.35, 0.8},   {0.9, 0.55, 0.3}};

  struct Placed {
    Vec3 pos;
    double radius_xy;
  };
  std::vector<Placed> placed;

  for (int k = 0; k < spec.objects; ++k) {
    // rectangular footprints and horizontal texture gradients keep the yaw
    // observable (square footprints with vertical gradients are genuinely
    // 90-degree ambiguous)
    double hx = 0.14 + 0.1 * uni(rng);
    Vec3 half{hx, hx * (1.5 + 0.6 * uni(rng)), 0.2 + 0.25 * uni(rng)};
    double pat_angle = uni(rng) * 2.0 * M_PI;
    Vec3 pattern = normalized(Vec3{std::cos(pat_angle), std::sin(pat_angle), 0.35});
    Vec3 color = palette[k % 6];

    ObjectInstance obj;
    obj.id = k + 1;
    obj.category = k == 0 ? "cabinet" : "table";
    obj.field_path = "obj_" + std::to_string(obj.id) + ".sdfg";
    obj.field = Field(bake_box_object(half, color, pattern, spec.object_grid));
    finalize_object_geometry(obj);

    double rxy = std::hypot(half.x, half.y);
    double margin = rxy + 0.15;
    bool against_wall = k == 0;
    Vec3 pos;
    double yaw = 0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      if (against_wall) {
        // back face in contact with the -y wall (attached furniture touches;
        // the magnetic equilibrium is contact), small yaw jitter
        yaw = (uni(rng) - 0.5) * (M_PI / 36.0);
        pos = {(uni(rng) - 0.5) * (spec.room_dims.x - 2 * margin) * 0.8,
               -room_half.y + half.y + 0.002, half.z};
      } else {
        yaw = uni(rng) * 2.0 * M_PI;
        pos = {(uni(rng) - 0.5) * (spec.room_dims.x - 2 * margin),
               (uni(rng) - 0.5) * (spec.room_dims.y - 2 * margin), half.z};
      }
      bool ok = std::hypot(pos.x - scene.camera.position.x, pos.y - scene.camera.position.y) >
                rxy + 0.8;
      for (const Placed& p : placed)
        if (std::hypot(pos.x - p.pos.x, pos.y - p.pos.y) < rxy + p.radius_xy + 0.25) ok = false;
      if (ok) break;
      against_wall = false;  // fall back to free placement when crowded
    }
    placed.push_back({pos, rxy});

    obj.pose.p = pos;
    obj.pose.r6 = matrix_to_rot6d(yaw_matrix(yaw));
    scene.objects.push_back(std::move(obj));
  }

  out.gt_poses = scene_poses(scene);

  // initial poses: bounded yaw and translation noise over the ground truth
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& obj = scene.objects[k];
    PoseEntry e;
    e.id = obj.id;
    double dyaw = (2.0 * uni(rng) - 1.0) * spec.rot_noise_deg * M_PI / 180.0;
    e.pose.r6 = matrix_to_rot6d(matmul(yaw_matrix(dyaw), obj.pose.rotation()));
    double mag = spec.trans_noise_m * (0.5 + 0.5 * uni(rng));
    double az = uni(rng) * 2.0 * M_PI;
    double cz = 2.0 * uni(rng) - 1.0;
    double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
    Vec3 dir{sz * std::cos(az), sz * std::sin(az), cz};
    e.pose.p = obj.pose.p + dir * mag;
    if (spec.penetrate_init) {
      // sink the object into the floor: deep enough that the photometric
      // fit alone copes badly, shallow enough that the physical losses free
      // it before the violation term can wind up the rotation
      double height = obj.local_bbox_tight.extent().z;
      e.pose.p.z = obj.pose.p.z - std::min(0.12, 0.4 * height);
      // and shove the wall-attached object into its wall
      if (k == 0) e.pose.p.y = obj.pose.p.y - 0.1;
    } else {
      // keep initial poses inside the room
      e.pose.p.z = std::max(e.pose.p.z, 0.05);
    }
    out.init_poses.push_back(e);
  }

  out.panorama = render_image(scene, spec.width, spec.height, rcfg, RenderMode::Full).color;
  return out;
}

void write_synth(const std::string& out_dir, const SynthResult& result) {
  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  write_sdfg((dir / result.scene.background_path).string(), *result.scene.background.grid());
  for (const auto& o : result.scene.objects)
    write_sdfg((dir / o.field_path).string(), *o.field.grid());
  save_scene((dir / "scene.json").string(), result.scene);
  save_poses((dir / "gt_poses.json").string(), result.gt_poses);
  save_poses((dir / "init_poses.json").string(), result.init_poses);
  write_imgf((dir / "pano.imgf").string(), result.panorama);
  write_png((dir / "pano.png").string(), result.panorama);
}

}  // namespace nrroom
