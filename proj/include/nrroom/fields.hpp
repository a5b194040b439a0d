#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nrroom/ad.hpp"
#include "nrroom/errors.hpp"
#include "nrroom/vec.hpp"

namespace nrroom {

// Dense voxel SDF with optional per-node RGB albedo. Node (0,0,0) sits at
// bbox.min and node (nx-1,ny-1,nz-1) at bbox.max; storage is x-fastest.
// Immutable after construction; evaluation is side-effect free.
struct GridField {
  int nx = 0, ny = 0, nz = 0;
  Aabb bbox;
  std::vector<float> sdf;     // nx*ny*nz
  std::vector<float> albedo;  // 3*nx*ny*nz interleaved rgb, or empty

  // Derived: one-voxel-padded box around the negative region, used to keep
  // outside-the-domain queries a lower bound on the surface distance.
  // Filled by finalize(); bake_grid and read_sdfg call it.
  bool has_negative = false;
  Aabb neg_bbox;
  void finalize();

  bool has_albedo() const { return !albedo.empty(); }
  std::size_t node_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny + j) * nx + i;
  }
  Vec3 spacing() const {
    Vec3 e = bbox.extent();
    return {e.x / (nx - 1), e.y / (ny - 1), e.z / (nz - 1)};
  }
  Vec3 node_pos(int i, int j, int k) const {
    Vec3 s = spacing();
    return {bbox.min.x + i * s.x, bbox.min.y + j * s.y, bbox.min.z + k * s.z};
  }
  double voxel_diagonal() const { return norm(spacing()); }
};

// Analytic primitives used as exact oracles and as bake sources.
// room_shell flips the sign of a box SDF: the inside of the box is free
// space (positive) and the box faces are the walls.
struct AnalyticField {
  enum class Kind { Sphere, Box, RoomShell };
  Kind kind = Kind::Sphere;
  Vec3 center{0, 0, 0};
  double radius = 1.0;          // sphere
  Vec3 half_extents{1, 1, 1};   // box / room_shell

  static AnalyticField sphere(Vec3 c, double r) { return {Kind::Sphere, c, r, {}}; }
  static AnalyticField box(Vec3 c, Vec3 h) { return {Kind::Box, c, 0, h}; }
  static AnalyticField room_shell(Vec3 c, Vec3 h) { return {Kind::RoomShell, c, 0, h}; }
};

class Field {
 public:
  Field() = default;
  explicit Field(GridField g) : impl_(std::make_shared<Storage>(Storage{std::move(g)})) {}
  explicit Field(AnalyticField a) : impl_(std::make_shared<Storage>(Storage{std::move(a)})) {}

  bool valid() const { return impl_ != nullptr; }
  const GridField* grid() const {
    return impl_ ? std::get_if<GridField>(&impl_->v) : nullptr;
  }
  const AnalyticField* analytic() const {
    return impl_ ? std::get_if<AnalyticField>(&impl_->v) : nullptr;
  }
  bool has_albedo() const {
    const GridField* g = grid();
    return g && g->has_albedo();
  }
  // Sampling domain: the grid bbox, or a bounding box of the primitive.
  Aabb domain() const;

 private:
  struct Storage {
    std::variant<GridField, AnalyticField> v;
  };
  std::shared_ptr<const Storage> impl_;
};

namespace detail {

// Cell lookup shared between sdf, albedo and gradient evaluation. The cell
// index and the inside/outside decision are taken from scalar values; the
// fractional coordinates stay differentiable.
template <class T>
struct GridCell {
  int i, j, k;        // base node of the cell
  V3<T> f;            // fractional coords in [0,1]
  bool outside;       // query point left the bbox (f computed at the clamp)
  T out_dist;         // Euclidean distance from the point to the bbox
};

template <class T>
GridCell<T> locate_cell(const GridField& g, const V3<T>& p) {
  GridCell<T> c;
  Vec3 s = g.spacing();
  double px = value_of(p.x), py = value_of(p.y), pz = value_of(p.z);
  c.outside = !(px >= g.bbox.min.x && px <= g.bbox.max.x && py >= g.bbox.min.y &&
                py <= g.bbox.max.y && pz >= g.bbox.min.z && pz <= g.bbox.max.z);

  V3<T> q = p;
  if (c.outside) {
    // Clamp to the boundary and keep the overshoot as a distance term.
    using std::max;
    using std::min;
    using ad::max;
    using ad::min;
    T qx = min(max(p.x, T(g.bbox.min.x)), T(g.bbox.max.x));
    T qy = min(max(p.y, T(g.bbox.min.y)), T(g.bbox.max.y));
    T qz = min(max(p.z, T(g.bbox.min.z)), T(g.bbox.max.z));
    T dx = p.x - qx, dy = p.y - qy, dz = p.z - qz;
    using std::sqrt;
    using ad::sqrt;
    c.out_dist = sqrt(dx * dx + dy * dy + dz * dz);
    q = {qx, qy, qz};
  } else {
    c.out_dist = T(0);
  }

  auto axis = [](T qa, double lo, double inv_s, int n, int& idx) -> T {
    double u = (value_of(qa) - lo) * inv_s;
    idx = static_cast<int>(std::floor(u));
    if (idx < 0) idx = 0;
    if (idx > n - 2) idx = n - 2;
    // fraction relative to the fixed node keeps the dependence on qa linear
    return (qa - T(lo + idx / inv_s)) * inv_s;
  };
  c.f.x = axis(q.x, g.bbox.min.x, 1.0 / s.x, g.nx, c.i);
  c.f.y = axis(q.y, g.bbox.min.y, 1.0 / s.y, g.ny, c.j);
  c.f.z = axis(q.z, g.bbox.min.z, 1.0 / s.z, g.nz, c.k);
  return c;
}

template <class T>
T interp_channel(const GridField& g, const std::vector<float>& data, int stride,
                 int channel, const GridCell<T>& c) {
  std::size_t base = g.node_index(c.i, c.j, c.k) * stride + channel;
  std::size_t dy = static_cast<std::size_t>(g.nx) * stride;
  std::size_t dz = static_cast<std::size_t>(g.nx) * g.ny * stride;
  const float* d = data.data() + base;
  double v000 = d[0], v100 = d[stride];
  double v010 = d[dy], v110 = d[dy + stride];
  double v001 = d[dz], v101 = d[dz + stride];
  double v011 = d[dz + dy], v111 = d[dz + dy + stride];

  T a = lerp_const(v000, v100, c.f.x);
  T b = lerp_const(v010, v110, c.f.x);
  T e = lerp_const(v001, v101, c.f.x);
  T h = lerp_const(v011, v111, c.f.x);
  T ab = a + c.f.y * (b - a);
  T eh = e + c.f.y * (h - e);
  return ab + c.f.z * (eh - ab);
}

// Gradient of the trilinear interpolant. Piecewise multilinear and
// discontinuous across cell faces; consistent with interp_channel by
// construction.
template <class T>
V3<T> interp_gradient(const GridField& g, const GridCell<T>& c) {
  std::size_t base = g.node_index(c.i, c.j, c.k);
  std::size_t dy = g.nx;
  std::size_t dz = static_cast<std::size_t>(g.nx) * g.ny;
  const float* d = g.sdf.data() + base;
  double v000 = d[0], v100 = d[1];
  double v010 = d[dy], v110 = d[dy + 1];
  double v001 = d[dz], v101 = d[dz + 1];
  double v011 = d[dz + dy], v111 = d[dz + dy + 1];
  Vec3 s = g.spacing();

  // d/dx: bilinear in (fy, fz) of the x-differences.
  T gx0 = lerp_const(v100 - v000, v110 - v010, c.f.y);
  T gx1 = lerp_const(v101 - v001, v111 - v011, c.f.y);
  T gx = (gx0 + c.f.z * (gx1 - gx0)) * T(1.0 / s.x);

  T gy0 = lerp_const(v010 - v000, v110 - v100, c.f.x);
  T gy1 = lerp_const(v011 - v001, v111 - v101, c.f.x);
  T gy = (gy0 + c.f.z * (gy1 - gy0)) * T(1.0 / s.y);

  T gz0 = lerp_const(v001 - v000, v101 - v100, c.f.x);
  T gz1 = lerp_const(v011 - v010, v111 - v110, c.f.x);
  T gz = (gz0 + c.f.y * (gz1 - gz0)) * T(1.0 / s.z);
  return {gx, gy, gz};
}

}  // namespace detail

// --- Analytic SDF / gradient ---

template <class T>
T sdf_eval(const AnalyticField& a, const V3<T>& p) {
  using std::max;
  using std::min;
  using std::sqrt;
  using ad::max;
  using ad::min;
  using ad::sqrt;
  V3<T> q = p - V3<T>{T(a.center.x), T(a.center.y), T(a.center.z)};
  switch (a.kind) {
    case AnalyticField::Kind::Sphere:
      return sqrt(dot(q, q)) - T(a.radius);
    case AnalyticField::Kind::Box:
    case AnalyticField::Kind::RoomShell: {
      using ad::abs;
      using std::abs;
      T qx = abs(q.x) - T(a.half_extents.x);
      T qy = abs(q.y) - T(a.half_extents.y);
      T qz = abs(q.z) - T(a.half_extents.z);
      T inner = min(max(qx, max(qy, qz)), T(0));
      T d;
      if (value_of(qx) <= 0 && value_of(qy) <= 0 && value_of(qz) <= 0) {
        d = inner;  // fully inside: avoid sqrt(0)
      } else {
        T ox = max(qx, T(0)), oy = max(qy, T(0)), oz = max(qz, T(0));
        d = sqrt(ox * ox + oy * oy + oz * oz) + inner;
      }
      return a.kind == AnalyticField::Kind::Box ? d : -d;
    }
  }
  return T(0);
}

template <class T>
V3<T> sdf_grad(const AnalyticField& a, const V3<T>& p) {
  using std::max;
  using std::sqrt;
  using ad::max;
  using ad::sqrt;
  V3<T> q = p - V3<T>{T(a.center.x), T(a.center.y), T(a.center.z)};
  switch (a.kind) {
    case AnalyticField::Kind::Sphere: {
      T len = sqrt(dot(q, q));
      if (value_of(len) < 1e-300) return {T(0), T(0), T(0)};
      return q / len;
    }
    case AnalyticField::Kind::Box:
    case AnalyticField::Kind::RoomShell: {
      using ad::abs;
      using std::abs;
      T ax = abs(q.x) - T(a.half_extents.x);
      T ay = abs(q.y) - T(a.half_extents.y);
      T az = abs(q.z) - T(a.half_extents.z);
      V3<T> grad;
      if (value_of(ax) <= 0 && value_of(ay) <= 0 && value_of(az) <= 0) {
        // inside: normal of the nearest face
        double vx = value_of(ax), vy = value_of(ay), vz = value_of(az);
        if (vx >= vy && vx >= vz)
          grad = {T(value_of(q.x) >= 0 ? 1.0 : -1.0), T(0), T(0)};
        else if (vy >= vz)
          grad = {T(0), T(value_of(q.y) >= 0 ? 1.0 : -1.0), T(0)};
        else
          grad = {T(0), T(0), T(value_of(q.z) >= 0 ? 1.0 : -1.0)};
      } else {
        T ox = max(ax, T(0)), oy = max(ay, T(0)), oz = max(az, T(0));
        T len = sqrt(ox * ox + oy * oy + oz * oz);
        T sx = T(value_of(q.x) >= 0 ? 1.0 : -1.0);
        T sy = T(value_of(q.y) >= 0 ? 1.0 : -1.0);
        T sz = T(value_of(q.z) >= 0 ? 1.0 : -1.0);
        grad = {sx * ox / len, sy * oy / len, sz * oz / len};
      }
      if (a.kind == AnalyticField::Kind::RoomShell) return -grad;
      return grad;
    }
  }
  return {T(0), T(0), T(0)};
}

// --- Grid SDF / albedo / gradient ---

namespace detail {

template <class T>
T aabb_distance(const Aabb& box, const V3<T>& p) {
  using std::max;
  using std::min;
  using std::sqrt;
  using ad::max;
  using ad::min;
  using ad::sqrt;
  T qx = min(max(p.x, T(box.min.x)), T(box.max.x));
  T qy = min(max(p.y, T(box.min.y)), T(box.max.y));
  T qz = min(max(p.z, T(box.min.z)), T(box.max.z));
  T dx = p.x - qx, dy = p.y - qy, dz = p.z - qz;
  return sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace detail

// Outside the bbox the result is the boundary-clamped sample plus the
// Euclidean distance to the bbox, capped by the distance to the padded
// negative-voxel box. The cap is a true lower bound on the distance to any
// surface crossing, which keeps sphere tracing conservative (the uncapped
// sum can overshoot diagonally off a bbox corner).
template <class T>
T sdf_eval(const GridField& g, const V3<T>& p) {
  auto c = detail::locate_cell(g, p);
  T v = detail::interp_channel(g, g.sdf, 1, 0, c);
  if (c.outside) {
    v = v + c.out_dist;
    if (g.has_negative) {
      using std::min;
      using ad::min;
      v = min(v, detail::aabb_distance(g.neg_bbox, p));
    }
  }
  return v;
}

template <class T>
V3<T> sdf_grad(const GridField& g, const V3<T>& p) {
  auto c = detail::locate_cell(g, p);
  if (c.outside && value_of(c.out_dist) > 0) {
    using ad::max;
    using ad::min;
    using std::max;
    using std::min;
    // match the branch sdf_eval takes
    double sum = value_of(detail::interp_channel(g, g.sdf, 1, 0, c)) + value_of(c.out_dist);
    if (g.has_negative && value_of(detail::aabb_distance(g.neg_bbox, p)) < sum) {
      T qx = min(max(p.x, T(g.neg_bbox.min.x)), T(g.neg_bbox.max.x));
      T qy = min(max(p.y, T(g.neg_bbox.min.y)), T(g.neg_bbox.max.y));
      T qz = min(max(p.z, T(g.neg_bbox.min.z)), T(g.neg_bbox.max.z));
      V3<T> d{p.x - qx, p.y - qy, p.z - qz};
      return d / detail::aabb_distance(g.neg_bbox, p);
    }
    V3<T> grad = detail::interp_gradient(g, c);
    T qx = min(max(p.x, T(g.bbox.min.x)), T(g.bbox.max.x));
    T qy = min(max(p.y, T(g.bbox.min.y)), T(g.bbox.max.y));
    T qz = min(max(p.z, T(g.bbox.min.z)), T(g.bbox.max.z));
    V3<T> d{p.x - qx, p.y - qy, p.z - qz};
    return grad + d / c.out_dist;
  }
  return detail::interp_gradient(g, c);
}

template <class T>
V3<T> albedo_eval(const GridField& g, const V3<T>& p) {
  if (!g.has_albedo()) throw NoAlbedo();
  using std::max;
  using std::min;
  using ad::max;
  using ad::min;
  auto c = detail::locate_cell(g, p);
  V3<T> rgb{detail::interp_channel(g, g.albedo, 3, 0, c),
            detail::interp_channel(g, g.albedo, 3, 1, c),
            detail::interp_channel(g, g.albedo, 3, 2, c)};
  rgb.x = min(max(rgb.x, T(0)), T(1));
  rgb.y = min(max(rgb.y, T(0)), T(1));
  rgb.z = min(max(rgb.z, T(0)), T(1));
  return rgb;
}

template <class T>
T sdf_eval(const Field& f, const V3<T>& p) {
  if (const GridField* g = f.grid()) return sdf_eval(*g, p);
  return sdf_eval(*f.analytic(), p);
}

template <class T>
V3<T> sdf_grad(const Field& f, const V3<T>& p) {
  if (const GridField* g = f.grid()) return sdf_grad(*g, p);
  return sdf_grad(*f.analytic(), p);
}

template <class T>
V3<T> normal(const Field& f, const V3<T>& p) {
  V3<T> g = sdf_grad(f, p);
  double n2 = value_of(g.x) * value_of(g.x) + value_of(g.y) * value_of(g.y) +
              value_of(g.z) * value_of(g.z);
  if (n2 < 1e-24) throw DegenerateGradient();
  using std::sqrt;
  using ad::sqrt;
  T len = sqrt(dot(g, g));
  return g / len;
}

// --- Construction / extraction ---

using AlbedoFn = std::function<Vec3(const Vec3&)>;

// Bakes an analytic primitive to a grid; node values equal the analytic SDF
// exactly at the nodes.
GridField bake_grid(const AnalyticField& a, int nx, int ny, int nz, const Aabb& bbox,
                    const AlbedoFn& albedo_fn = nullptr);

// Tight AABB over negative voxels padded by one voxel (clamped to the grid
// bbox). Throws EmptyField when no voxel is negative.
Aabb extract_bbox(const GridField& g);

// Unpadded variant used by relation probing, where the padding would bias
// contact distances.
Aabb extract_bbox_tight(const GridField& g);

// --- SDFG binary format ---
// little-endian: magic "SDFG", version u32=1, dims 3xu32, bbox 6xf32,
// flags u32 (bit0 = has-albedo), SDF f32[nx*ny*nz] x-fastest, then albedo
// f32[3*nx*ny*nz] when flagged. Unknown versions are rejected.
GridField read_sdfg(const std::string& path);
void write_sdfg(const std::string& path, const GridField& g);

}  // namespace nrroom
