#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace nrroom {

// 3-vector templated on scalar type so the same geometry code runs on plain
// doubles and on taped autodiff scalars.
template <class T>
struct V3 {
  T x{}, y{}, z{};

  V3() = default;
  V3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  V3 operator+(const V3& b) const { return {x + b.x, y + b.y, z + b.z}; }
  V3 operator-(const V3& b) const { return {x - b.x, y - b.y, z - b.z}; }
  V3 operator-() const { return {-x, -y, -z}; }
  V3 operator*(const T& s) const { return {x * s, y * s, z * s}; }
  V3 operator/(const T& s) const { return {x / s, y / s, z / s}; }
  V3& operator+=(const V3& b) { x = x + b.x; y = y + b.y; z = z + b.z; return *this; }
  V3& operator-=(const V3& b) { x = x - b.x; y = y - b.y; z = z - b.z; return *this; }

  // componentwise product
  V3 cmul(const V3& b) const { return {x * b.x, y * b.y, z * b.z}; }

  T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  T& ref(int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

template <class T>
inline V3<T> operator*(const T& s, const V3<T>& v) { return v * s; }

template <class T>
inline T dot(const V3<T>& a, const V3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
inline V3<T> cross(const V3<T>& a, const V3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

using Vec3 = V3<double>;

inline double value_of(double x) { return x; }

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  return n > 0 ? v / n : Vec3{0, 0, 0};
}

inline Vec3 cwise_min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 cwise_max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

// Column-major 3x3 matrix: columns are basis vectors.
template <class T>
struct M3 {
  V3<T> c0, c1, c2;  // columns

  V3<T> mul(const V3<T>& v) const {
    return {c0.x * v.x + c1.x * v.y + c2.x * v.z,
            c0.y * v.x + c1.y * v.y + c2.y * v.z,
            c0.z * v.x + c1.z * v.y + c2.z * v.z};
  }
  // transpose-multiply, i.e. R^T v for rotations (world -> local)
  V3<T> tmul(const V3<T>& v) const {
    return {dot(c0, v), dot(c1, v), dot(c2, v)};
  }
  static M3 identity() {
    return {{T(1), T(0), T(0)}, {T(0), T(1), T(0)}, {T(0), T(0), T(1)}};
  }
};

using Mat3 = M3<double>;

inline Mat3 transpose(const Mat3& m) {
  return {{m.c0.x, m.c1.x, m.c2.x}, {m.c0.y, m.c1.y, m.c2.y}, {m.c0.z, m.c1.z, m.c2.z}};
}

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  return {a.mul(b.c0), a.mul(b.c1), a.mul(b.c2)};
}

struct Aabb {
  Vec3 min{0, 0, 0};
  Vec3 max{0, 0, 0};

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
           p.z >= min.z && p.z <= max.z;
  }
  void expand(const Vec3& p) {
    min = cwise_min(min, p);
    max = cwise_max(max, p);
  }
};

// Slab test. Returns false when the ray misses; otherwise [t0,t1] is the
// parametric overlap (t0 may be negative when the origin is inside).
inline bool ray_aabb(const Vec3& o, const Vec3& d, const Aabb& b, double& t0, double& t1) {
  t0 = -1e30;
  t1 = 1e30;
  for (int i = 0; i < 3; ++i) {
    double di = d[i];
    double oi = o[i];
    if (std::abs(di) < 1e-15) {
      if (oi < b.min[i] || oi > b.max[i]) return false;
      continue;
    }
    double inv = 1.0 / di;
    double a = (b.min[i] - oi) * inv;
    double c = (b.max[i] - oi) * inv;
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
  }
  return t1 >= t0;
}

}  // namespace nrroom
