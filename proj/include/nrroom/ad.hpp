#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nrroom/vec.hpp"

namespace nrroom::ad {

// Flat reverse-mode tape. Nodes have at most two parents with precomputed
// local partials; constants never touch the tape. Tapes are cheap to reset
// and are reused per ray, so the active tape stays small and cache-hot.
class Tape {
 public:
  int32_t leaf() {
    nodes_.push_back(Node{0.0, 0.0, -1, -1});
    return static_cast<int32_t>(nodes_.size()) - 1;
  }
  int32_t unary(int32_t a, double wa) {
    nodes_.push_back(Node{wa, 0.0, a, -1});
    return static_cast<int32_t>(nodes_.size()) - 1;
  }
  int32_t binary(int32_t a, int32_t b, double wa, double wb) {
    nodes_.push_back(Node{wa, wb, a, b});
    return static_cast<int32_t>(nodes_.size()) - 1;
  }

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from `root`; adjoints readable afterwards via adjoint().
  void backward(int32_t root) {
    adj_.assign(nodes_.size(), 0.0);
    if (root < 0) return;
    adj_[root] = 1.0;
    for (int32_t i = root; i >= 0; --i) {
      double a = adj_[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.p0 >= 0) adj_[n.p0] += n.w0 * a;
      if (n.p1 >= 0) adj_[n.p1] += n.w1 * a;
    }
  }

  double adjoint(int32_t i) const {
    return (i >= 0 && i < static_cast<int32_t>(adj_.size())) ? adj_[i] : 0.0;
  }

 private:
  struct Node {
    double w0, w1;
    int32_t p0, p1;
  };
  std::vector<Node> nodes_;
  std::vector<double> adj_;
};

Tape* active_tape();
void set_active_tape(Tape* t);

// RAII scope for the thread-local active tape.
struct TapeScope {
  explicit TapeScope(Tape* t) : prev_(active_tape()) { set_active_tape(t); }
  ~TapeScope() { set_active_tape(prev_); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Taped scalar. ix < 0 marks a constant (not on any tape).
struct Val {
  double v = 0.0;
  int32_t ix = -1;

  Val() = default;
  Val(double c) : v(c) {}  // NOLINT: implicit constants are the point
  Val(double val, int32_t index) : v(val), ix(index) {}

  static Val leaf(double value) { return Val(value, active_tape()->leaf()); }
};

inline double value_of(Val a) { return a.v; }

inline Val operator+(Val a, Val b) {
  double v = a.v + b.v;
  if (a.ix < 0 && b.ix < 0) return v;
  if (a.ix < 0) return {v, active_tape()->unary(b.ix, 1.0)};
  if (b.ix < 0) return {v, active_tape()->unary(a.ix, 1.0)};
  return {v, active_tape()->binary(a.ix, b.ix, 1.0, 1.0)};
}

inline Val operator-(Val a, Val b) {
  double v = a.v - b.v;
  if (a.ix < 0 && b.ix < 0) return v;
  if (a.ix < 0) return {v, active_tape()->unary(b.ix, -1.0)};
  if (b.ix < 0) return {v, active_tape()->unary(a.ix, 1.0)};
  return {v, active_tape()->binary(a.ix, b.ix, 1.0, -1.0)};
}

inline Val operator-(Val a) {
  if (a.ix < 0) return -a.v;
  return {-a.v, active_tape()->unary(a.ix, -1.0)};
}

inline Val operator*(Val a, Val b) {
  double v = a.v * b.v;
  if (a.ix < 0 && b.ix < 0) return v;
  if (a.ix < 0) return {v, active_tape()->unary(b.ix, a.v)};
  if (b.ix < 0) return {v, active_tape()->unary(a.ix, b.v)};
  return {v, active_tape()->binary(a.ix, b.ix, b.v, a.v)};
}

inline Val operator/(Val a, Val b) {
  double inv = 1.0 / b.v;
  double v = a.v * inv;
  if (a.ix < 0 && b.ix < 0) return v;
  if (b.ix < 0) return {v, active_tape()->unary(a.ix, inv)};
  if (a.ix < 0) return {v, active_tape()->unary(b.ix, -v * inv)};
  return {v, active_tape()->binary(a.ix, b.ix, inv, -v * inv)};
}

inline Val sqrt(Val a) {
  double v = std::sqrt(a.v);
  if (a.ix < 0) return v;
  return {v, active_tape()->unary(a.ix, 0.5 / v)};
}

inline Val exp(Val a) {
  double v = std::exp(a.v);
  if (a.ix < 0) return v;
  return {v, active_tape()->unary(a.ix, v)};
}

inline Val log(Val a) {
  double v = std::log(a.v);
  if (a.ix < 0) return v;
  return {v, active_tape()->unary(a.ix, 1.0 / a.v)};
}

inline Val abs(Val a) {
  if (a.ix < 0) return std::abs(a.v);
  return a.v >= 0 ? a : -a;
}

// max/min pass operands through untouched, so inactive branches add no nodes.
inline Val max(Val a, Val b) { return a.v >= b.v ? a : b; }
inline Val min(Val a, Val b) { return a.v <= b.v ? a : b; }

inline bool operator<(Val a, Val b) { return a.v < b.v; }
inline bool operator>(Val a, Val b) { return a.v > b.v; }
inline bool operator<=(Val a, Val b) { return a.v <= b.v; }
inline bool operator>=(Val a, Val b) { return a.v >= b.v; }

// Fused helpers keeping node counts down in the hot rendering path.

// a + t * (b - a) with constant endpoints: single node.
inline Val lerp_const(double a, double b, Val t) {
  double v = a + t.v * (b - a);
  if (t.ix < 0) return v;
  return {v, active_tape()->unary(t.ix, b - a)};
}

// wa * a + wb * b with constant weights: single node.
inline Val wsum(double wa, Val a, double wb, Val b) {
  double v = wa * a.v + wb * b.v;
  if (a.ix < 0 && b.ix < 0) return v;
  if (a.ix < 0) return {v, active_tape()->unary(b.ix, wb)};
  if (b.ix < 0) return {v, active_tape()->unary(a.ix, wa)};
  return {v, active_tape()->binary(a.ix, b.ix, wa, wb)};
}

// Numerically stable logistic CDF Phi_s(x) = 1 / (1 + exp(-s x)), one node.
inline Val logistic(Val x, double s) {
  double z = s * x.v;
  double v;
  if (z >= 0) {
    v = 1.0 / (1.0 + std::exp(-z));
  } else {
    double e = std::exp(z);
    v = e / (1.0 + e);
  }
  if (x.ix < 0) return v;
  return {v, active_tape()->unary(x.ix, s * v * (1.0 - v))};
}

inline double logistic(double x, double s) {
  double z = s * x;
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

using Vec3v = ::nrroom::V3<Val>;

}  // namespace nrroom::ad

namespace nrroom {

// Generic fallbacks used by code templated on the scalar type.
inline double lerp_const(double a, double b, double t) { return a + t * (b - a); }
inline double wsum(double wa, double a, double wb, double b) { return wa * a + wb * b; }

}  // namespace nrroom
