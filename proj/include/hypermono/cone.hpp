#pragma once

// Sector-cone algebra. Per dimension a cone is an arc of the unit circle with
// axis angle in [-pi, pi) and aperture in [0, 2pi]. The geometric helpers are
// templated on the scalar; the learned operations record onto an ad::Tape.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hypermono/autodiff.hpp"
#include "hypermono/layers.hpp"

namespace hypermono::cone {

template <typename Scalar>
using AngleArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
inline constexpr Scalar kPi = std::numbers::pi_v<Scalar>;

template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar two_pi = 2 * kPi<Scalar>;
  Scalar w = a - two_pi * std::floor((a + kPi<Scalar>) / two_pi);
  if (w >= kPi<Scalar>) w -= two_pi;
  if (w < -kPi<Scalar>) w = -kPi<Scalar>;
  return w;
}

template <typename Derived>
auto wrap_angles(const Eigen::ArrayBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.unaryExpr([](Scalar x) { return wrap_angle(x); }).eval();
}

// f(x) = pi tanh(lambda1 x): axis scaling into (-pi, pi).
template <typename Derived>
auto axis_scale(const Eigen::ArrayBase<Derived>& x, typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  return (kPi<Scalar> * (lambda * x).tanh()).eval();
}

// g(y) = pi tanh(lambda2 y) + pi: aperture scaling into (0, 2pi).
template <typename Derived>
auto aperture_scale(const Eigen::ArrayBase<Derived>& y, typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  return (kPi<Scalar> * (lambda * y).tanh() + kPi<Scalar>).eval();
}

template <typename Scalar>
struct Cone {
  AngleArray<Scalar> axis;
  AngleArray<Scalar> aperture;

  Eigen::Index dim() const { return axis.size(); }

  // Axis in [-pi, pi) and aperture in [0, 2pi] on every dimension.
  bool valid() const {
    return axis.size() == aperture.size() && axis.allFinite() && aperture.allFinite() &&
           (axis >= -kPi<Scalar>).all() && (axis < kPi<Scalar>).all() && (aperture >= 0).all() &&
           (aperture <= 2 * kPi<Scalar>).all();
  }

  AngleArray<Scalar> lower_edge() const { return axis - aperture / 2; }
  AngleArray<Scalar> upper_edge() const { return axis + aperture / 2; }
  // Sum of log apertures; the product of apertures is the cone "volume".
  Scalar log_volume() const { return aperture.log().sum(); }
};

// Whether the inner arc lies within the outer arc, one dimension, angles
// modulo 2pi. A full-circle outer arc contains everything.
template <typename Scalar>
bool arc_contains(Scalar outer_axis, Scalar outer_aperture, Scalar inner_axis, Scalar inner_aperture,
                  Scalar tol) {
  constexpr Scalar two_pi = 2 * kPi<Scalar>;
  if (outer_aperture >= two_pi - tol) return true;
  if (inner_aperture > outer_aperture + tol) return false;
  const Scalar outer_start = outer_axis - outer_aperture / 2;
  const Scalar inner_start = inner_axis - inner_aperture / 2;
  Scalar delta = std::fmod(inner_start - outer_start, two_pi);
  if (delta < 0) delta += two_pi;
  if (delta > two_pi - tol) delta -= two_pi;  // start edges coincide up to rounding
  return delta >= -tol && delta + inner_aperture <= outer_aperture + tol;
}

template <typename Scalar>
bool contains(const Cone<Scalar>& outer, const Cone<Scalar>& inner, Scalar tol = Scalar(1e-10)) {
  if (outer.dim() != inner.dim()) return false;
  for (Eigen::Index i = 0; i < outer.dim(); ++i)
    if (!arc_contains(outer.axis[i], outer.aperture[i], inner.axis[i], inner.aperture[i], tol)) return false;
  return true;
}

// Cone whose axis and aperture are tape variables of shape [d].
struct ConeVar {
  ad::Var axis;
  ad::Var aperture;

  Cone<double> value() const {
    return {axis.value().data().array(), aperture.value().data().array()};
  }
};

// Learned parts of the cone operations for embedding width d.
struct ConeParams {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool strict_containment = false;  // clamp shrunk apertures to the source aperture

  ad::Mlp head_embed;       // d -> d
  ad::Mlp relation_embed;   // d -> d
  ad::Mlp projection;       // 4d -> 2d
  ad::Mlp shrink_inner;     // d -> d
  ad::Mlp shrink_combine;   // 3d -> d
  ad::Mlp attention;        // 3d -> d, per-dimension attention logits
  ad::Mlp gate_inner;       // 3d -> d
  ad::Mlp gate_outer;       // d -> d
  ad::Mlp scoring;          // 3d -> d

  ConeParams() = default;
  ConeParams(ad::ParameterStore& store, const std::string& prefix, ad::Index dim);
};

// Axis = f(n(MLP(E))), aperture = g(n(MLP(E))) on one shared MLP output,
// where n standardizes the d coordinates (zero mean, unit variance).
ConeVar embed_to_cone(ad::Tape& tape, ad::Var embedding, const ad::Mlp& mlp, double lambda1,
                      double lambda2);

// MLP over concat(axis_h, aperture_h, axis_r, aperture_r); the two halves of
// its output, each standardized, go through f and g.
ConeVar project(ad::Tape& tape, const ConeVar& head, const ConeVar& relation, const ConeParams& params);

// Intermediate values of one shrink, for inspection.
struct ShrinkTrace {
  ad::Var theta;      // MLP2(concat(E_r, E_a, E_v))
  ad::Var x;          // MLP1(theta)
  ad::Var alpha_rav;  // f(x)
  ad::Var beta_rav;   // g(x)
  ad::Var offset;
};

// Qualifier shrink of the projected cone C(h, r) by the pair (a : v).
ConeVar shrink(ad::Tape& tape, const ConeVar& source, ad::Var relation, ad::Var attribute, ad::Var value,
               const ConeParams& params, ShrinkTrace* trace = nullptr);

// Attention-weighted circular mean of axes; aperture = sigmoid gate times
// the elementwise minimum aperture.
ConeVar intersect(ad::Tape& tape, std::span<const ConeVar> cones, const ConeParams& params);

// MLP(concat(sin(axis), cos(axis), aperture)) against every entity row: [N].
ad::Var cone_to_logits(ad::Tape& tape, const ConeVar& cone, ad::Var entity_matrix, const ConeParams& params);

}  // namespace hypermono::cone
