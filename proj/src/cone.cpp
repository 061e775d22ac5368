#include "hypermono/cone.hpp"

#include "hypermono/errors.hpp"

namespace hypermono::cone {

using ad::Index;
using ad::Var;

ConeParams::ConeParams(ad::ParameterStore& store, const std::string& prefix, Index d)
    : head_embed(store, prefix + "/head", d, d, d),
      relation_embed(store, prefix + "/relation", d, d, d),
      projection(store, prefix + "/project", 4 * d, 2 * d, 2 * d),
      shrink_inner(store, prefix + "/shrink1", d, d, d),
      shrink_combine(store, prefix + "/shrink2", 3 * d, d, d),
      attention(store, prefix + "/attn", 3 * d, d, d),
      gate_inner(store, prefix + "/gate1", 3 * d, d, d),
      gate_outer(store, prefix + "/gate2", d, d, d),
      scoring(store, prefix + "/score", 3 * d, d, d) {}

namespace {

Var f_scale(Var x, double lambda) { return std::numbers::pi * ad::tanh(lambda * x); }
Var g_scale(Var y, double lambda) { return ad::add_scalar(std::numbers::pi * ad::tanh(lambda * y), std::numbers::pi); }

// Layer norm without gain or shift.
Var normalize(ad::Tape& tape, Var x) {
  const Index d = x.value().cols();
  return ad::layer_norm(x, tape.constant(ad::Tensor(ad::Shape{d}, 1.0)),
                        tape.constant(ad::Tensor(ad::Shape{d}, 0.0)));
}

// [sin(axis), cos(axis), aperture]
Var cone_features(const ConeVar& c) { return ad::concat({ad::sin(c.axis), ad::cos(c.axis), c.aperture}); }

void require_finite(Var v, const char* what) {
  if (!v.value().all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace

ConeVar embed_to_cone(ad::Tape& tape, Var embedding, const ad::Mlp& mlp, double lambda1, double lambda2) {
  require_finite(embedding, "embed_to_cone");
  Var x = normalize(tape, mlp(tape, embedding));
  return {f_scale(x, lambda1), g_scale(x, lambda2)};
}

ConeVar project(ad::Tape& tape, const ConeVar& head, const ConeVar& relation, const ConeParams& params) {
  const Index d = head.axis.value().cols();
  Var out = params.projection(tape, ad::concat({head.axis, head.aperture, relation.axis, relation.aperture}));
  return {f_scale(normalize(tape, ad::slice_last(out, 0, d)), params.lambda1),
          g_scale(normalize(tape, ad::slice_last(out, d, d)), params.lambda2)};
}

ConeVar shrink(ad::Tape& tape, const ConeVar& source, Var relation, Var attribute, Var value,
               const ConeParams& params, ShrinkTrace* trace) {
  require_finite(relation, "shrink");
  require_finite(attribute, "shrink");
  require_finite(value, "shrink");
  Var theta = params.shrink_combine(tape, ad::concat({relation, attribute, value}));
  Var x = params.shrink_inner(tape, theta);
  Var alpha_rav = f_scale(x, params.lambda1);
  Var beta_rav = g_scale(x, params.lambda2);
  Var beta_s = ad::sigmoid(beta_rav);
  if (params.strict_containment) {
    const Var pair[] = {beta_s, source.aperture};
    beta_s = ad::min(ad::stack(pair), 0);
  }
  Var offset = (source.aperture - beta_s) * ad::sigmoid(alpha_rav);
  Var axis = source.axis + 0.5 * (beta_s - source.aperture) + 0.5 * offset;
  if (trace) *trace = {theta, x, alpha_rav, beta_rav, offset};
  return {ad::wrap_angle(axis), beta_s};
}

ConeVar intersect(ad::Tape& tape, std::span<const ConeVar> cones, const ConeParams& params) {
  if (cones.empty()) throw ArgumentError("intersect: empty cone list");
  std::vector<Var> axes, apertures, features;
  for (const auto& c : cones) {
    axes.push_back(c.axis);
    apertures.push_back(c.aperture);
    features.push_back(cone_features(c));
  }
  Var feats = ad::stack(features);                                                 // [s, 3d]
  Var weights = ad::transpose(ad::softmax(ad::transpose(params.attention(tape, feats))));  // softmax over cones
  Var alpha = ad::stack(axes);
  Var y = ad::sum(weights * ad::sin(alpha), 0);
  Var x = ad::sum(weights * ad::cos(alpha), 0);
  Var axis = ad::wrap_angle(ad::atan2(y, x));

  Var gate = ad::sigmoid(params.gate_outer(tape, ad::mean(params.gate_inner(tape, feats), 0)));
  Var aperture = gate * ad::min(ad::stack(apertures), 0);
  return {axis, aperture};
}

Var cone_to_logits(ad::Tape& tape, const ConeVar& cone, Var entity_matrix, const ConeParams& params) {
  require_finite(entity_matrix, "cone_to_logits");
  Var q = params.scoring(tape, cone_features(cone));
  return ad::matmul_nt(q, entity_matrix);
}

}  // namespace hypermono::cone
