#include "hypermono/layers.hpp"

namespace hypermono::ad {

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out)
    : weight(&store.add(name + "/w", Shape{in, out})), bias(&store.add(name + "/b", Shape{out})) {}

Var Linear::operator()(Tape& tape, Var x) const {
  return add(matmul(x, tape.param(*weight)), tape.param(*bias));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out)
    : first(store, name + "/fc1", in, hidden), second(store, name + "/fc2", hidden, out) {}

Var Mlp::operator()(Tape& tape, Var x) const { return second(tape, gelu(first(tape, x))); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Index width)
    : gain(&store.add(name + "/gain", Shape{width})), bias(&store.add(name + "/shift", Shape{width})) {}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return layer_norm(x, tape.param(*gain), tape.param(*bias));
}

}  // namespace hypermono::ad
