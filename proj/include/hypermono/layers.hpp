#pragma once

#include <string>

#include "hypermono/autodiff.hpp"

namespace hypermono::ad {

// x [.., in] -> x W + b, W [in, out], b [out]. Parameters end in "/w", "/b".
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out);
  Var operator()(Tape& tape, Var x) const;
  Index in_features() const { return weight->value.extent(0); }
  Index out_features() const { return weight->value.extent(1); }
};

// Two-layer perceptron with a GELU hidden layer of width `hidden`.
struct Mlp {
  Linear first;
  Linear second;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out);
  Var operator()(Tape& tape, Var x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index width);
  Var operator()(Tape& tape, Var x) const;
};

}  // namespace hypermono::ad
