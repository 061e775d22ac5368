#include "hypermono/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hypermono/errors.hpp"

namespace hypermono::ad {

namespace {

constexpr double kPi = std::numbers::pi;

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ArgumentError("operation on an unbound Var");
    if (t && v.tape != t) throw ArgumentError("operands recorded on different tapes");
    t = v.tape;
  }
  return *t;
}

Tape& tape_of(std::span<const Var> vars) {
  if (vars.empty()) throw ArgumentError("operation needs at least one operand");
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ArgumentError("operation on an unbound Var");
    if (t && v.tape != t) throw ArgumentError("operands recorded on different tapes");
    t = v.tape;
  }
  return *t;
}

MatrixMap view(Tensor& t, Index rows, Index cols) { return MatrixMap(t.data().data(), rows, cols); }
ConstMatrixMap view(const Tensor& t, Index rows, Index cols) {
  return ConstMatrixMap(t.data().data(), rows, cols);
}

[[noreturn]] void shape_fail(const char* kernel, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(kernel) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Index normalize_axis(Index axis, Index rank, const char* kernel) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError(std::string(kernel) + ": axis out of range for rank " + std::to_string(rank));
  return axis;
}

// out = ca * a + cb * b with suffix broadcasting.
Var linear_combine(Var a, Var b, double ca, double cb, const char* kernel) {
  Tape& tape = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out(av.shape());
    out.data() = ca * av.data() + cb * bv.data();
    return tape.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, std::int32_t self) {
      const auto& g = t.grad(self).data();
      if (t.requires_grad(a.id)) t.grad(a.id).data() += ca * g;
      if (t.requires_grad(b.id)) t.grad(b.id).data() += cb * g;
    });
  }
  bool b_small = is_suffix(bv.shape(), av.shape());
  if (!b_small && !is_suffix(av.shape(), bv.shape())) shape_fail(kernel, av.shape(), bv.shape());
  Var big = b_small ? a : b;
  Var small = b_small ? b : a;
  const double cbig = b_small ? ca : cb;
  const double csmall = b_small ? cb : ca;
  const Tensor& bigv = big.value();
  const Tensor& smallv = small.value();
  const Index inner = smallv.size();
  const Index reps = inner == 0 ? 0 : bigv.size() / inner;
  Tensor out(bigv.shape());
  view(out, reps, inner) =
      (cbig * view(bigv, reps, inner)).rowwise() + csmall * smallv.data().transpose();
  return tape.record(std::move(out), {a, b},
                     [big, small, cbig, csmall, reps, inner](Tape& t, std::int32_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(big.id)) t.grad(big.id).data() += cbig * g.data();
                       if (t.requires_grad(small.id))
                         t.grad(small.id).data() +=
                             csmall * view(g, reps, inner).colwise().sum().transpose();
                     });
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& tape = tape_of({a});
  const Tensor& x = a.value();
  Tensor out(x.shape());
  out.data() = x.data().unaryExpr(f);
  return tape.record(std::move(out), {a}, [a, df](Tape& t, std::int32_t self) {
    if (!t.requires_grad(a.id)) return;
    const auto& x = t.value(a.id).data();
    const auto& y = t.value(self).data();
    const auto& g = t.grad(self).data();
    auto& ga = t.grad(a.id).data();
    for (Index i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

struct AxisLayout {
  Index outer, n, inner;
  Shape reduced;
};

AxisLayout axis_layout(const Shape& shape, Index axis, const char* kernel) {
  axis = normalize_axis(axis, static_cast<Index>(shape.size()), kernel);
  AxisLayout l{1, shape[static_cast<std::size_t>(axis)], 1, {}};
  for (Index i = 0; i < axis; ++i) l.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) l.inner *= shape[i];
  l.reduced = shape;
  l.reduced.erase(l.reduced.begin() + axis);
  return l;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

const Tensor& Var::value() const {
  if (!valid()) throw ArgumentError("value() on an unbound Var");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  auto id = static_cast<std::int32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

const Tensor& Tape::value(std::int32_t id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_ready) {
    n.grad = Tensor(value(id).shape());
    n.grad_ready = true;
  }
  return n.grad;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& v : inputs) n.requires_grad |= requires_grad(v.id);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ArgumentError("backward: loss recorded on another tape");
  if (loss.value().size() != 1)
    throw ArgumentError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  grad(loss.id).data().setConstant(1.0);
  for (auto id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad_ready && n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_)
    if (n.param && n.grad_ready) n.param->grad.data() += n.grad.data();
  clear();
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 1 || bv.rank() != 2 || av.cols() != bv.extent(0)) shape_fail("matmul", av.shape(), bv.shape());
  Shape s = av.shape();
  s.back() = bv.extent(1);
  Tensor out(s);
  out.mat().noalias() = av.mat() * bv.mat();
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, std::int32_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(a.id)) t.grad(a.id).mat().noalias() += g * t.value(b.id).mat().transpose();
    if (t.requires_grad(b.id)) t.grad(b.id).mat().noalias() += t.value(a.id).mat().transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 1 || bv.rank() != 2 || av.cols() != bv.extent(1)) shape_fail("matmul_nt", av.shape(), bv.shape());
  Shape s = av.shape();
  s.back() = bv.extent(0);
  Tensor out(s);
  out.mat().noalias() = av.mat() * bv.mat().transpose();
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, std::int32_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(a.id)) t.grad(a.id).mat().noalias() += g * t.value(b.id).mat();
    if (t.requires_grad(b.id)) t.grad(b.id).mat().noalias() += g.transpose() * t.value(a.id).mat();
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of({a});
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(av.shape()));
  Tensor out(Shape{av.extent(1), av.extent(0)});
  out.mat() = av.mat().transpose();
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).mat() += t.grad(self).mat().transpose();
  });
}

Var add(Var a, Var b) { return linear_combine(a, b, 1.0, 1.0, "add"); }
Var sub(Var a, Var b) { return linear_combine(a, b, 1.0, -1.0, "sub"); }

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  bool b_small = is_suffix(bv.shape(), av.shape());
  if (!b_small && !is_suffix(av.shape(), bv.shape())) shape_fail("mul", av.shape(), bv.shape());
  Var big = b_small ? a : b;
  Var small = b_small ? b : a;
  const Tensor& bigv = big.value();
  const Index inner = small.value().size();
  const Index reps = inner == 0 ? 0 : bigv.size() / inner;
  Tensor out(bigv.shape());
  view(out, reps, inner) =
      view(bigv, reps, inner).array().rowwise() * small.value().data().transpose().array();
  return tape.record(std::move(out), {a, b}, [big, small, reps, inner](Tape& t, std::int32_t self) {
    const auto g = view(t.grad(self), reps, inner).array();
    if (t.requires_grad(big.id))
      view(t.grad(big.id), reps, inner).array() +=
          g.rowwise() * t.value(small.id).data().transpose().array();
    if (t.requires_grad(small.id))
      t.grad(small.id).data() +=
          (g * view(t.value(big.id), reps, inner).array()).colwise().sum().transpose().matrix();
  });
}

Var scale(Var a, double c) {
  Tape& tape = tape_of({a});
  Tensor out(a.shape());
  out.data() = c * a.value().data();
  return tape.record(std::move(out), {a}, [a, c](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data() += c * t.grad(self).data();
  });
}

Var add_scalar(Var a, double c) {
  Tape& tape = tape_of({a});
  Tensor out(a.shape());
  out.data() = a.value().data().array() + c;
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data() += t.grad(self).data();
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var concat(std::span<const Var> parts) {
  Tape& tape = tape_of(parts);
  const Shape& first = parts[0].shape();
  if (first.empty()) throw ShapeError("concat: scalars have no last axis");
  Index total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin()))
      shape_fail("concat", first, s);
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  const Index rows = out.rows();
  std::vector<Index> offsets;
  Index off = 0;
  auto om = out.mat();
  for (const auto& p : parts) {
    const Index c = p.value().cols();
    om.middleCols(off, c) = p.value().mat();
    offsets.push_back(off);
    off += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  (void)rows;
  return tape.record(std::move(out), parts, [inputs, offsets](Tape& t, std::int32_t self) {
    const auto g = t.grad(self).mat();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!t.requires_grad(inputs[i].id)) continue;
      auto gi = t.grad(inputs[i].id).mat();
      gi += g.middleCols(offsets[i], gi.cols());
    }
  });
}

Var stack(std::span<const Var> parts) {
  Tape& tape = tape_of(parts);
  const Shape& first = parts[0].shape();
  for (const auto& p : parts)
    if (p.shape() != first) shape_fail("stack", first, p.shape());
  Shape s = first;
  s.insert(s.begin(), static_cast<Index>(parts.size()));
  Tensor out(s);
  const Index n = shape_size(first);
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.data().segment(static_cast<Index>(i) * n, n) = parts[i].value().data();
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [inputs, n](Tape& t, std::int32_t self) {
    const auto& g = t.grad(self).data();
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (t.requires_grad(inputs[i].id))
        t.grad(inputs[i].id).data() += g.segment(static_cast<Index>(i) * n, n);
  });
}

Var slice_last(Var a, Index begin, Index count) {
  Tape& tape = tape_of({a});
  const Tensor& av = a.value();
  if (av.rank() < 1 || begin < 0 || count < 0 || begin + count > av.cols())
    throw ShapeError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside shape " + shape_string(av.shape()));
  Shape s = av.shape();
  s.back() = count;
  Tensor out(s);
  out.mat() = av.mat().middleCols(begin, count);
  return tape.record(std::move(out), {a}, [a, begin, count](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).mat().middleCols(begin, count) += t.grad(self).mat();
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of({a});
  Tensor out = a.value();
  out.reshape(std::move(shape));
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data() += t.grad(self).data();
  });
}

Var gather_rows(Var table, std::span<const Index> rows) {
  Tape& tape = tape_of({table});
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + shape_string(tv.shape()));
  const Index d = tv.cols();
  Tensor out(Shape{static_cast<Index>(rows.size()), d});
  auto om = out.mat();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows())
      throw VocabularyError("gather_rows: row " + std::to_string(rows[i]) + " outside table of " +
                            std::to_string(tv.rows()) + " rows");
    om.row(static_cast<Index>(i)) = tv.mat().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return tape.record(std::move(out), {table}, [table, idx](Tape& t, std::int32_t self) {
    if (!t.requires_grad(table.id)) return;
    const auto g = t.grad(self).mat();
    auto gt = t.grad(table.id).mat();
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var row(Var a, Index r) {
  if (a.value().rank() != 2) throw ShapeError("row: expected rank 2, got " + shape_string(a.shape()));
  const Index cols = a.value().cols();
  Index idx[1] = {r};
  return reshape(gather_rows(a, idx), Shape{cols});
}

Var sum(Var a, Index axis) {
  Tape& tape = tape_of({a});
  auto l = axis_layout(a.shape(), axis, "sum");
  Tensor out(l.reduced);
  const auto& x = a.value().data();
  for (Index o = 0; o < l.outer; ++o)
    out.data().segment(o * l.inner, l.inner) =
        ConstMatrixMap(x.data() + o * l.n * l.inner, l.n, l.inner).colwise().sum().transpose();
  return tape.record(std::move(out), {a}, [a, l](Tape& t, std::int32_t self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self).data();
    auto& ga = t.grad(a.id).data();
    for (Index o = 0; o < l.outer; ++o)
      MatrixMap(ga.data() + o * l.n * l.inner, l.n, l.inner).rowwise() +=
          g.segment(o * l.inner, l.inner).transpose();
  });
}

Var mean(Var a, Index axis) {
  auto l = axis_layout(a.shape(), axis, "mean");
  if (l.n == 0) throw ShapeError("mean: empty axis in shape " + shape_string(a.shape()));
  return scale(sum(a, axis), 1.0 / static_cast<double>(l.n));
}

Var min(Var a, Index axis) {
  Tape& tape = tape_of({a});
  auto l = axis_layout(a.shape(), axis, "min");
  if (l.n == 0) throw ShapeError("min: empty axis in shape " + shape_string(a.shape()));
  Tensor out(l.reduced);
  std::vector<Index> arg(static_cast<std::size_t>(l.outer * l.inner));
  const auto& x = a.value().data();
  for (Index o = 0; o < l.outer; ++o)
    for (Index i = 0; i < l.inner; ++i) {
      Index best = 0;
      for (Index j = 1; j < l.n; ++j)
        if (x[(o * l.n + j) * l.inner + i] < x[(o * l.n + best) * l.inner + i]) best = j;
      out[o * l.inner + i] = x[(o * l.n + best) * l.inner + i];
      arg[static_cast<std::size_t>(o * l.inner + i)] = (o * l.n + best) * l.inner + i;
    }
  return tape.record(std::move(out), {a}, [a, arg](Tape& t, std::int32_t self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self).data();
    auto& ga = t.grad(a.id).data();
    for (std::size_t k = 0; k < arg.size(); ++k) ga[arg[k]] += g[static_cast<Index>(k)];
  });
}

Var sum_all(Var a) {
  Tape& tape = tape_of({a});
  Tensor out = Tensor::scalar(a.value().data().sum());
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data().array() += t.grad(self).item();
  });
}

Var softmax(Var a) {
  Tape& tape = tape_of({a});
  const Tensor& av = a.value();
  Tensor out(av.shape());
  auto om = out.mat();
  const auto x = av.mat();
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    om.row(r) = (x.row(r).array() - m).exp().matrix();
    om.row(r) /= om.row(r).sum();
  }
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (!t.requires_grad(a.id)) return;
    const auto y = t.value(self).mat();
    const auto g = t.grad(self).mat();
    auto ga = t.grad(a.id).mat();
    for (Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double th = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var atan2(Var y, Var x) {
  Tape& tape = tape_of({y, x});
  if (y.shape() != x.shape()) shape_fail("atan2", y.shape(), x.shape());
  Tensor out(y.shape());
  const auto& yv = y.value().data();
  const auto& xv = x.value().data();
  for (Index i = 0; i < out.size(); ++i) out[i] = std::atan2(yv[i], xv[i]);
  return tape.record(std::move(out), {y, x}, [y, x](Tape& t, std::int32_t self) {
    const auto& yv = t.value(y.id).data();
    const auto& xv = t.value(x.id).data();
    const auto& g = t.grad(self).data();
    const bool gy = t.requires_grad(y.id), gx = t.requires_grad(x.id);
    for (Index i = 0; i < g.size(); ++i) {
      const double r2 = xv[i] * xv[i] + yv[i] * yv[i];
      if (r2 == 0.0) continue;
      if (gy) t.grad(y.id)[i] += g[i] * xv[i] / r2;
      if (gx) t.grad(x.id)[i] -= g[i] * yv[i] / r2;
    }
  });
}

Var wrap_angle(Var a) {
  Tape& tape = tape_of({a});
  Tensor out(a.shape());
  const auto& x = a.value().data();
  for (Index i = 0; i < out.size(); ++i) {
    double w = x[i] - 2.0 * kPi * std::floor((x[i] + kPi) / (2.0 * kPi));
    if (w >= kPi) w -= 2.0 * kPi;  // rounding at the upper edge
    if (w < -kPi) w = -kPi;
    out[i] = w;
  }
  return tape.record(std::move(out), {a}, [a](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data() += t.grad(self).data();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = tape_of({x, gain, bias});
  const Tensor& xv = x.value();
  const Index c = xv.cols();
  if (xv.rank() < 1 || gain.value().size() != c || bias.value().size() != c)
    shape_fail("layer_norm", xv.shape(), gain.shape());
  const Index r = xv.rows();
  Tensor xhat(xv.shape());
  Eigen::VectorXd inv_std(r);
  auto xm = xv.mat();
  auto hm = xhat.mat();
  for (Index i = 0; i < r; ++i) {
    const double mu = xm.row(i).mean();
    const double var = (xm.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    hm.row(i) = (xm.row(i).array() - mu) * inv_std[i];
  }
  Tensor out(xv.shape());
  out.mat() = (hm.array().rowwise() * gain.value().data().transpose().array()).rowwise() +
              bias.value().data().transpose().array();
  return tape.record(std::move(out), {x, gain, bias},
                     [x, gain, bias, xhat = std::move(xhat), inv_std](Tape& t, std::int32_t self) {
                       const auto g = t.grad(self).mat();
                       const auto h = xhat.mat();
                       if (t.requires_grad(bias.id)) t.grad(bias.id).data() += g.colwise().sum().transpose();
                       if (t.requires_grad(gain.id))
                         t.grad(gain.id).data() += (g.array() * h.array()).colwise().sum().transpose().matrix();
                       if (!t.requires_grad(x.id)) return;
                       const auto& gv = t.value(gain.id).data();
                       auto gx = t.grad(x.id).mat();
                       for (Index i = 0; i < g.rows(); ++i) {
                         Eigen::ArrayXd gh = g.row(i).transpose().array() * gv.array();
                         Eigen::ArrayXd hi = h.row(i).transpose().array();
                         const double m1 = gh.mean();
                         const double m2 = (gh * hi).mean();
                         gx.row(i).array() += (inv_std[i] * (gh - m1 - hi * m2)).transpose();
                       }
                     });
}

Var dropout(Var a, double rate, std::uint64_t key, bool train) {
  if (!train || rate <= 0.0) return a;
  if (rate >= 1.0) throw ArgumentError("dropout rate must be < 1");
  Tape& tape = tape_of({a});
  const Index n = a.value().size();
  Eigen::VectorXd mask(n);
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(mix_key(key, static_cast<std::uint64_t>(i)) >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep;
  }
  Tensor out(a.shape());
  out.data() = a.value().data().cwiseProduct(mask);
  return tape.record(std::move(out), {a}, [a, mask](Tape& t, std::int32_t self) {
    if (t.requires_grad(a.id)) t.grad(a.id).data() += t.grad(self).data().cwiseProduct(mask);
  });
}

Var attention_weights(Var q, Var k) {
  const Index dh = q.value().cols();
  return softmax(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh))));
}

Var multi_head_attention(Var q, Var k, Var v, Index heads) {
  const Index d = q.value().cols();
  if (heads < 1 || d % heads != 0)
    throw ShapeError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (k.value().cols() != d || v.value().cols() != d || k.value().rows() != v.value().rows())
    shape_fail("multi_head_attention", k.shape(), v.shape());
  const Index dh = d / heads;
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    auto w = attention_weights(slice_last(q, h * dh, dh), slice_last(k, h * dh, dh));
    outs.push_back(matmul(w, slice_last(v, h * dh, dh)));
  }
  return heads == 1 ? outs[0] : concat(outs);
}

Var cross_entropy(Var logits, std::span<const Index> targets, double smoothing) {
  Tape& tape = tape_of({logits});
  const Tensor& lv = logits.value();
  if (lv.rank() < 1 || lv.rank() > 2) throw ShapeError("cross_entropy: logits must be rank 1 or 2, got " + shape_string(lv.shape()));
  const Index b = lv.rows();
  const Index n = lv.cols();
  if (static_cast<Index>(targets.size()) != b)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(b) + " rows");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ArgumentError("cross_entropy: smoothing must lie in [0, 1)");
  if (n < 2 && smoothing > 0.0) throw ArgumentError("cross_entropy: smoothing needs at least 2 classes");
  if (!lv.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  for (auto tgt : targets)
    if (tgt < 0 || tgt >= n) throw ArgumentError("cross_entropy: target " + std::to_string(tgt) + " out of range");

  const double off = n > 1 ? smoothing / static_cast<double>(n - 1) : 0.0;
  RowMatrix probs(b, n);
  double loss = 0.0;
  const auto x = lv.mat();
  for (Index r = 0; r < b; ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    probs.row(r) = (x.row(r).array() - lse).exp().matrix();
    const double on = 1.0 - smoothing;
    const Index tgt = targets[static_cast<std::size_t>(r)];
    const double sum_logp = (x.row(r).array() - lse).sum();
    const double logp_t = x(r, tgt) - lse;
    loss -= on * logp_t + off * (sum_logp - logp_t);
  }
  loss /= static_cast<double>(b);
  std::vector<Index> tg(targets.begin(), targets.end());
  return tape.record(Tensor::scalar(loss), {logits},
                     [logits, probs, tg, smoothing, off, b](Tape& t, std::int32_t self) {
                       if (!t.requires_grad(logits.id)) return;
                       const double g = t.grad(self).item() / static_cast<double>(b);
                       auto gl = t.grad(logits.id).mat();
                       for (Index r = 0; r < b; ++r) {
                         gl.row(r).array() += g * (probs.row(r).array() - off);
                         gl(r, tg[static_cast<std::size_t>(r)]) -= g * (1.0 - smoothing - off);
                       }
                     });
}

}  // namespace hypermono::ad
