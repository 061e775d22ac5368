#include "hypermono/tensor.hpp"

#include <random>
#include <sstream>

#include "hypermono/errors.hpp"

namespace hypermono::ad {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_ = Eigen::VectorXd::Constant(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m) {
  Tensor t(Shape{m.rows(), m.cols()});
  t.mat() = m;
  return t;
}

Tensor Tensor::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return Tensor(Shape{v.size()}, Eigen::VectorXd(v));
}

Tensor Tensor::from_values(std::initializer_list<double> values) {
  Tensor t(Shape{static_cast<Index>(values.size())});
  Index i = 0;
  for (double v : values) t[i++] = v;
  return t;
}

Index Tensor::extent(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

Parameter& ParameterStore::add(std::string name, Shape shape) {
  if (contains(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Tensor(shape);
  p->grad = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterStore::get(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

Index ParameterStore::scalar_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.data().setZero();
}

void ParameterStore::init_uniform(double range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  for (auto& p : params_)
    for (Index i = 0; i < p->value.size(); ++i) p->value[i] = dist(rng);
}

void ParameterStore::set_zero() {
  for (auto& p : params_) p->value.data().setZero();
}

}  // namespace hypermono::ad
