#include "fhvae/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace fhvae {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_to_string(shape));
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  t.data.assign(t.data.size(), v);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor " + shape_to_string(shape) + " is not rank 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor " + shape_to_string(shape) + " is not rank 2");
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor " + shape_to_string(shape) + " is not a scalar");
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fhvae
