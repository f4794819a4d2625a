#include "ebmcot/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace ebmcot {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (shape.empty()) throw std::invalid_argument("tensor rank must be >= 1");
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_numel(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size())
    throw std::invalid_argument("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows() on tensor of shape " + shape_str());
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols() on tensor of shape " + shape_str());
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  if (rank() != 2) throw std::invalid_argument("at() on tensor of shape " + shape_str());
  return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::at(int r, int c) const {
  if (rank() != 2) throw std::invalid_argument("at() on tensor of shape " + shape_str());
  return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void axpy(Tensor& y, double s, const Tensor& x) {
  if (!y.same_shape(x))
    throw std::invalid_argument("axpy shape mismatch: " + y.shape_str() + " vs " + x.shape_str());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += s * x[i];
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c({n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < k; ++l) {
      const double av = pa[static_cast<std::size_t>(i) * k + l];
      const double* brow = pb + static_cast<std::size_t>(l) * m;
      double* crow = pc + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

}  // namespace ebmcot
