#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ebmcot {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything this
// project needs; a scalar is a rank-1 tensor with one entry.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }

  // rank-2 accessors; throw on rank mismatch
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double item() const;  // requires numel() == 1

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double max_abs() const;
  std::string shape_str() const;  // e.g. "[3, 4]", for error messages

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// in-place y += s * x, shapes must match
void axpy(Tensor& y, double s, const Tensor& x);

// C = A * B for rank-2 tensors
Tensor matmul_values(const Tensor& a, const Tensor& b);

}  // namespace ebmcot
