#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "aes/errors.hpp"
#include "aes/rng.hpp"

namespace aes {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense n-dimensional array of 64-bit floats, row-major. Tensors are plain
// values; all model state that needs identity lives in ParamStore.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);  // shape {n}
  static Tensor row(std::vector<double> v);  // shape {1, n}
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // 2-D view; rank-1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& raw() const { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double scalar_value() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise and matrix helpers over plain tensors. The differentiable
// layer in ops.hpp builds on these.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double s);
void t_axpy(Tensor& y, double a, const Tensor& x);  // y += a * x

Tensor mat_mul(const Tensor& a, const Tensor& b);     // a (m×k) · b (k×n)
Tensor mat_mul_nt(const Tensor& a, const Tensor& b);  // a (m×k) · bᵀ (n×k)
Tensor mat_mul_tn(const Tensor& a, const Tensor& b);  // aᵀ (k×m) · b (k×n)
Tensor transpose(const Tensor& a);

Tensor rand_normal_tensor(Rng& rng, Shape shape, double mean, double sd);
Tensor rand_uniform_tensor(Rng& rng, Shape shape, double lo, double hi);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace aes
