#include "aes/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace aes {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

static std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::vec(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::row(std::vector<double> v) {
  Shape s{1, v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  throw ShapeError("rows() needs a rank-1/2 tensor, got " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  throw ShapeError("cols() needs a rank-1/2 tensor, got " + shape_str(shape_));
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw ShapeError("expected scalar, got " + shape_str(shape_));
  }
  return data_[0];
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor t_scale(const Tensor& a, double s) {
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
  return c;
}

void t_axpy(Tensor& y, double a, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

Tensor mat_mul(const Tensor& a, const Tensor& b) {
  std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  Tensor c(Shape{m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cp + i * n;
    const double* arow = ap + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = bp + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor mat_mul_nt(const Tensor& a, const Tensor& b) {
  std::size_t m = a.rows(), k = a.cols(), n = b.rows(), k2 = b.cols();
  if (k != k2) {
    throw ShapeError("matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()) + " transposed");
  }
  Tensor c(Shape{m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = ap + i * k;
    double* crow = cp + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = bp + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] = acc;
    }
  }
  return c;
}

Tensor mat_mul_tn(const Tensor& a, const Tensor& b) {
  std::size_t k = a.rows(), m = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw ShapeError("matmul_tn: inner extents differ, " + shape_str(a.shape()) +
                     " transposed vs " + shape_str(b.shape()));
  }
  Tensor c(Shape{m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (std::size_t t = 0; t < k; ++t) {
    const double* arow = ap + t * m;
    const double* brow = bp + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = cp + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  std::size_t m = a.rows(), n = a.cols();
  Tensor c(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c.at(j, i) = a.at(i, j);
  return c;
}

Tensor rand_normal_tensor(Rng& rng, Shape shape, double mean, double sd) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rand_normal(rng, mean, sd);
  return t;
}

Tensor rand_uniform_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rand_uniform(rng, lo, hi);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace aes
