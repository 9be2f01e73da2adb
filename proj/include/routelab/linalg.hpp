#ifndef ROUTELAB_LINALG_HPP
#define ROUTELAB_LINALG_HPP

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace routelab {

using Vec = std::vector<double>;

// Dense row-major matrix. Everything here is desk scale (d <= 64), so a
// plain contiguous buffer beats any library dependency.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x
inline void matvec(const Mat& w, std::span<const double> x, std::span<double> y) {
  assert(x.size() == w.cols() && y.size() == w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.row(i).data();
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// y += W^T x
inline void matvec_transpose_add(const Mat& w, std::span<const double> x, std::span<double> y) {
  assert(x.size() == w.rows() && y.size() == w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.row(i).data();
    const double xi = x[i];
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += row[j] * xi;
  }
}

// G += u v^T
inline void add_outer(Mat& g, std::span<const double> u, std::span<const double> v) {
  assert(u.size() == g.rows() && v.size() == g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double* row = g.row(i).data();
    const double ui = u[i];
    for (std::size_t j = 0; j < g.cols(); ++j) row[j] += ui * v[j];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y += a x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace routelab

#endif  // ROUTELAB_LINALG_HPP
