#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecw {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Dense rank-4 tensor with a single square dimension, row-major layout.
template <class Scalar>
class Tensor4T {
 public:
  Tensor4T() = default;
  explicit Tensor4T(int n) : n_(n), v_(static_cast<std::size_t>(n) * n * n * n, Scalar{0}) {}

  int dim() const { return n_; }
  bool empty() const { return v_.empty(); }

  Scalar& operator()(int p, int q, int r, int s) { return v_[idx(p, q, r, s)]; }
  const Scalar& operator()(int p, int q, int r, int s) const { return v_[idx(p, q, r, s)]; }

  const std::vector<Scalar>& data() const { return v_; }
  std::vector<Scalar>& data() { return v_; }

  void setZero() { std::fill(v_.begin(), v_.end(), Scalar{0}); }

 private:
  std::size_t idx(int p, int q, int r, int s) const {
    return ((static_cast<std::size_t>(p) * n_ + q) * n_ + r) * n_ + s;
  }
  int n_ = 0;
  std::vector<Scalar> v_;
};

using Tensor4 = Tensor4T<double>;
using CTensor4 = Tensor4T<std::complex<double>>;

// Error taxonomy. Everything derives from std::runtime_error so callers can
// catch broadly; the distinct types exist for the CLI exit-code mapping and
// for tests that pin specific failure modes.

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankDeficiencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_square(const Mat& m, int dim, const std::string& what) {
  if (m.rows() != dim || m.cols() != dim)
    throw DimensionError(what + ": expected " + std::to_string(dim) + "x" + std::to_string(dim) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

}  // namespace ecw
