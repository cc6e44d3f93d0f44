#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace mss {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

// Error hierarchy. Every error names where it happened in its message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, index out of range, bad argument.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Non-finite state during nonlinear integration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, Index step) : Error(what), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

/// Projector requested along a vanishing vector field (trajectory at a fixed point).
class DegenerateProjectorError : public Error {
 public:
  using Error::Error;
};

/// Krylov iteration produced a non-finite or non-positive quantity.
class BreakdownError : public Error {
 public:
  BreakdownError(const std::string& what, int iteration) : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

struct CheckpointTag {};
struct SegmentTag {};

/// A stack of equally sized state blocks stored as the columns of a dense matrix.
///
/// Column-major storage makes the flattened view block-major, i.e. the flat vector
/// is [block_0; block_1; ...], which is the ordering used for dense assembly.
/// The tag keeps checkpoint stacks (K+1 blocks) and segment stacks (K blocks) apart.
template <typename Scalar, typename Tag>
class BlockStack {
 public:
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BlockStack() = default;
  BlockStack(Index dimension, Index blocks) : data_(MatrixType::Zero(dimension, blocks)) {}
  explicit BlockStack(MatrixType data) : data_(std::move(data)) {}

  static BlockStack Zero(Index dimension, Index blocks) { return BlockStack(dimension, blocks); }

  static BlockStack FromFlat(const Eigen::Ref<const VectorType>& flat, Index dimension) {
    require(dimension > 0 && flat.size() % dimension == 0, "BlockStack::FromFlat: size not a multiple of dimension");
    MatrixType m = Eigen::Map<const MatrixType>(flat.data(), dimension, flat.size() / dimension);
    return BlockStack(std::move(m));
  }

  Index dimension() const { return data_.rows(); }
  Index blocks() const { return data_.cols(); }
  Index size() const { return data_.size(); }

  auto block(Index i) { return data_.col(i); }
  auto block(Index i) const { return data_.col(i); }

  MatrixType& matrix() { return data_; }
  const MatrixType& matrix() const { return data_; }

  Eigen::Map<const VectorType> flat() const { return Eigen::Map<const VectorType>(data_.data(), data_.size()); }
  Eigen::Map<VectorType> flat() { return Eigen::Map<VectorType>(data_.data(), data_.size()); }

  bool allFinite() const { return data_.allFinite(); }
  Scalar norm() const { return data_.norm(); }

  BlockStack& operator+=(const BlockStack& o) {
    check_shape(o);
    data_ += o.data_;
    return *this;
  }
  BlockStack& operator-=(const BlockStack& o) {
    check_shape(o);
    data_ -= o.data_;
    return *this;
  }
  BlockStack& operator*=(Scalar a) {
    data_ *= a;
    return *this;
  }

  friend BlockStack operator+(BlockStack a, const BlockStack& b) { return a += b; }
  friend BlockStack operator-(BlockStack a, const BlockStack& b) { return a -= b; }
  friend BlockStack operator*(Scalar s, BlockStack a) { return a *= s; }
  friend BlockStack operator*(BlockStack a, Scalar s) { return a *= s; }
  friend BlockStack operator-(BlockStack a) { return a *= Scalar(-1); }

  friend Scalar inner(const BlockStack& a, const BlockStack& b) {
    a.check_shape(b);
    return a.flat().dot(b.flat());
  }

 private:
  void check_shape(const BlockStack& o) const {
    require(o.data_.rows() == data_.rows() && o.data_.cols() == data_.cols(), "BlockStack: shape mismatch");
  }

  MatrixType data_;
};

template <typename Scalar>
using CheckpointStackT = BlockStack<Scalar, CheckpointTag>;
template <typename Scalar>
using SegmentStackT = BlockStack<Scalar, SegmentTag>;

/// v_0 ... v_K, one block per checkpoint.
using CheckpointStack = CheckpointStackT<double>;
/// w_1 ... w_K (or b_1 ... b_K), one block per segment.
using SegmentStack = SegmentStackT<double>;

template <typename Derived>
typename Derived::Scalar inner(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  return a.dot(b);
}

}  // namespace mss
