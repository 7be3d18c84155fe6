#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace safestab {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, invalid parameters, or a scenario that violates
/// the standing assumptions.
class ConfigurationError : public Error
{
public:
  using Error::Error;
};

/// A non-finite value appeared while evaluating a named quantity.
class NumericError : public Error
{
public:
  NumericError(std::string field, const std::string & what)
      : Error(what), field_(std::move(field))
  {}

  const std::string & field() const noexcept { return field_; }

private:
  std::string field_;
};

/// A hard constraint with zero normal had to be enforced.
class SingularConstraintError : public Error
{
public:
  using Error::Error;
};

class InfeasibleError : public Error
{
public:
  using Error::Error;
};

/// Axis-aligned box [lower, upper].
template <typename Scalar>
struct Box
{
  VectorX<Scalar> lower;
  VectorX<Scalar> upper;

  Index dim() const { return lower.size(); }

  bool contains(const VectorX<Scalar> & x) const
  {
    return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }

  VectorX<Scalar> corner(unsigned mask) const
  {
    VectorX<Scalar> c(dim());
    for (Index i = 0; i < dim(); ++i) c[i] = (mask >> i) & 1u ? upper[i] : lower[i];
    return c;
  }

  static Box symmetric(Index n, Scalar half_width)
  {
    return Box{VectorX<Scalar>::Constant(n, -half_width), VectorX<Scalar>::Constant(n, half_width)};
  }
};

inline std::string format_vector(const Eigen::Ref<const Eigen::VectorXd> & x)
{
  std::string out = "(";
  for (Index i = 0; i < x.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(x[i]);
  }
  return out + ")";
}

}  // namespace safestab
