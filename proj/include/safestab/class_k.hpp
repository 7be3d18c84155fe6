#pragma once

#include <cmath>
#include <functional>
#include <variant>

#include "safestab/core.hpp"

namespace safestab {

/**
 * Extended class-K function used in the barrier inequality.
 *
 * The power-law form is extended to negative arguments as an odd function,
 * k * sign(s) * |s|^p, so the barrier condition stays well defined outside
 * the safe set.
 */
template <typename Scalar>
class ClassKFunction
{
public:
  struct Linear
  {
    Scalar slope;
  };
  struct PowerLaw
  {
    Scalar coefficient;
    Scalar exponent;
  };
  struct Custom
  {
    std::function<Scalar(Scalar)> fn;
  };

  using Kind = std::variant<Linear, PowerLaw, Custom>;

  static ClassKFunction linear(Scalar slope)
  {
    if (!(slope > Scalar(0))) throw ConfigurationError("class-K slope must be positive");
    return ClassKFunction(Linear{slope});
  }

  static ClassKFunction power_law(Scalar coefficient, Scalar exponent)
  {
    if (!(coefficient > Scalar(0)) || !(exponent > Scalar(0))) {
      throw ConfigurationError("class-K power law needs positive coefficient and exponent");
    }
    return ClassKFunction(PowerLaw{coefficient, exponent});
  }

  static ClassKFunction custom(std::function<Scalar(Scalar)> fn)
  {
    if (!fn) throw ConfigurationError("custom class-K function is empty");
    return ClassKFunction(Custom{std::move(fn)});
  }

  Scalar operator()(Scalar s) const
  {
    using std::abs;
    using std::pow;
    return std::visit(
        [s](const auto & k) -> Scalar {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Linear>) {
            return k.slope * s;
          } else if constexpr (std::is_same_v<K, PowerLaw>) {
            const Scalar mag = k.coefficient * pow(abs(s), k.exponent);
            return s < Scalar(0) ? -mag : mag;
          } else {
            return k.fn(s);
          }
        },
        kind_);
  }

  const Kind & kind() const { return kind_; }

private:
  explicit ClassKFunction(Kind kind) : kind_(std::move(kind)) {}

  Kind kind_;
};

}  // namespace safestab
