#pragma once

#include <cmath>
#include <string>

#include "incrementa/errors.hpp"

namespace incrementa {

/// Outcome transforms whose regression functions enter the loss-specific
/// pseudo-outcomes: identity and square for squared error, log1p and
/// log1p_square for squared logarithmic error, positive_indicator for
/// positive-class balance weights.
enum class TransformTag { identity, square, log1p, log1p_square, positive_indicator };

inline double apply_transform(TransformTag tag, double y) {
  switch (tag) {
    case TransformTag::identity: return y;
    case TransformTag::square: return y * y;
    case TransformTag::log1p: return std::log1p(y);
    case TransformTag::log1p_square: {
      const double t = std::log1p(y);
      return t * t;
    }
    case TransformTag::positive_indicator: return y > 0.0 ? 1.0 : 0.0;
  }
  throw_config("argument", "unknown transform tag");
}

inline std::string transform_name(TransformTag tag) {
  switch (tag) {
    case TransformTag::identity: return "identity";
    case TransformTag::square: return "square";
    case TransformTag::log1p: return "log1p";
    case TransformTag::log1p_square: return "log1p_square";
    case TransformTag::positive_indicator: return "positive_indicator";
  }
  return "?";
}

inline TransformTag transform_from_name(const std::string& name) {
  if (name == "identity") return TransformTag::identity;
  if (name == "square") return TransformTag::square;
  if (name == "log1p") return TransformTag::log1p;
  if (name == "log1p_square") return TransformTag::log1p_square;
  if (name == "positive_indicator") return TransformTag::positive_indicator;
  throw_config("argument", "unknown transform name '" + name + "'");
}

}  // namespace incrementa
