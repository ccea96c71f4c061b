#ifndef BCLAB_THINNING_HPP
#define BCLAB_THINNING_HPP

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <vector>

namespace bclab {

/// Dyadic level k of a coefficient: a' = 2^{-k}. kInfiniteLevel marks a = 0.
using DyadicLevel = int;
inline constexpr DyadicLevel kInfiniteLevel = std::numeric_limits<int>::max();

/**
 * Level k with a in [2^{-k}, 2^{-k+1}) for 0 < a < 1, 0 for a >= 1 and
 * kInfiniteLevel for a = 0. Throws std::invalid_argument for a < 0 or NaN.
 */
DyadicLevel dyadic_level(double a);

/// 2^{-k}, with 0 for kInfiniteLevel.
double level_value(DyadicLevel k);

struct ThinningInput {
  std::vector<double> p;  ///< weights in [0,1]
  std::vector<double> a;  ///< non-negative coefficients
};

struct ThinningPlan {
  std::vector<DyadicLevel> levels;
  std::map<DyadicLevel, double> bucket_mass;  ///< P_k over finite levels
  std::vector<double> p_thinned;
  std::vector<double> q;  ///< retention ratios p'_n / p_n, 1 where p_n = 0

  std::size_t size() const { return p_thinned.size(); }

  /// Sum of p'_n a'_n; at most 2 for every input.
  double weighted_bound() const;
};

/// Throws std::invalid_argument on length mismatch or out-of-range entries.
void validate(const ThinningInput& input);

/**
 * Dyadic thinning of a finite prefix.
 *
 * Coefficients are rounded down to their dyadic level, weights are summed
 * per level, and every level whose mass P_k exceeds 1 is rescaled by 1/P_k.
 * Levels with mass at most 1, and the a = 0 level, are left untouched.
 * Bucket masses use Neumaier-compensated left-to-right summation.
 */
ThinningPlan build_plan(const ThinningInput& input);

/// Compensated left-to-right sum.
double compensated_sum(std::span<const double> v);

}  // namespace bclab

#endif  // BCLAB_THINNING_HPP
