#ifndef BCLAB_LOGSPACE_HPP
#define BCLAB_LOGSPACE_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

/**
 * Log-domain probability arithmetic.
 *
 * Probabilities in this project span hundreds of orders of magnitude
 * (block sizes like e^{900}), so every probability is carried as its
 * natural logarithm. -inf is a legal value and means probability zero.
 */
namespace bclab {

/// Natural log of a probability; value in [-inf, 0].
struct LogProb {
  double value = 0.0;

  constexpr LogProb() = default;
  constexpr explicit LogProb(double v) : value(v) {}

  static constexpr LogProb one() { return LogProb(0.0); }
  static constexpr LogProb zero() { return LogProb(-std::numeric_limits<double>::infinity()); }

  double prob() const { return std::exp(value); }
  bool is_zero() const { return value == -std::numeric_limits<double>::infinity(); }

  friend constexpr auto operator<=>(LogProb, LogProb) = default;
};

inline LogProb lp_from_prob(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("lp_from_prob: probability out of [0,1]: " + std::to_string(p));
  }
  return LogProb(std::log(p));
}

/**
 * log(1 - e^x) with full relative precision.
 *
 * Above -log 2 the complement is small and is formed as log(-expm1(x));
 * below it e^x is small and log1p(-exp(x)) is exact to rounding.
 */
inline LogProb lp_complement(LogProb x) {
  const double v = x.value;
  if (v > 0.0 || std::isnan(v)) {
    throw std::invalid_argument("lp_complement: log-probability must be <= 0");
  }
  if (v == 0.0) return LogProb::zero();
  if (v > -std::numbers::ln2) return LogProb(std::log(-std::expm1(v)));
  return LogProb(std::log1p(-std::exp(v)));
}

/**
 * log(p^m) with m = e^{m_log}, evaluated as -exp(m_log + log(-x)) so the
 * power never materialises. Saturates to -inf when the product overflows.
 */
inline LogProb lp_pow(LogProb x, double m_log) {
  if (x.value > 0.0 || std::isnan(x.value)) {
    throw std::invalid_argument("lp_pow: log-probability must be <= 0");
  }
  if (x.value == 0.0) return LogProb::one();
  if (x.is_zero()) return LogProb::zero();
  return LogProb(-std::exp(m_log + std::log(-x.value)));
}

/// Fused power: x is given in product form x = -e^{log_neg_x}.
inline LogProb lp_pow_fused(double log_neg_x, double m_log) {
  return LogProb(-std::exp(m_log + log_neg_x));
}

/**
 * log(-log(1 - e^{-y})) for y > 0, i.e. log_neg_x of the log-probability
 * lp_complement(-y). For large y the inner value underflows, so the
 * expansion -y + e^{-y}/2 is used instead.
 */
inline double log_neg_log1m_exp(double y) {
  if (!(y > 0.0)) {
    throw std::invalid_argument("log_neg_log1m_exp: argument must be > 0");
  }
  if (y > 36.0) return -y + 0.5 * std::exp(-y);
  return std::log(-lp_complement(LogProb(-y)).value);
}

}  // namespace bclab

#endif  // BCLAB_LOGSPACE_HPP
