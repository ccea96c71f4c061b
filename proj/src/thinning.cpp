#include "bclab/thinning.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bclab {

namespace {

// Neumaier's variant of Kahan summation.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

}  // namespace

DyadicLevel dyadic_level(double a) {
  if (!(a >= 0.0)) {
    throw std::invalid_argument("dyadic_level: coefficient must be >= 0, got " + std::to_string(a));
  }
  if (a == 0.0) return kInfiniteLevel;
  if (a >= 1.0) return 0;
  // a = f * 2^e with f in [0.5, 1), so a lies in [2^{e-1}, 2^e).
  int e = 0;
  std::frexp(a, &e);
  return 1 - e;
}

double level_value(DyadicLevel k) {
  if (k == kInfiniteLevel) return 0.0;
  return std::ldexp(1.0, -k);
}

double compensated_sum(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value();
}

double ThinningPlan::weighted_bound() const {
  CompensatedSum s;
  for (std::size_t n = 0; n < p_thinned.size(); ++n) {
    s.add(p_thinned[n] * level_value(levels[n]));
  }
  return s.value();
}

void validate(const ThinningInput& input) {
  if (input.p.size() != input.a.size()) {
    throw std::invalid_argument("thinning input: p has " + std::to_string(input.p.size()) +
                                " entries but a has " + std::to_string(input.a.size()));
  }
  for (std::size_t n = 0; n < input.p.size(); ++n) {
    if (!(input.p[n] >= 0.0 && input.p[n] <= 1.0)) {
      throw std::invalid_argument("thinning input: p[" + std::to_string(n + 1) + "] not in [0,1]");
    }
    if (!(input.a[n] >= 0.0) || std::isinf(input.a[n])) {
      throw std::invalid_argument("thinning input: a[" + std::to_string(n + 1) +
                                  "] must be finite and >= 0");
    }
  }
}

ThinningPlan build_plan(const ThinningInput& input) {
  validate(input);
  const std::size_t n_total = input.p.size();

  ThinningPlan plan;
  plan.levels.resize(n_total);
  std::map<DyadicLevel, CompensatedSum> mass;
  for (std::size_t n = 0; n < n_total; ++n) {
    const DyadicLevel k = dyadic_level(input.a[n]);
    plan.levels[n] = k;
    if (k != kInfiniteLevel) mass[k].add(input.p[n]);
  }
  for (const auto& [k, s] : mass) plan.bucket_mass[k] = s.value();

  plan.p_thinned.resize(n_total);
  plan.q.resize(n_total);
  for (std::size_t n = 0; n < n_total; ++n) {
    const double p = input.p[n];
    double thinned = p;
    if (plan.levels[n] != kInfiniteLevel) {
      const double bucket = plan.bucket_mass[plan.levels[n]];
      if (bucket > 1.0) thinned = p / bucket;
    }
    plan.p_thinned[n] = thinned;
    plan.q[n] = p > 0.0 ? thinned / p : 1.0;
  }
  return plan;
}

}  // namespace bclab
