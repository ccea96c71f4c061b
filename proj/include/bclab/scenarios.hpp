#ifndef BCLAB_SCENARIOS_HPP
#define BCLAB_SCENARIOS_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bclab/rng.hpp"

namespace bclab {

/// Deterministic index law n -> probability, n >= 1.
struct MarginSpec {
  enum class Kind { constant, harmonic, reciprocal_log, table };

  Kind kind = Kind::constant;
  double c = 0.0;
  std::vector<double> values;  ///< table entries, values[0] is index 1

  static MarginSpec constant(double c) { return {Kind::constant, c, {}}; }
  static MarginSpec harmonic(double c) { return {Kind::harmonic, c, {}}; }
  static MarginSpec reciprocal_log(double c) { return {Kind::reciprocal_log, c, {}}; }
  static MarginSpec table(std::vector<double> v) { return {Kind::table, 0.0, std::move(v)}; }
};

void validate(const MarginSpec& spec);

/// harmonic: min(1, c/n); reciprocal_log: min(1, c/log(n+2)); table: values[n-1].
double margin_value(const MarginSpec& spec, std::size_t n);

/// A_n independent across n, E_n independent of A_n.
struct IndependentContamination {
  MarginSpec p;
  MarginSpec e;
};

/// One event E per trial, E_n = E for every n.
struct FixedContaminator {
  MarginSpec p;
  double p_event = 0.0;
};

/// One event E per trial, E_n = E & A_n.
struct Absorbing {
  MarginSpec p;
  double p_event = 0.0;
};

/**
 * Single-uniform joint law with P(A_n & E_n) = min(1, C) p_n e_n clipped
 * to the Frechet bounds [max(0, p+e-1), min(p, e)].
 */
struct BoundedDependence {
  MarginSpec p;
  MarginSpec e;
  double coupling = 0.0;  ///< the constant C >= 0
};

using Scenario = std::variant<IndependentContamination, FixedContaminator, Absorbing, BoundedDependence>;

void validate(const Scenario& scenario);
std::string variant_name(const Scenario& scenario);

/// True for variants that draw one event E per trial.
bool has_trial_event(const Scenario& scenario);

/// Exact marginal and joint probabilities of the events at one index.
struct StepLaw {
  double p_a = 0.0;
  double p_e = 0.0;   ///< P(E_n); for trial-event variants, the per-trial P(E) (see below)
  double p_ae = 0.0;  ///< P(A_n & E_n)

  double p_b() const { return p_a - p_ae; }
};

/**
 * Laws at index n. For FixedContaminator and Absorbing, p_e holds P(E),
 * the probability of the once-per-trial event, which the sampler needs;
 * analytic_pe gives the marginal P(E_n).
 */
StepLaw step_law(const Scenario& scenario, std::size_t n);

double analytic_pa(const Scenario& scenario, std::size_t n);
double analytic_pe(const Scenario& scenario, std::size_t n);
double analytic_pB(const Scenario& scenario, std::size_t n);

/// Clipped intersection probability used by BoundedDependence.
double bounded_joint(double p, double e, double coupling);

struct TrialState {
  bool event = false;  ///< the once-per-trial E, when the variant has one
};

struct StepOutcome {
  bool a = false;
  bool e = false;
  bool b = false;
};

/// Draw layout within a trial stream.
struct DrawLayout {
  static constexpr std::uint64_t kTrialEvent = 0;
  static constexpr std::uint64_t kPerStep = 3;

  /// First of the three draws of step n (1-based); the third is the coupling uniform.
  static constexpr std::uint64_t step(std::size_t n) { return 1 + kPerStep * (n - 1); }
};

TrialState begin_trial(const Scenario& scenario, const CounterStream& stream);

// Per-variant samplers on precomputed laws; u1, u2 are the two step draws.
inline StepOutcome sample_step(const IndependentContamination&, const StepLaw& law, const TrialState&,
                               double u1, double u2) {
  const bool a = u1 < law.p_a;
  const bool e = u2 < law.p_e;
  return {a, e, a && !e};
}

inline StepOutcome sample_step(const FixedContaminator&, const StepLaw& law, const TrialState& state,
                               double u1, double) {
  const bool a = u1 < law.p_a;
  return {a, state.event, a && !state.event};
}

inline StepOutcome sample_step(const Absorbing&, const StepLaw& law, const TrialState& state, double u1,
                               double) {
  const bool a = u1 < law.p_a;
  const bool e = state.event && a;
  return {a, e, a && !e};
}

inline StepOutcome sample_step(const BoundedDependence&, const StepLaw& law, const TrialState&, double u1,
                               double) {
  const bool a = u1 < law.p_a;
  const bool e = u1 < law.p_ae || (!a && u1 < law.p_a + (law.p_e - law.p_ae));
  return {a, e, a && !e};
}

/// Generic entry point: computes the law at n and consumes the two step draws of the stream.
StepOutcome sample_step(const Scenario& scenario, std::size_t n, const TrialState& state,
                        const CounterStream& stream);

// JSON schema: {"variant": "independent"|"fixed"|"absorbing"|"bounded",
//               "p": margin, "e": margin, "pE": prob, "C": real}
// margin: {"kind": "constant"|"harmonic"|"reciprocal_log"|"table", "c": real, "values": [...]}
Scenario scenario_from_json(const nlohmann::json& j, const std::string& path = "scenario");
nlohmann::json to_json(const Scenario& scenario);
MarginSpec margin_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const MarginSpec& spec);

}  // namespace bclab

#endif  // BCLAB_SCENARIOS_HPP
