#include "bclab/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bclab {

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};

bool is_prob(double x) { return x >= 0.0 && x <= 1.0; }

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw std::invalid_argument(path + ": " + what);
}

double require_number(const nlohmann::json& j, const char* key, const std::string& path) {
  const std::string field = path + "." + key;
  if (!j.contains(key)) schema_error(field, "missing");
  if (!j.at(key).is_number()) schema_error(field, "expected a number");
  return j.at(key).get<double>();
}

double require_prob(const nlohmann::json& j, const char* key, const std::string& path) {
  const double v = require_number(j, key, path);
  if (!is_prob(v)) schema_error(path + "." + key, "must lie in [0,1]");
  return v;
}

}  // namespace

void validate(const MarginSpec& spec) {
  switch (spec.kind) {
    case MarginSpec::Kind::constant:
      if (!is_prob(spec.c)) throw std::invalid_argument("constant margin must lie in [0,1]");
      break;
    case MarginSpec::Kind::harmonic:
    case MarginSpec::Kind::reciprocal_log:
      if (!(spec.c >= 0.0) || std::isinf(spec.c)) {
        throw std::invalid_argument("margin scale c must be finite and >= 0");
      }
      break;
    case MarginSpec::Kind::table:
      for (std::size_t i = 0; i < spec.values.size(); ++i) {
        if (!is_prob(spec.values[i])) {
          throw std::invalid_argument("table margin entry " + std::to_string(i + 1) + " not in [0,1]");
        }
      }
      break;
  }
}

double margin_value(const MarginSpec& spec, std::size_t n) {
  if (n == 0) throw std::invalid_argument("margin_value: index must be >= 1");
  switch (spec.kind) {
    case MarginSpec::Kind::constant:
      return spec.c;
    case MarginSpec::Kind::harmonic:
      return std::min(1.0, spec.c / static_cast<double>(n));
    case MarginSpec::Kind::reciprocal_log:
      return std::min(1.0, spec.c / std::log(static_cast<double>(n) + 2.0));
    case MarginSpec::Kind::table:
      if (n > spec.values.size()) {
        throw std::out_of_range("margin_value: index " + std::to_string(n) + " beyond table of length " +
                                std::to_string(spec.values.size()));
      }
      return spec.values[n - 1];
  }
  return 0.0;
}

double bounded_joint(double p, double e, double coupling) {
  const double lo = std::max(0.0, p + e - 1.0);
  const double hi = std::min(p, e);
  return std::clamp(std::min(1.0, coupling) * p * e, lo, hi);
}

void validate(const Scenario& scenario) {
  std::visit(overloaded{
                 [](const IndependentContamination& s) {
                   validate(s.p);
                   validate(s.e);
                 },
                 [](const FixedContaminator& s) {
                   validate(s.p);
                   if (!is_prob(s.p_event)) throw std::invalid_argument("pE must lie in [0,1]");
                 },
                 [](const Absorbing& s) {
                   validate(s.p);
                   if (!is_prob(s.p_event)) throw std::invalid_argument("pE must lie in [0,1]");
                 },
                 [](const BoundedDependence& s) {
                   validate(s.p);
                   validate(s.e);
                   if (!(s.coupling >= 0.0) || std::isinf(s.coupling)) {
                     throw std::invalid_argument("C must be finite and >= 0");
                   }
                 },
             },
             scenario);
}

std::string variant_name(const Scenario& scenario) {
  static constexpr const char* names[] = {"independent", "fixed", "absorbing", "bounded"};
  return names[scenario.index()];
}

bool has_trial_event(const Scenario& scenario) {
  return std::holds_alternative<FixedContaminator>(scenario) || std::holds_alternative<Absorbing>(scenario);
}

StepLaw step_law(const Scenario& scenario, std::size_t n) {
  return std::visit(overloaded{
                        [n](const IndependentContamination& s) {
                          const double p = margin_value(s.p, n);
                          const double e = margin_value(s.e, n);
                          return StepLaw{p, e, p * e};
                        },
                        [n](const FixedContaminator& s) {
                          const double p = margin_value(s.p, n);
                          return StepLaw{p, s.p_event, p * s.p_event};
                        },
                        [n](const Absorbing& s) {
                          const double p = margin_value(s.p, n);
                          return StepLaw{p, s.p_event, p * s.p_event};
                        },
                        [n](const BoundedDependence& s) {
                          const double p = margin_value(s.p, n);
                          const double e = margin_value(s.e, n);
                          return StepLaw{p, e, bounded_joint(p, e, s.coupling)};
                        },
                    },
                    scenario);
}

double analytic_pa(const Scenario& scenario, std::size_t n) { return step_law(scenario, n).p_a; }

double analytic_pe(const Scenario& scenario, std::size_t n) {
  const StepLaw law = step_law(scenario, n);
  // E_n = E & A_n
  if (std::holds_alternative<Absorbing>(scenario)) return law.p_ae;
  return law.p_e;
}

double analytic_pB(const Scenario& scenario, std::size_t n) { return step_law(scenario, n).p_b(); }

TrialState begin_trial(const Scenario& scenario, const CounterStream& stream) {
  TrialState state;
  const double u = stream.uniform(DrawLayout::kTrialEvent);
  if (const auto* f = std::get_if<FixedContaminator>(&scenario)) state.event = u < f->p_event;
  if (const auto* a = std::get_if<Absorbing>(&scenario)) state.event = u < a->p_event;
  return state;
}

StepOutcome sample_step(const Scenario& scenario, std::size_t n, const TrialState& state,
                        const CounterStream& stream) {
  const StepLaw law = step_law(scenario, n);
  const std::uint64_t base = DrawLayout::step(n);
  const double u1 = stream.uniform(base);
  const double u2 = stream.uniform(base + 1);
  return std::visit([&](const auto& s) { return sample_step(s, law, state, u1, u2); }, scenario);
}

MarginSpec margin_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  if (!j.contains("kind") || !j.at("kind").is_string()) schema_error(path + ".kind", "missing or not a string");
  const std::string kind = j.at("kind").get<std::string>();
  MarginSpec spec;
  if (kind == "constant") {
    spec = MarginSpec::constant(require_prob(j, "c", path));
  } else if (kind == "harmonic" || kind == "reciprocal_log") {
    const double c = require_number(j, "c", path);
    if (!(c >= 0.0)) schema_error(path + ".c", "must be >= 0");
    spec = kind == "harmonic" ? MarginSpec::harmonic(c) : MarginSpec::reciprocal_log(c);
  } else if (kind == "table") {
    if (!j.contains("values") || !j.at("values").is_array()) schema_error(path + ".values", "expected an array");
    std::vector<double> values;
    const auto& arr = j.at("values");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string field = path + ".values[" + std::to_string(i) + "]";
      if (!arr[i].is_number()) schema_error(field, "expected a number");
      const double v = arr[i].get<double>();
      if (!is_prob(v)) schema_error(field, "must lie in [0,1]");
      values.push_back(v);
    }
    spec = MarginSpec::table(std::move(values));
  } else {
    schema_error(path + ".kind", "unknown margin kind '" + kind + "'");
  }
  return spec;
}

Scenario scenario_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  if (!j.contains("variant") || !j.at("variant").is_string()) {
    schema_error(path + ".variant", "missing or not a string");
  }
  const std::string variant = j.at("variant").get<std::string>();
  auto margin = [&](const char* key) {
    if (!j.contains(key)) schema_error(path + "." + key, "missing");
    return margin_from_json(j.at(key), path + "." + key);
  };
  Scenario scenario;
  if (variant == "independent") {
    scenario = IndependentContamination{margin("p"), margin("e")};
  } else if (variant == "fixed") {
    scenario = FixedContaminator{margin("p"), require_prob(j, "pE", path)};
  } else if (variant == "absorbing") {
    scenario = Absorbing{margin("p"), require_prob(j, "pE", path)};
  } else if (variant == "bounded") {
    const double c = require_number(j, "C", path);
    if (!(c >= 0.0)) schema_error(path + ".C", "must be >= 0");
    scenario = BoundedDependence{margin("p"), margin("e"), c};
  } else {
    schema_error(path + ".variant", "unknown variant '" + variant + "'");
  }
  return scenario;
}

nlohmann::json to_json(const MarginSpec& spec) {
  switch (spec.kind) {
    case MarginSpec::Kind::constant:
      return {{"kind", "constant"}, {"c", spec.c}};
    case MarginSpec::Kind::harmonic:
      return {{"kind", "harmonic"}, {"c", spec.c}};
    case MarginSpec::Kind::reciprocal_log:
      return {{"kind", "reciprocal_log"}, {"c", spec.c}};
    case MarginSpec::Kind::table:
      return {{"kind", "table"}, {"values", spec.values}};
  }
  return {};
}

nlohmann::json to_json(const Scenario& scenario) {
  nlohmann::json j = std::visit(overloaded{
                                    [](const IndependentContamination& s) {
                                      return nlohmann::json{{"p", to_json(s.p)}, {"e", to_json(s.e)}};
                                    },
                                    [](const FixedContaminator& s) {
                                      return nlohmann::json{{"p", to_json(s.p)}, {"pE", s.p_event}};
                                    },
                                    [](const Absorbing& s) {
                                      return nlohmann::json{{"p", to_json(s.p)}, {"pE", s.p_event}};
                                    },
                                    [](const BoundedDependence& s) {
                                      return nlohmann::json{
                                          {"p", to_json(s.p)}, {"e", to_json(s.e)}, {"C", s.coupling}};
                                    },
                                },
                                scenario);
  j["variant"] = variant_name(scenario);
  return j;
}

}  // namespace bclab
