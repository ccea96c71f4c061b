#ifndef BCLAB_BCSIM_HPP
#define BCLAB_BCSIM_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "bclab/scenarios.hpp"
#include "bclab/thinning.hpp"

namespace bclab {

struct TrialConfig {
  std::size_t horizon = 1;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  /// Horizons at which per-trial cumulative B-counts are recorded (sorted, <= horizon).
  std::vector<std::size_t> checkpoints;
};

void validate(const TrialConfig& config);

/// Per-n counters are dense up to this horizon.
inline constexpr std::size_t kDenseIndexLimit = 1'000'000;

/**
 * Indices at which per-n frequencies are stored: every n <= horizon when
 * horizon <= kDenseIndexLimit; otherwise every n <= 1000, then the
 * rounded points 1000 * 1.01^j, then the horizon itself.
 */
std::vector<std::size_t> index_grid(std::size_t horizon);

/// Trials are split into fixed-size work units; never depends on the worker count.
inline constexpr std::size_t kTrialsPerTask = 64;

/// Unit-width bins 0..kHistogramBins-2, the last bin collects the rest.
inline constexpr std::size_t kHistogramBins = 64;

struct CountStats {
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased sample variance
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> histogram;

  double std_error() const;
};

CountStats count_stats(std::span<const std::uint64_t> values);

struct IndexCounts {
  std::size_t n = 0;
  std::uint64_t a = 0;
  std::uint64_t e = 0;
  std::uint64_t b = 0;
  std::uint64_t a_thin = 0;
  std::uint64_t d_thin = 0;
  std::uint64_t b_thin = 0;
};

struct CheckpointStats {
  std::size_t n = 0;
  CountStats count_b;
  /// B-count over (previous checkpoint, n], per trial.
  CountStats increment_b;
};

struct ConditionalStats {
  std::uint64_t trials_with_event = 0;
  CountStats count_b_given_event;
  CountStats count_b_given_no_event;
  std::uint64_t zero_b_given_event = 0;
};

struct IndexQuantiles {
  std::size_t p50 = 0;
  std::size_t p90 = 0;
  std::size_t p99 = 0;
  std::size_t max = 0;
};

/// Outcome of one trial, as recorded by the engine.
struct TrialRecord {
  std::uint64_t count_a = 0;
  std::uint64_t count_b = 0;
  std::uint64_t count_a_thin = 0;
  std::uint64_t count_d_thin = 0;
  std::uint64_t count_b_thin = 0;
  std::size_t last_a = 0;  ///< last index with an A occurrence, 0 if none
  bool event = false;
};

struct TrialSummary {
  TrialConfig config;
  bool coupled = false;
  std::vector<IndexCounts> per_n;
  CountStats count_a;
  CountStats count_b;
  std::optional<CountStats> count_a_thin;
  std::optional<CountStats> count_d_thin;
  std::optional<CountStats> count_b_thin;
  IndexQuantiles last_a;
  std::uint64_t trials_without_b = 0;
  std::optional<ConditionalStats> conditional;
  std::vector<CheckpointStats> checkpoints;

  double freq(std::uint64_t count) const { return static_cast<double>(count) / static_cast<double>(config.trials); }
};

/**
 * Runs config.trials independent trials of the scenario over n = 1..horizon.
 *
 * Trial j draws from CounterStream(seed, j) following DrawLayout, so the
 * summary is bit-identical for any worker count.
 */
TrialSummary run(const Scenario& scenario, const TrialConfig& config);

/// As run(), with the retention uniforms U_n <= q_n of the plan reported as primed events.
TrialSummary run_with_coupling(const Scenario& scenario, const ThinningPlan& plan, const TrialConfig& config);

/// Single trial, exposed for per-trial invariant checks.
TrialRecord simulate_trial(const Scenario& scenario, const ThinningPlan* plan, std::size_t horizon,
                           std::uint64_t seed, std::uint64_t trial);

nlohmann::json to_json(const CountStats& stats);
nlohmann::json to_json(const TrialSummary& summary, bool include_per_n = true);

}  // namespace bclab

#endif  // BCLAB_BCSIM_HPP
