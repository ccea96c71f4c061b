#include "bclab/bcsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace bclab {

namespace {

constexpr std::size_t kBlock = 4096;
constexpr std::int64_t kNoSlot = -1;

// Everything a work unit needs, shared read-only between workers.
struct RunContext {
  const Scenario* scenario = nullptr;
  const ThinningPlan* plan = nullptr;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> grid;
  std::vector<std::size_t> checkpoints;
};

// Output slices for one contiguous range of trials.
struct TaskSink {
  std::span<TrialRecord> records;
  std::span<std::uint64_t> checkpoint_counts;  // trials x checkpoints, row-major
  std::vector<IndexCounts>* counts = nullptr;  // worker-local, nullptr to skip
};

template <class Variant, bool Coupled>
void run_block(const Variant& variant, std::span<const StepLaw> laws, const double* q, std::size_t n0,
               const std::int64_t* slot, const std::int32_t* cp, const CounterStream& stream,
               const TrialState& state, TrialRecord& rec, IndexCounts* counts, std::uint64_t* cp_out) {
  for (std::size_t i = 0; i < laws.size(); ++i) {
    const std::size_t n = n0 + i;
    const std::uint64_t base = DrawLayout::step(n);
    const StepOutcome o = sample_step(variant, laws[i], state, stream.uniform(base), stream.uniform(base + 1));
    rec.count_a += o.a;
    rec.count_b += o.b;
    if (o.a) rec.last_a = n;
    bool keep = true;
    if constexpr (Coupled) {
      keep = stream.uniform(base + 2) <= q[i];
      rec.count_a_thin += o.a && keep;
      rec.count_d_thin += o.a && o.e && keep;
      rec.count_b_thin += o.b && keep;
    }
    if (counts != nullptr && slot[i] != kNoSlot) {
      IndexCounts& c = counts[slot[i]];
      c.a += o.a;
      c.e += o.e;
      c.b += o.b;
      if constexpr (Coupled) {
        c.a_thin += o.a && keep;
        c.d_thin += o.a && o.e && keep;
        c.b_thin += o.b && keep;
      }
    }
    if (cp[i] >= 0) cp_out[cp[i]] = rec.count_b;
  }
}

void process_trials(const RunContext& ctx, std::uint64_t first_trial, TaskSink sink) {
  const std::size_t n_trials = sink.records.size();
  const std::size_t n_cp = ctx.checkpoints.size();
  std::vector<CounterStream> streams;
  std::vector<TrialState> states;
  streams.reserve(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    streams.emplace_back(ctx.seed, first_trial + t);
    states.push_back(begin_trial(*ctx.scenario, streams.back()));
    sink.records[t] = TrialRecord{};
    sink.records[t].event = has_trial_event(*ctx.scenario) && states.back().event;
  }

  std::vector<StepLaw> laws(kBlock);
  std::vector<std::int64_t> slot(kBlock);
  std::vector<std::int32_t> cp(kBlock);
  auto grid_it = ctx.grid.begin();
  auto cp_it = ctx.checkpoints.begin();
  IndexCounts* counts = sink.counts != nullptr ? sink.counts->data() : nullptr;

  for (std::size_t n0 = 1; n0 <= ctx.horizon; n0 += kBlock) {
    const std::size_t len = std::min(kBlock, ctx.horizon - n0 + 1);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t n = n0 + i;
      laws[i] = step_law(*ctx.scenario, n);
      slot[i] = kNoSlot;
      if (grid_it != ctx.grid.end() && *grid_it == n) {
        slot[i] = grid_it - ctx.grid.begin();
        ++grid_it;
      }
      cp[i] = -1;
      while (cp_it != ctx.checkpoints.end() && *cp_it == n) {
        cp[i] = static_cast<std::int32_t>(cp_it - ctx.checkpoints.begin());
        ++cp_it;
      }
    }
    const std::span<const StepLaw> block(laws.data(), len);
    const double* q = ctx.plan != nullptr ? ctx.plan->q.data() + (n0 - 1) : nullptr;
    for (std::size_t t = 0; t < n_trials; ++t) {
      std::uint64_t* cp_out = n_cp > 0 ? sink.checkpoint_counts.data() + t * n_cp : nullptr;
      std::visit(
          [&](const auto& v) {
            if (q != nullptr) {
              run_block<std::decay_t<decltype(v)>, true>(v, block, q, n0, slot.data(), cp.data(), streams[t],
                                                         states[t], sink.records[t], counts, cp_out);
            } else {
              run_block<std::decay_t<decltype(v)>, false>(v, block, q, n0, slot.data(), cp.data(), streams[t],
                                                          states[t], sink.records[t], counts, cp_out);
            }
          },
          *ctx.scenario);
    }
  }
}

std::size_t nearest_rank(const std::vector<std::size_t>& sorted, double quantile) {
  if (sorted.empty()) return 0;
  const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

template <class Get>
CountStats stats_of(const std::vector<TrialRecord>& records, Get get) {
  std::vector<std::uint64_t> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(get(r));
  return count_stats(values);
}

TrialSummary run_impl(const Scenario& scenario, const ThinningPlan* plan, const TrialConfig& config) {
  validate(config);
  validate(scenario);
  // Table margins must cover the horizon; fail before any work starts.
  margin_value(std::visit([](const auto& s) -> const MarginSpec& { return s.p; }, scenario), config.horizon);
  if (const auto* ic = std::get_if<IndependentContamination>(&scenario)) margin_value(ic->e, config.horizon);
  if (const auto* bd = std::get_if<BoundedDependence>(&scenario)) margin_value(bd->e, config.horizon);
  if (plan != nullptr && plan->size() < config.horizon) {
    throw std::invalid_argument("run_with_coupling: plan covers " + std::to_string(plan->size()) +
                                " indices, horizon is " + std::to_string(config.horizon));
  }

  try {
    RunContext ctx;
    ctx.scenario = &scenario;
    ctx.plan = plan;
    ctx.horizon = config.horizon;
    ctx.seed = config.seed;
    ctx.grid = index_grid(config.horizon);
    ctx.checkpoints = config.checkpoints;

    const std::size_t n_cp = ctx.checkpoints.size();
    std::vector<TrialRecord> records(config.trials);
    std::vector<std::uint64_t> cp_counts(config.trials * n_cp);
    const std::size_t n_tasks = (config.trials + kTrialsPerTask - 1) / kTrialsPerTask;
    const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(config.workers, n_tasks));

    std::vector<std::vector<IndexCounts>> worker_counts(n_workers, std::vector<IndexCounts>(ctx.grid.size()));
    std::atomic<std::size_t> next_task{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&](unsigned w) {
      try {
        for (std::size_t task = next_task++; task < n_tasks; task = next_task++) {
          const std::size_t first = task * kTrialsPerTask;
          const std::size_t count = std::min(kTrialsPerTask, config.trials - first);
          TaskSink sink{std::span(records).subspan(first, count),
                        std::span(cp_counts).subspan(first * n_cp, count * n_cp), &worker_counts[w]};
          process_trials(ctx, first, sink);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next_task = n_tasks;
      }
    };
    if (n_workers <= 1) {
      worker(0);
    } else {
      std::vector<std::jthread> threads;
      for (unsigned w = 0; w < n_workers; ++w) threads.emplace_back(worker, w);
    }
    if (failure) std::rethrow_exception(failure);

    TrialSummary summary;
    summary.config = config;
    summary.coupled = plan != nullptr;
    summary.per_n.resize(ctx.grid.size());
    for (std::size_t i = 0; i < ctx.grid.size(); ++i) {
      IndexCounts& row = summary.per_n[i];
      row.n = ctx.grid[i];
      for (const auto& wc : worker_counts) {
        row.a += wc[i].a;
        row.e += wc[i].e;
        row.b += wc[i].b;
        row.a_thin += wc[i].a_thin;
        row.d_thin += wc[i].d_thin;
        row.b_thin += wc[i].b_thin;
      }
    }

    summary.count_a = stats_of(records, [](const TrialRecord& r) { return r.count_a; });
    summary.count_b = stats_of(records, [](const TrialRecord& r) { return r.count_b; });
    if (plan != nullptr) {
      summary.count_a_thin = stats_of(records, [](const TrialRecord& r) { return r.count_a_thin; });
      summary.count_d_thin = stats_of(records, [](const TrialRecord& r) { return r.count_d_thin; });
      summary.count_b_thin = stats_of(records, [](const TrialRecord& r) { return r.count_b_thin; });
    }
    summary.trials_without_b = static_cast<std::uint64_t>(
        std::count_if(records.begin(), records.end(), [](const TrialRecord& r) { return r.count_b == 0; }));

    std::vector<std::size_t> last_a;
    last_a.reserve(records.size());
    for (const auto& r : records) last_a.push_back(r.last_a);
    std::sort(last_a.begin(), last_a.end());
    summary.last_a = {nearest_rank(last_a, 0.5), nearest_rank(last_a, 0.9), nearest_rank(last_a, 0.99),
                      last_a.back()};

    if (has_trial_event(scenario)) {
      ConditionalStats cond;
      std::vector<std::uint64_t> with_event;
      std::vector<std::uint64_t> without_event;
      for (const auto& r : records) (r.event ? with_event : without_event).push_back(r.count_b);
      cond.trials_with_event = with_event.size();
      cond.count_b_given_event = count_stats(with_event);
      cond.count_b_given_no_event = count_stats(without_event);
      cond.zero_b_given_event =
          static_cast<std::uint64_t>(std::count(with_event.begin(), with_event.end(), std::uint64_t{0}));
      summary.conditional = std::move(cond);
    }

    for (std::size_t c = 0; c < n_cp; ++c) {
      std::vector<std::uint64_t> level(config.trials);
      std::vector<std::uint64_t> increment(config.trials);
      for (std::size_t t = 0; t < config.trials; ++t) {
        level[t] = cp_counts[t * n_cp + c];
        increment[t] = level[t] - (c > 0 ? cp_counts[t * n_cp + c - 1] : 0);
      }
      summary.checkpoints.push_back({ctx.checkpoints[c], count_stats(level), count_stats(increment)});
    }
    return summary;
  } catch (const std::bad_alloc&) {
    throw std::runtime_error("bcsim: out of memory for horizon " + std::to_string(config.horizon) + " and " +
                             std::to_string(config.trials) + " trials");
  }
}

}  // namespace

void validate(const TrialConfig& config) {
  if (config.horizon < 1) throw std::invalid_argument("trial config: horizon must be >= 1");
  if (config.trials < 1) throw std::invalid_argument("trial config: trials must be >= 1");
  if (config.workers < 1) throw std::invalid_argument("trial config: workers must be >= 1");
  for (std::size_t i = 0; i < config.checkpoints.size(); ++i) {
    const std::size_t c = config.checkpoints[i];
    if (c < 1 || c > config.horizon) {
      throw std::invalid_argument("trial config: checkpoint " + std::to_string(c) + " outside [1, horizon]");
    }
    if (i > 0 && c <= config.checkpoints[i - 1]) {
      throw std::invalid_argument("trial config: checkpoints must be strictly increasing");
    }
  }
}

std::vector<std::size_t> index_grid(std::size_t horizon) {
  std::vector<std::size_t> grid;
  if (horizon <= kDenseIndexLimit) {
    grid.resize(horizon);
    for (std::size_t n = 0; n < horizon; ++n) grid[n] = n + 1;
    return grid;
  }
  for (std::size_t n = 1; n <= 1000; ++n) grid.push_back(n);
  for (int j = 1;; ++j) {
    const auto n = static_cast<std::size_t>(std::llround(1000.0 * std::pow(1.01, j)));
    if (n >= horizon) break;
    if (n > grid.back()) grid.push_back(n);
  }
  grid.push_back(horizon);
  return grid;
}

double CountStats::std_error() const {
  const std::uint64_t n = std::accumulate(histogram.begin(), histogram.end(), std::uint64_t{0});
  return n > 0 ? std::sqrt(variance / static_cast<double>(n)) : 0.0;
}

CountStats count_stats(std::span<const std::uint64_t> values) {
  CountStats s;
  s.histogram.assign(kHistogramBins, 0);
  if (values.empty()) return s;
  s.min = values[0];
  s.max = values[0];
  for (std::uint64_t v : values) {
    s.total += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    ++s.histogram[std::min<std::uint64_t>(v, kHistogramBins - 1)];
  }
  const double n = static_cast<double>(values.size());
  s.mean = static_cast<double>(s.total) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (std::uint64_t v : values) {
      const double d = static_cast<double>(v) - s.mean;
      ss += d * d;
    }
    s.variance = ss / (n - 1.0);
  }
  return s;
}

TrialSummary run(const Scenario& scenario, const TrialConfig& config) {
  return run_impl(scenario, nullptr, config);
}

TrialSummary run_with_coupling(const Scenario& scenario, const ThinningPlan& plan, const TrialConfig& config) {
  return run_impl(scenario, &plan, config);
}

TrialRecord simulate_trial(const Scenario& scenario, const ThinningPlan* plan, std::size_t horizon,
                           std::uint64_t seed, std::uint64_t trial) {
  if (plan != nullptr && plan->size() < horizon) {
    throw std::invalid_argument("simulate_trial: plan shorter than horizon");
  }
  RunContext ctx;
  ctx.scenario = &scenario;
  ctx.plan = plan;
  ctx.horizon = horizon;
  ctx.seed = seed;
  TrialRecord record;
  process_trials(ctx, trial, TaskSink{std::span(&record, 1), {}, nullptr});
  return record;
}

nlohmann::json to_json(const CountStats& stats) {
  return {{"mean", stats.mean}, {"variance", stats.variance}, {"min", stats.min},
          {"max", stats.max},   {"total", stats.total},       {"histogram", stats.histogram}};
}

nlohmann::json to_json(const TrialSummary& summary, bool include_per_n) {
  nlohmann::json j;
  j["trials"] = summary.config.trials;
  j["horizon"] = summary.config.horizon;
  j["coupled"] = summary.coupled;
  j["cumulative"] = {{"count_a", to_json(summary.count_a)},
                     {"count_b", to_json(summary.count_b)},
                     {"trials_without_b", summary.trials_without_b},
                     {"last_a_index",
                      {{"p50", summary.last_a.p50},
                       {"p90", summary.last_a.p90},
                       {"p99", summary.last_a.p99},
                       {"max", summary.last_a.max}}}};
  if (summary.coupled) {
    j["cumulative"]["count_a_thin"] = to_json(*summary.count_a_thin);
    j["cumulative"]["count_d_thin"] = to_json(*summary.count_d_thin);
    j["cumulative"]["count_b_thin"] = to_json(*summary.count_b_thin);
  }
  if (summary.conditional) {
    const auto& c = *summary.conditional;
    j["conditional"] = {{"trials_with_event", c.trials_with_event},
                        {"zero_b_given_event", c.zero_b_given_event},
                        {"count_b_given_event", to_json(c.count_b_given_event)},
                        {"count_b_given_no_event", to_json(c.count_b_given_no_event)}};
  }
  if (!summary.checkpoints.empty()) {
    auto& arr = j["checkpoints"] = nlohmann::json::array();
    for (const auto& c : summary.checkpoints) {
      arr.push_back({{"n", c.n}, {"count_b", to_json(c.count_b)}, {"increment_b", to_json(c.increment_b)}});
    }
  }
  if (include_per_n) {
    auto& rows = j["per_n"] = nlohmann::json::array();
    for (const auto& r : summary.per_n) {
      nlohmann::json row = {{"n", r.n}, {"freqA", summary.freq(r.a)}, {"freqE", summary.freq(r.e)},
                            {"freqB", summary.freq(r.b)}};
      if (summary.coupled) {
        row["freqA_thin"] = summary.freq(r.a_thin);
        row["freqD_thin"] = summary.freq(r.d_thin);
        row["freqB_thin"] = summary.freq(r.b_thin);
      }
      rows.push_back(std::move(row));
    }
  }
  return j;
}

}  // namespace bclab
