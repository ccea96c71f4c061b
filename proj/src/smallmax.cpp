#include "bclab/smallmax.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>

namespace bclab::smallmax {

namespace {

// Extended precision keeps the rounded t0 injective on doubles up to s ~ 1e8,
// which the inversion round trip relies on (slope of t0 is below 1 there).
long double analytic_t0_ext(double theta, long double s) {
  return s / std::pow(std::log(std::log(s)), static_cast<long double>(theta));
}

long double t0_ext(const DistParams& params, long double s) {
  if (s >= params.s_min) return analytic_t0_ext(params.theta, s);
  return s * (analytic_t0_ext(params.theta, params.s_min) / params.s_min);
}

double analytic_t0(double theta, double s) { return static_cast<double>(analytic_t0_ext(theta, s)); }

}  // namespace

void validate(const DistParams& params) {
  if (!(params.theta > 0.0 && params.theta < 1.0)) {
    throw std::invalid_argument("theta must lie in (0,1)");
  }
  if (!(params.s_min >= 10.0) || std::isinf(params.s_min)) {
    throw std::invalid_argument("s_min must be finite and >= 10");
  }
  if (!(params.inversion_tol > 0.0)) throw std::invalid_argument("inversion_tol must be > 0");
}

double t0(const DistParams& params, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("t0: s must be > 0");
  return static_cast<double>(t0_ext(params, s));
}

double t0_inv(const DistParams& params, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("t0_inv: t must be > 0");
  const double t_seam = analytic_t0(params.theta, params.s_min);
  if (t <= t_seam) return t * (params.s_min / t_seam);
  if (std::isinf(t)) return t;

  const long double target = t;
  double lo = params.s_min;
  double hi = 2.0 * params.s_min;
  while (t0_ext(params, hi) < target) {
    lo = hi;
    hi *= 2.0;
  }
  // Invariant: t0(lo) < t <= t0(hi).
  while (hi - lo > params.inversion_tol) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) {
      // Adjacent doubles; keep whichever maps closer to t.
      return std::abs(t0_ext(params, lo) - target) < std::abs(t0_ext(params, hi) - target) ? lo : hi;
    }
    if (t0_ext(params, mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo + 0.5 * (hi - lo);
}

LogProb log_tail(const DistParams& params, double t) { return LogProb(-t0_inv(params, t)); }

double checkpoint_s(std::size_t n) {
  const double x = static_cast<double>(n);
  return 2.0 * x * std::log(0.5 * std::log(x));
}

double checkpoint_sigma(std::size_t n) {
  if (n < 3) throw std::invalid_argument("checkpoint_sigma: n must be >= 3");
  const double x = static_cast<double>(n);
  const double log_prev = std::log(x - 1.0);
  // log(log n / log(n-1)) with log n - log(n-1) = -log1p(-1/n)
  const double dl = std::log1p(-std::log1p(-1.0 / x) / log_prev);
  return 2.0 * std::log(0.5 * log_prev) + 2.0 * x * dl;
}

std::size_t min_admissible_n(const DistParams& params) {
  std::size_t n = 3;
  while (checkpoint_s(n) < params.s_min) ++n;
  return n;
}

ScheduleRow schedule_row(const DistParams& params, std::size_t n) {
  ScheduleRow row;
  row.n = n;
  row.s = checkpoint_s(n);
  row.sigma = checkpoint_sigma(n);
  const double half = 0.5 * row.sigma;
  const double s_prev = row.s - row.sigma;
  row.log_mprime = row.s - half;
  row.t = t0(params, row.s);
  row.t_prime = t0(params, row.log_mprime);
  row.pi = std::exp(half);
  row.pe_bound = std::exp(-half);
  row.log_block = row.s + lp_complement(LogProb(-row.sigma)).value;

  // log(-log G(x_n)) where G(x_n) = 1 - e^{-log m'_n}
  const double log_neg_g = log_neg_log1m_exp(row.log_mprime);
  row.log_pb = lp_pow_fused(log_neg_g, row.s);
  row.pa = lp_pow_fused(log_neg_g, row.log_block).prob();
  row.pe = -std::expm1(lp_pow_fused(log_neg_g, s_prev).value);
  row.p_below_scale = lp_pow_fused(log_neg_log1m_exp(row.s), row.s).prob();
  return row;
}

std::vector<ScheduleRow> schedule(const DistParams& params, std::size_t n_min, std::size_t n_max) {
  validate(params);
  const std::size_t minimal = min_admissible_n(params);
  if (n_min < minimal) {
    throw std::invalid_argument("n_min = " + std::to_string(n_min) + " is inadmissible; smallest valid n_min is " +
                                std::to_string(minimal));
  }
  if (n_max < n_min) throw std::invalid_argument("n_max must be >= n_min");
  std::vector<ScheduleRow> rows;
  rows.reserve(n_max - n_min + 1);
  for (std::size_t n = n_min; n <= n_max; ++n) rows.push_back(schedule_row(params, n));
  return rows;
}

double sample_block_max_s(double log_blocksize, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("sample_block_max: u must lie in (0,1)");
  if (!(log_blocksize >= 0.0)) throw std::invalid_argument("sample_block_max: log_blocksize must be >= 0");
  const double log_u = std::log(u);
  // Solve (1 - e^{-s})^m = u: 1 - e^{-s} = u^{1/m}.
  const double y = std::exp(-log_blocksize) * log_u;
  if (std::abs(y) < 1e-8) return log_blocksize - std::log(-log_u);
  return -std::log(-std::expm1(y));
}

double sample_block_max_t(const DistParams& params, double log_blocksize, double u) {
  return t0(params, sample_block_max_s(log_blocksize, u));
}

std::vector<CheckpointRecord> run_maxima_trial(const DistParams& params, std::span<const ScheduleRow> rows,
                                               const CounterStream& stream) {
  std::vector<CheckpointRecord> out;
  if (rows.empty()) return out;
  out.reserve(rows.size());
  const double s_initial = rows.front().s - rows.front().sigma;
  double t_max = sample_block_max_t(params, s_initial, stream.uniform(0));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const ScheduleRow& row = rows[k];
    const double t_block = sample_block_max_t(params, row.log_block, stream.uniform(k + 1));
    CheckpointRecord rec;
    rec.n = row.n;
    rec.a = t_block <= row.t_prime;
    rec.e = t_max > row.t_prime;
    t_max = std::max(t_max, t_block);
    rec.b = t_max <= row.t_prime;
    if (rec.b != (rec.a && !rec.e)) throw std::logic_error("run_maxima_trial: B_n != A_n \\ E_n");
    rec.t_max = t_max;
    rec.gap = t_max - row.t;
    rec.below_scale = t_max <= row.t;
    out.push_back(rec);
  }
  return out;
}

namespace {

constexpr std::size_t kTrialsPerTask = 256;
constexpr std::size_t kGapBins = static_cast<std::size_t>(2 * kGapRange * kGapBinsPerUnit) + 2;

std::size_t gap_bin(double gap) {
  if (gap < -kGapRange) return 0;
  if (gap >= kGapRange) return kGapBins - 1;
  const auto i = static_cast<std::size_t>(std::floor((gap + kGapRange) * kGapBinsPerUnit));
  return std::min(i + 1, kGapBins - 2);
}

double gap_bin_center(std::size_t bin) {
  if (bin == 0) return -kGapRange;
  if (bin == kGapBins - 1) return kGapRange;
  return -kGapRange + (static_cast<double>(bin - 1) + 0.5) / kGapBinsPerUnit;
}

double histogram_quantile(std::span<const std::uint32_t> hist, std::uint64_t total, double q) {
  const auto target = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total)));
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    seen += hist[i];
    if (seen >= std::max<std::uint64_t>(target, 1)) return gap_bin_center(i);
  }
  return gap_bin_center(hist.size() - 1);
}

struct WorkerState {
  std::vector<std::uint64_t> a, e, b, below;
  std::vector<std::uint32_t> gap_hist;  // checkpoints x kGapBins
};

}  // namespace

MaximaSummary simulate_maxima(const DistParams& params, const MaximaConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (config.workers < 1) throw std::invalid_argument("workers must be >= 1");
  MaximaSummary summary;
  summary.params = params;
  summary.config = config;
  summary.rows = schedule(params, config.n_min, config.n_max);
  const std::size_t n_cp = summary.rows.size();
  const std::size_t n_tasks = (config.trials + kTrialsPerTask - 1) / kTrialsPerTask;
  const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(config.workers, n_tasks));

  std::vector<WorkerState> workers(n_workers);
  for (auto& w : workers) {
    w.a.assign(n_cp, 0);
    w.e.assign(n_cp, 0);
    w.b.assign(n_cp, 0);
    w.below.assign(n_cp, 0);
    w.gap_hist.assign(n_cp * kGapBins, 0);
  }
  // Floating sums are kept per task and reduced in task order.
  std::vector<double> task_gap_sums(n_tasks * n_cp, 0.0);
  std::vector<std::uint64_t> final_b(config.trials, 0);

  std::atomic<std::size_t> next_task{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](unsigned w) {
    try {
      WorkerState& ws = workers[w];
      for (std::size_t task = next_task++; task < n_tasks; task = next_task++) {
        const std::size_t first = task * kTrialsPerTask;
        const std::size_t last = std::min(config.trials, first + kTrialsPerTask);
        double* gap_sums = task_gap_sums.data() + task * n_cp;
        for (std::size_t trial = first; trial < last; ++trial) {
          const auto records = run_maxima_trial(params, summary.rows, CounterStream(config.seed, trial));
          std::uint64_t count_b = 0;
          for (std::size_t k = 0; k < n_cp; ++k) {
            const CheckpointRecord& r = records[k];
            ws.a[k] += r.a;
            ws.e[k] += r.e;
            ws.b[k] += r.b;
            ws.below[k] += r.below_scale;
            ++ws.gap_hist[k * kGapBins + gap_bin(r.gap)];
            gap_sums[k] += r.gap;
            count_b += r.b;
          }
          final_b[trial] = count_b;
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next_task = n_tasks;
    }
  };
  if (n_workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    for (unsigned w = 0; w < n_workers; ++w) threads.emplace_back(work, w);
  }
  if (failure) std::rethrow_exception(failure);

  const double trials = static_cast<double>(config.trials);
  std::uint64_t cumulative_b = 0;
  std::vector<std::uint32_t> hist(kGapBins);
  for (std::size_t k = 0; k < n_cp; ++k) {
    CheckpointSummary cs;
    cs.n = summary.rows[k].n;
    std::fill(hist.begin(), hist.end(), 0);
    for (const auto& w : workers) {
      cs.count_a += w.a[k];
      cs.count_e += w.e[k];
      cs.count_b += w.b[k];
      cs.count_below_scale += w.below[k];
      for (std::size_t i = 0; i < kGapBins; ++i) hist[i] += w.gap_hist[k * kGapBins + i];
    }
    double gap_sum = 0.0;
    for (std::size_t task = 0; task < n_tasks; ++task) gap_sum += task_gap_sums[task * n_cp + k];
    cs.mean_gap = gap_sum / trials;
    cs.gap_p10 = histogram_quantile(hist, config.trials, 0.1);
    cs.gap_p50 = histogram_quantile(hist, config.trials, 0.5);
    cs.gap_p90 = histogram_quantile(hist, config.trials, 0.9);
    cumulative_b += cs.count_b;
    cs.mean_cumulative_b = static_cast<double>(cumulative_b) / trials;
    summary.checkpoints.push_back(cs);
  }
  if (config.trials > 1) {
    const double mean = static_cast<double>(cumulative_b) / trials;
    double ss = 0.0;
    for (std::uint64_t v : final_b) ss += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    summary.final_count_b_variance = ss / (trials - 1.0);
  }
  return summary;
}

nlohmann::json to_json(const ScheduleRow& row) {
  return {{"n", row.n},
          {"s", row.s},
          {"sigma", row.sigma},
          {"log_mprime", row.log_mprime},
          {"t", row.t},
          {"t_prime", row.t_prime},
          {"pi", row.pi},
          {"logPB", row.log_pb.value},
          {"PE_bound", row.pe_bound},
          {"log_block", row.log_block},
          {"PA", row.pa},
          {"PE", row.pe},
          {"PB", row.pb()}};
}

nlohmann::json to_json(const MaximaSummary& summary) {
  nlohmann::json j;
  const double target = std::exp(-1.0);
  const double tolerance = 4.0 * std::sqrt(target * (1.0 - target) / static_cast<double>(summary.config.trials));
  double worst = 0.0;
  std::size_t worst_n = 0;
  auto& rows = j["checkpoints"] = nlohmann::json::array();
  for (std::size_t k = 0; k < summary.checkpoints.size(); ++k) {
    const auto& c = summary.checkpoints[k];
    const auto& r = summary.rows[k];
    const double below = summary.freq(c.count_below_scale);
    if (std::abs(below - target) >= worst) {
      worst = std::abs(below - target);
      worst_n = c.n;
    }
    rows.push_back({{"n", c.n},
                    {"PA", r.pa},
                    {"PE", r.pe},
                    {"PB", r.pb()},
                    {"PE_bound", r.pe_bound},
                    {"freqA", summary.freq(c.count_a)},
                    {"freqE", summary.freq(c.count_e)},
                    {"freqB", summary.freq(c.count_b)},
                    {"freq_below_scale", below},
                    {"mean_gap", c.mean_gap},
                    {"gap_p10", c.gap_p10},
                    {"gap_p50", c.gap_p50},
                    {"gap_p90", c.gap_p90},
                    {"mean_cumulative_b", c.mean_cumulative_b}});
  }
  j["e_inverse_law"] = {{"target", target},
                        {"tolerance_4sigma", tolerance},
                        {"max_abs_deviation", worst},
                        {"worst_n", worst_n}};
  j["final_count_b_variance"] = summary.final_count_b_variance;
  return j;
}

}  // namespace bclab::smallmax
