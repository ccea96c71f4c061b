#ifndef BCLAB_SMALLMAX_HPP
#define BCLAB_SMALLMAX_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "bclab/logspace.hpp"
#include "bclab/rng.hpp"

/**
 * Small partial maxima.
 *
 * The distribution G lives in (s, t) coordinates: s = -log(1 - G(x)) is
 * the tail exponent and t = log x. G is fixed by t = T0(s) with
 *
 *     T0(s) = s / (log log s)^theta      for s >= s_min,
 *
 * extended linearly through the origin below s_min. Along the checkpoint
 * schedule s_n = 2 n log log sqrt(n) with m_n = e^{s_n}, the events
 *
 *     A_n: the block (m_{n-1}, m_n] stays below x_n
 *     E_n: some observation up to m_{n-1} exceeds x_n
 *     B_n: the running maximum M_{m_n} stays below x_n
 *
 * satisfy B_n = A_n \ E_n, where x_n = a(m'_n) and log m'_n = (s_n + s_{n-1}) / 2.
 * Neither m_n nor x_n is ever materialised.
 */
namespace bclab::smallmax {

struct DistParams {
  double theta = 0.5;
  double s_min = 10.0;
  double inversion_tol = 1e-10;
};

void validate(const DistParams& params);

/// T0, strictly increasing on (0, inf). Throws for s <= 0.
double t0(const DistParams& params, double s);

/// Inverse of t0 by doubling bracket and bisection. Throws for t <= 0.
double t0_inv(const DistParams& params, double t);

/// log(1 - G(e^t)) = -t0_inv(t).
LogProb log_tail(const DistParams& params, double t);

/// Scaling a(n) in t-coordinates: 1 - G(a(n)) = 1/n.
inline double log_scale(const DistParams& params, double log_n) { return t0(params, log_n); }

/// s_n = 2 n log(log(n) / 2).
double checkpoint_s(std::size_t n);

/// s_n - s_{n-1}, evaluated without cancellation. Requires n >= 3.
double checkpoint_sigma(std::size_t n);

/// Smallest n with s_n >= s_min.
std::size_t min_admissible_n(const DistParams& params);

struct ScheduleRow {
  std::size_t n = 0;
  double s = 0.0;
  double sigma = 0.0;
  double log_mprime = 0.0;
  double t = 0.0;        ///< log a(m_n)
  double t_prime = 0.0;  ///< log x_n
  double pi = 0.0;       ///< m_n / m'_n = e^{sigma/2}
  LogProb log_pb;        ///< m_n log G(x_n)
  double pe_bound = 0.0; ///< m_{n-1} / m'_n = e^{-sigma/2}
  double log_block = 0.0;  ///< log(m_n - m_{n-1})
  double pa = 0.0;       ///< G(x_n)^{m_n - m_{n-1}}
  double pe = 0.0;       ///< 1 - G(x_n)^{m_{n-1}}
  double p_below_scale = 0.0;  ///< G(a(m_n))^{m_n} = (1 - 1/m_n)^{m_n}

  double pb() const { return log_pb.prob(); }
};

ScheduleRow schedule_row(const DistParams& params, std::size_t n);

/// Rows n_min..n_max. Throws if n_min < min_admissible_n (message names the minimum) or n_max < n_min.
std::vector<ScheduleRow> schedule(const DistParams& params, std::size_t n_min, std::size_t n_max);

/// Tail exponent s of the maximum of e^{log_blocksize} iid observations, by inverse transform of u.
double sample_block_max_s(double log_blocksize, double u);

/// t0 of sample_block_max_s.
double sample_block_max_t(const DistParams& params, double log_blocksize, double u);

struct CheckpointRecord {
  std::size_t n = 0;
  double t_max = 0.0;  ///< log M_{m_n}
  double gap = 0.0;    ///< log(M_{m_n} / a(m_n))
  bool a = false;
  bool e = false;
  bool b = false;
  bool below_scale = false;  ///< M_{m_n} <= a(m_n)
};

/**
 * One trial over the rows. Draw 0 of the stream is the maximum of the first
 * m_{n_min - 1} observations, draw k + 1 the block maximum of rows[k].
 */
std::vector<CheckpointRecord> run_maxima_trial(const DistParams& params, std::span<const ScheduleRow> rows,
                                               const CounterStream& stream);

struct MaximaConfig {
  std::size_t n_min = 16;
  std::size_t n_max = 200;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// Gap histogram: bins of width 1/32 on [-16, 16), plus one underflow and one overflow bin.
inline constexpr int kGapBinsPerUnit = 32;
inline constexpr double kGapRange = 16.0;

struct CheckpointSummary {
  std::size_t n = 0;
  std::uint64_t count_a = 0;
  std::uint64_t count_e = 0;
  std::uint64_t count_b = 0;
  std::uint64_t count_below_scale = 0;
  double mean_gap = 0.0;
  double gap_p10 = 0.0;
  double gap_p50 = 0.0;
  double gap_p90 = 0.0;
  double mean_cumulative_b = 0.0;  ///< mean over trials of the B-count up to n
};

struct MaximaSummary {
  DistParams params;
  MaximaConfig config;
  std::vector<ScheduleRow> rows;
  std::vector<CheckpointSummary> checkpoints;
  double final_count_b_variance = 0.0;  ///< per-trial B-count variance at n_max

  double freq(std::uint64_t count) const {
    return static_cast<double>(count) / static_cast<double>(config.trials);
  }
};

/// Deterministic for any worker count: trial j uses CounterStream(seed, j).
MaximaSummary simulate_maxima(const DistParams& params, const MaximaConfig& config);

nlohmann::json to_json(const ScheduleRow& row);
nlohmann::json to_json(const MaximaSummary& summary);

}  // namespace bclab::smallmax

#endif  // BCLAB_SMALLMAX_HPP
