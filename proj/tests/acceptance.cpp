// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Reference constants come from tests/oracles/*.py (mpmath / math.fsum), frozen here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bclab/bcsim.hpp"
#include "bclab/cli.hpp"
#include "bclab/smallmax.hpp"
#include "bclab/thinning.hpp"

using namespace bclab;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a sub-check; the first failure is reported in the detail line.
  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const unsigned kWorkers = std::max(1u, std::thread::hardware_concurrency());

double clt_sigma(double p, double trials) { return std::sqrt(p * (1.0 - p) / trials); }

Scenario divergent_independent() {
  return IndependentContamination{MarginSpec::harmonic(1.0), MarginSpec::reciprocal_log(1.0)};
}

// p_n = P(A_n), a_n = e_n: the plan the coupling uses.
ThinningPlan coupling_plan(const Scenario& s, std::size_t horizon) {
  ThinningInput in;
  for (std::size_t n = 1; n <= horizon; ++n) {
    const StepLaw law = step_law(s, n);
    in.p.push_back(law.p_a);
    in.a.push_back(law.p_a > 0.0 ? std::min(1.0, law.p_ae / law.p_a) : 0.0);
  }
  return build_plan(in);
}

// ---------------------------------------------------------------------------

Outcome thinning_bound() {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Outcome o;
  double worst_bound = 0.0;
  double worst_norm = 0.0;
  std::size_t total_len = 0;
  for (int round = 0; round < 50; ++round) {
    const std::size_t len = round == 0 ? 1'000'000 : 1 + gen() % 1'000'000;
    total_len += len;
    ThinningInput in;
    in.p.resize(len);
    in.a.resize(len);
    const int family = round % 5;
    for (std::size_t i = 0; i < len; ++i) {
      const double n = static_cast<double>(i + 1);
      const double u = unit(gen);
      in.p[i] = (gen() & 7) == 0 ? (gen() & 1 ? 0.0 : 1.0) : unit(gen);
      switch (family) {
        case 0: in.a[i] = 1.0 / std::log(n + 2.0); break;           // slow decay
        case 1: in.a[i] = std::pow(n, -0.5 * u); break;             // noisy polynomial
        case 2: in.a[i] = 4.0 * u; break;                           // many a >= 1
        case 3: in.a[i] = u < 0.2 ? 0.0 : std::ldexp(1.0, -static_cast<int>(gen() % 40)); break;  // exact powers
        default: in.a[i] = std::ldexp(u, -static_cast<int>(gen() % 1075)); break;                // down to denormals
      }
    }
    const ThinningPlan plan = build_plan(in);
    const double bound = plan.weighted_bound();
    worst_bound = std::max(worst_bound, bound);
    o.require(bound <= 2.0, fmt("round %d: sum p'a' = %.17g > 2", round, bound));

    std::map<int, std::vector<double>> thinned;
    for (std::size_t i = 0; i < len; ++i) {
      o.require(plan.p_thinned[i] <= in.p[i], fmt("round %d: p'[%zu] > p", round, i + 1));
      if (plan.levels[i] != kInfiniteLevel) thinned[plan.levels[i]].push_back(plan.p_thinned[i]);
    }
    for (const auto& [k, mass] : plan.bucket_mass) {
      if (mass <= 1.0) continue;
      const double normalized = compensated_sum(thinned[k]);
      worst_norm = std::max(worst_norm, std::abs(normalized - 1.0));
      o.require(std::abs(normalized - 1.0) <= 1e-9, fmt("round %d level %d: mass %.17g", round, k, normalized));
    }
  }
  if (o.pass) {
    o.detail = fmt("%zu entries, max sum p'a' = %.6g, max |bucket - 1| = %.2e", total_len, worst_bound, worst_norm);
  }
  return o;
}

Outcome thinning_divergence() {
  ThinningInput in;
  for (std::size_t n = 1; n <= 1'000'000; ++n) {
    in.p.push_back(1.0 / static_cast<double>(n));
    in.a.push_back(1.0 / std::log(static_cast<double>(n) + 2.0));
  }
  const ThinningPlan plan = build_plan(in);
  const std::pair<std::size_t, double> oracle[] = {
      {1'000, 2.7298597778173423}, {10'000, 3.208243691303036}, {100'000, 3.6041183641484245}, {1'000'000, 4.0}};
  Outcome o;
  double previous = -1.0;
  std::string sums;
  for (const auto& [n, expected] : oracle) {
    const double partial = compensated_sum(std::span(plan.p_thinned).first(n));
    o.require(std::abs(partial - expected) <= 1e-9, fmt("N=%zu: %.17g vs oracle %.17g", n, partial, expected));
    o.require(partial > previous, fmt("N=%zu: not increasing", n));
    previous = partial;
    sums += fmt("%.10g ", partial);
  }
  if (o.pass) o.detail = "partial sums " + sums;
  return o;
}

Outcome counterexamples() {
  const std::size_t T = 10'000, N = 10'000;
  const Scenario scenarios[] = {Absorbing{MarginSpec::harmonic(1.0), 0.4},
                                FixedContaminator{MarginSpec::harmonic(1.0), 0.4}};
  Outcome o;
  std::string detail;
  for (const auto& s : scenarios) {
    const TrialSummary summary = run(s, {N, T, 1001, kWorkers, {}});
    const auto& c = *summary.conditional;
    const double freq_e = summary.freq(c.trials_with_event);
    const double freq_zero = summary.freq(summary.trials_without_b);
    const double floor = freq_e - 3.0 * clt_sigma(freq_e, static_cast<double>(T));
    const std::string name(variant_name(s));
    o.require(c.count_b_given_event.max == 0, name + ": B occurred in a trial with E");
    o.require(c.zero_b_given_event == c.trials_with_event, name + ": zero-B count mismatch");
    o.require(freq_zero >= floor, fmt("%s: P(no B) %.4f < %.4f", name.c_str(), freq_zero, floor));
    detail += fmt("%s: freqE %.4f, P(no B) %.4f; ", name.c_str(), freq_e, freq_zero);
  }
  if (o.pass) o.detail = detail;
  return o;
}

Outcome independent_divergence() {
  constexpr double kSum1e5 = 8.5139923533849779;  // sum_{n<=1e5} (1/n)(1 - 1/log(n+2))
  constexpr double kGap = 4.0939546253313366;     // same over 1e3 < n <= 1e5
  const TrialSummary s = run(divergent_independent(), {100'000, 10'000, 2002, kWorkers, {1'000, 100'000}});
  const double mean = s.count_b.mean;
  const double sigma = s.count_b.std_error();
  const auto& inc = s.checkpoints[1].increment_b;
  Outcome o;
  o.require(std::abs(mean - kSum1e5) <= 4.0 * sigma, fmt("mean %.5f vs %.5f (sigma %.4f)", mean, kSum1e5, sigma));
  o.require(std::abs(inc.mean - kGap) <= 4.0 * inc.std_error(),
            fmt("increment %.5f vs %.5f (sigma %.4f)", inc.mean, kGap, inc.std_error()));
  if (o.pass) {
    o.detail = fmt("mean %.4f (analytic %.4f, sigma %.4f), increment %.4f (analytic %.4f, sigma %.4f)", mean,
                   kSum1e5, sigma, inc.mean, kGap, inc.std_error());
  }
  return o;
}

Outcome coupling() {
  struct Horizon {
    std::size_t n;
    double sum_qp;   // sum q_n p_n
    double sum_qpe;  // sum q_n p_n e_n
  };
  const Horizon horizons[] = {{1'000, 3.0, 1.2921907256031564}, {100'000, 4.0, 1.381286445821139}};
  const Scenario s = divergent_independent();
  Outcome o;
  std::string detail;
  double previous_a = -1.0;
  for (const auto& h : horizons) {
    const ThinningPlan plan = coupling_plan(s, h.n);
    long double qp = 0.0L, qpe = 0.0L;
    for (std::size_t i = 0; i < h.n; ++i) {
      const StepLaw law = step_law(s, i + 1);
      qp += static_cast<long double>(plan.q[i]) * law.p_a;
      qpe += static_cast<long double>(plan.q[i]) * law.p_ae;
    }
    o.require(std::abs(static_cast<double>(qp) - h.sum_qp) <= 1e-9, fmt("N=%zu: sum qp %.17Lg", h.n, qp));
    o.require(std::abs(static_cast<double>(qpe) - h.sum_qpe) <= 1e-9, fmt("N=%zu: sum qpe %.17Lg", h.n, qpe));
    o.require(h.sum_qpe <= 4.0, "sum qpe exceeds 4");

    const TrialSummary r = run_with_coupling(s, plan, {h.n, 10'000, 3003, kWorkers, {}});
    const auto& d = *r.count_d_thin;
    const auto& a = *r.count_a_thin;
    o.require(d.mean <= h.sum_qpe + 4.0 * d.std_error(),
              fmt("N=%zu: D' mean %.4f > %.4f + 4*%.4f", h.n, d.mean, h.sum_qpe, d.std_error()));
    o.require(std::abs(a.mean - h.sum_qp) <= 4.0 * a.std_error(),
              fmt("N=%zu: A' mean %.4f vs %.4f (sigma %.4f)", h.n, a.mean, h.sum_qp, a.std_error()));
    o.require(a.mean > previous_a, fmt("N=%zu: A' mean does not grow", h.n));
    previous_a = a.mean;
    detail += fmt("N=%zu: A' %.4f (oracle %.4g), D' %.4f (bound %.4f); ", h.n, a.mean, h.sum_qp, d.mean, h.sum_qpe);
  }
  if (o.pass) o.detail = detail;
  return o;
}

Outcome schedule_numerics() {
  const smallmax::DistParams params;
  const auto r = smallmax::schedule_row(params, 100);
  Outcome o;
  o.require(std::abs(r.s - 166.806) <= 0.01, fmt("s_100 = %.6f", r.s));
  o.require(std::abs(r.sigma - 2.098) <= 0.01, fmt("sigma_100 = %.6f", r.sigma));
  o.require(std::abs(r.pi - 2.855) <= 0.01, fmt("pi_100 = %.6f", r.pi));
  o.require(std::abs(r.pe_bound - 0.3502) <= 0.001, fmt("PE_bound_100 = %.6f", r.pe_bound));

  // pi_n against e^{sigma_n/2}, with sigma_n recomputed in long double as s_n - s_{n-1}.
  auto s_long = [](std::size_t n) {
    const long double x = static_cast<long double>(n);
    return 2.0L * x * std::log(std::log(x) / 2.0L);
  };
  double worst = 0.0;
  std::size_t worst_n = 0;
  for (std::size_t n = 16; n <= 1'000'000; ++n) {
    const double pi = smallmax::schedule_row(params, n).pi;
    const long double expected = std::exp((s_long(n) - s_long(n - 1)) / 2.0L);
    const double rel = static_cast<double>(std::abs(pi - expected) / expected);
    if (rel > worst) {
      worst = rel;
      worst_n = n;
    }
  }
  o.require(worst <= 1e-12, fmt("pi identity: rel error %.3g at n = %zu", worst, worst_n));

  const double n6 = 1e6;
  const double gap = smallmax::checkpoint_sigma(1'000'000) - 2.0 * std::log(std::log(std::sqrt(n6)));
  const double target = 2.0 / std::log(n6);
  o.require(std::abs(gap - target) <= 0.1 * target, fmt("sigma gap %.6g vs %.6g", gap, target));
  if (o.pass) {
    o.detail = fmt("s %.4f sigma %.4f pi %.4f PE_bound %.5f; pi identity max rel %.2e; sigma gap %.5f vs 2/log n %.5f",
                   r.s, r.sigma, r.pi, r.pe_bound, worst, gap, target);
  }
  return o;
}

Outcome tail_identity() {
  const smallmax::DistParams params;
  Outcome o;
  double worst_tail = 0.0;
  for (std::size_t n = 16; n <= 10'000; ++n) {
    const auto r = smallmax::schedule_row(params, n);
    const double err = std::abs(smallmax::log_tail(params, r.t_prime).value + r.log_mprime);
    worst_tail = std::max(worst_tail, err);
    o.require(err <= 1e-9, fmt("n = %zu: |log_tail(t') + log m'| = %.3g", n, err));
  }
  double worst_trip = 0.0;
  double worst_s = 0.0;
  const int points = 20'000;
  for (int i = 0; i <= points; ++i) {
    const double s = std::min(1e8, 10.0 * std::pow(1e7, static_cast<double>(i) / points));
    const double err = std::abs(smallmax::t0_inv(params, smallmax::t0(params, s)) - s);
    if (err > worst_trip) {
      worst_trip = err;
      worst_s = s;
    }
  }
  o.require(worst_trip <= 1e-8, fmt("round trip error %.3g at s = %.10g", worst_trip, worst_s));
  if (o.pass) o.detail = fmt("max tail error %.2e, max round-trip error %.2e", worst_tail, worst_trip);
  return o;
}

smallmax::MaximaSummary maxima_run() {
  static const smallmax::MaximaSummary summary =
      smallmax::simulate_maxima(smallmax::DistParams{}, {16, 200, 100'000, 4004, kWorkers});
  return summary;
}

const smallmax::CheckpointSummary& checkpoint_at(const smallmax::MaximaSummary& s, std::size_t n) {
  return s.checkpoints.at(n - s.config.n_min);
}

Outcome e_inverse_law() {
  const auto s = maxima_run();
  Outcome o;
  std::string detail;
  for (std::size_t n : {30u, 100u, 200u}) {
    const double f = s.freq(checkpoint_at(s, n).count_below_scale);
    o.require(std::abs(f - 0.36788) <= 0.006, fmt("n = %zu: %.5f", n, f));
    detail += fmt("n=%zu %.5f ", n, f);
  }
  if (o.pass) o.detail = "P(t_M <= t_n): " + detail;
  return o;
}

Outcome smallmax_analytic() {
  const auto s = maxima_run();
  const double T = static_cast<double>(s.config.trials);
  Outcome o;
  const auto& c = checkpoint_at(s, 100);
  const auto& r = s.rows.at(100 - s.config.n_min);
  const double fb = s.freq(c.count_b);
  const double fe = s.freq(c.count_e);
  o.require(std::abs(fb - r.pb()) <= 4.0 * clt_sigma(r.pb(), T), fmt("P(B_100) %.5f vs %.5f", fb, r.pb()));
  o.require(std::abs(fe - r.pe) <= 4.0 * clt_sigma(r.pe, T), fmt("P(E_100) %.5f vs %.5f", fe, r.pe));
  double worst = -1.0;
  for (std::size_t k = 0; k < s.checkpoints.size(); ++k) {
    const auto& row = s.rows[k];
    const double f = s.freq(s.checkpoints[k].count_e);
    const double slack = f - row.pe_bound - 4.0 * clt_sigma(row.pe_bound, T);
    worst = std::max(worst, slack);
    o.require(slack <= 0.0, fmt("n = %zu: freqE %.5f > PE_bound %.5f + 4 sigma", row.n, f, row.pe_bound));
  }
  if (o.pass) {
    o.detail = fmt("n=100: freqB %.5f (PB %.5f), freqE %.5f (PE %.5f); max freqE - bound - 4sigma = %.4f", fb,
                   r.pb(), fe, r.pe, worst);
  }
  return o;
}

Outcome liminf_trend() {
  constexpr double kIncrement = 11.541158784638359;  // sum_{100<n<=400} PB_n
  const auto s = smallmax::simulate_maxima(smallmax::DistParams{}, {16, 400, 10'000, 5005, kWorkers});
  const double at100 = checkpoint_at(s, 100).mean_cumulative_b;
  const double at400 = checkpoint_at(s, 400).mean_cumulative_b;
  Outcome o;
  o.require(at400 - at100 >= 0.8 * kIncrement, fmt("increment %.4f < 0.8 * %.4f", at400 - at100, kIncrement));
  const smallmax::DistParams params;
  const auto r2 = smallmax::schedule_row(params, 100);
  const auto r4 = smallmax::schedule_row(params, 10'000);
  const double g2 = r2.t - r2.t_prime;
  const double g4 = r4.t - r4.t_prime;
  o.require(g4 > g2, fmt("gap t - t' %.6f at 1e4 <= %.6f at 1e2", g4, g2));
  if (o.pass) {
    o.detail = fmt("mean cumulative B %.4f -> %.4f (increment %.4f, analytic %.4f); t - t' %.5f -> %.5f", at100,
                   at400, at400 - at100, kIncrement, g2, g4);
  }
  return o;
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("bclab_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const std::string scenario = (dir / "scenario.json").string();
  std::ofstream(scenario) << R"({"variant": "bounded", "p": {"kind": "harmonic", "c": 1},
                                 "e": {"kind": "reciprocal_log", "c": 1}, "C": 1.5})";
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  struct Command {
    std::string name;
    std::vector<std::string> args;
  };
  const std::vector<Command> commands = {
      {"simulate-bc", {"simulate-bc", "--scenario", scenario, "--horizon", "20000", "--trials", "500", "--seed", "7",
                       "--checkpoints", "100", "20000"}},
      {"simulate-bc --couple", {"simulate-bc", "--scenario", scenario, "--horizon", "20000", "--trials", "500",
                                "--seed", "7", "--couple", "--format", "csv"}},
      {"simulate-smallmax", {"simulate-smallmax", "--n-max", "300", "--trials", "5000", "--seed", "7"}},
      {"simulate-smallmax json", {"simulate-smallmax", "--n-max", "120", "--trials", "3000", "--seed", "8",
                                  "--format", "json"}},
  };
  Outcome o;
  int compared = 0;
  for (const auto& cmd : commands) {
    std::vector<std::string> payloads;
    std::vector<std::string> files;
    for (const char* workers : {"1", "3", "1"}) {
      const fs::path out = dir / ("out_" + std::to_string(files.size()));
      auto args = cmd.args;
      args.insert(args.end(), {"--workers", workers, "--out", out.string()});
      std::ostringstream sink_out, sink_err;
      const int status = cli::run(args, sink_out, sink_err);
      o.require(status == 0, cmd.name + ": exit status " + std::to_string(status) + " " + sink_err.str());
      files.push_back(slurp(out));
      payloads.push_back(cli::payload_of(files.back()));
    }
    o.require(!payloads[0].empty(), cmd.name + ": empty payload");
    o.require(payloads[0] == payloads[1], cmd.name + ": payload differs between --workers 1 and 3");
    o.require(files[0] == files[2], cmd.name + ": re-run with identical flags differs");
    ++compared;
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = fmt("%d commands, workers 1 vs 3 payloads identical, re-runs byte-identical", compared);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "thinning bound on randomized inputs", 5.0, thinning_bound},
      {2, "thinned harmonic partial sums", 0.0, thinning_divergence},
      {3, "absorbing / fixed contaminator counterexamples", 30.0, counterexamples},
      {4, "independent contamination: mean B-count", 120.0, independent_divergence},
      {5, "thinning coupling", 120.0, coupling},
      {6, "checkpoint schedule numerics", 5.0, schedule_numerics},
      {7, "tail identity and inversion round trip", 5.0, tail_identity},
      {8, "e^-1 law for block maxima", 60.0, e_inverse_law},
      {9, "small-maxima analytic agreement", 0.0, smallmax_analytic},
      {10, "liminf trend", 0.0, liminf_trend},
      {11, "determinism across worker counts", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0.0 && seconds >= c.budget_seconds && o.pass) {
      o.pass = false;
      o.detail = fmt("runtime %.2f s exceeds %.0f s", seconds, c.budget_seconds);
    }
    failures += !o.pass;
    std::printf("%s %2d  %-48s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, seconds, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
