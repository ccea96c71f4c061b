#include "bclab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bclab/bcsim.hpp"
#include "bclab/scenarios.hpp"
#include "bclab/smallmax.hpp"

namespace bclab::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// Fills unset options from the config file; command-line flags win.
template <class T>
void merge(const json& cfg, CLI::Option* opt, const char* key, T& target) {
  if (opt->count() > 0 || !cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config.") + key + ": wrong type");
  }
}

class Output {
 public:
  explicit Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw UsageError("cannot write " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

void write_csv_header(std::ostream& os, std::string_view command, const json& config) {
  os << "# " << kVersion << '\n' << "# command: " << command << '\n' << "# config: " << config.dump() << '\n';
}

void write_json(std::ostream& os, std::string_view command, const json& config, json payload) {
  json doc;
  doc["header"] = {{"version", kVersion}, {"command", command}, {"config", config}};
  doc["payload"] = std::move(payload);
  os << doc.dump(1) << '\n';
}

void check_format(const std::string& format) {
  if (format != "csv" && format != "json") throw UsageError("--format must be csv or json");
}

struct ThinOptions {
  std::string input;
  std::string out = "-";
};

int cmd_thin(const ThinOptions& o, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.input);
  if (!in) throw UsageError("cannot open " + o.input);
  const ThinningInput input = read_thinning_csv(in);
  const ThinningPlan plan = build_plan(input);

  Output dest(o.out, out);
  write_csv_header(*dest, "thin", {{"in", o.input}});
  *dest << "n,p,a,level_k,a_prime,p_prime,q\n";
  for (std::size_t n = 0; n < plan.size(); ++n) {
    const DyadicLevel k = plan.levels[n];
    *dest << n + 1 << ',' << format_real(input.p[n]) << ',' << format_real(input.a[n]) << ','
          << (k == kInfiniteLevel ? std::string("inf") : std::to_string(k)) << ','
          << format_real(level_value(k)) << ',' << format_real(plan.p_thinned[n]) << ','
          << format_real(plan.q[n]) << '\n';
  }
  err << "thin: " << plan.size() << " rows, bound sum p'a' = " << format_real(plan.weighted_bound()) << '\n';
  return 0;
}

struct BcOptions {
  std::string scenario_file;
  std::size_t horizon = 1000;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned workers = default_workers();
  std::vector<std::size_t> checkpoints;
  bool couple = false;
  std::string format = "json";
  std::string out = "-";
  json scenario_json;
};

ThinningPlan plan_for(const Scenario& scenario, std::size_t horizon) {
  ThinningInput input;
  input.p.reserve(horizon);
  input.a.reserve(horizon);
  for (std::size_t n = 1; n <= horizon; ++n) {
    const StepLaw law = step_law(scenario, n);
    input.p.push_back(law.p_a);
    // e_n = P(E_n & A_n) / P(A_n)
    input.a.push_back(law.p_a > 0.0 ? std::min(1.0, law.p_ae / law.p_a) : 0.0);
  }
  return build_plan(input);
}

int cmd_simulate_bc(const BcOptions& o, std::ostream& out, std::ostream& err) {
  check_format(o.format);
  if (o.scenario_json.is_null()) throw UsageError("simulate-bc needs --scenario or a \"scenario\" config entry");
  const Scenario scenario = scenario_from_json(o.scenario_json);
  validate(scenario);
  TrialConfig config{o.horizon, o.trials, o.seed, o.workers, o.checkpoints};
  validate(config);

  const json resolved = {{"scenario", to_json(scenario)}, {"horizon", o.horizon},   {"trials", o.trials},
                         {"seed", o.seed},                {"workers", o.workers},   {"couple", o.couple},
                         {"checkpoints", o.checkpoints},  {"dense_index_limit", kDenseIndexLimit}};
  TrialSummary summary;
  if (o.couple) {
    const ThinningPlan plan = plan_for(scenario, o.horizon);
    err << "simulate-bc: thinning plan bound sum p'a' = " << format_real(plan.weighted_bound()) << '\n';
    summary = run_with_coupling(scenario, plan, config);
  } else {
    summary = run(scenario, config);
  }

  Output dest(o.out, out);
  if (o.format == "json") {
    write_json(*dest, "simulate-bc", resolved, to_json(summary));
    return 0;
  }
  write_csv_header(*dest, "simulate-bc", resolved);
  *dest << "n,freqA,freqE,freqB";
  if (summary.coupled) *dest << ",freqA_thin,freqD_thin,freqB_thin";
  *dest << '\n';
  for (const auto& r : summary.per_n) {
    *dest << r.n << ',' << format_real(summary.freq(r.a)) << ',' << format_real(summary.freq(r.e)) << ','
          << format_real(summary.freq(r.b));
    if (summary.coupled) {
      *dest << ',' << format_real(summary.freq(r.a_thin)) << ',' << format_real(summary.freq(r.d_thin)) << ','
            << format_real(summary.freq(r.b_thin));
    }
    *dest << '\n';
  }
  return 0;
}

struct MaxOptions {
  double theta = 0.5;
  std::size_t n_min = 16;
  std::size_t n_max = 200;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned workers = default_workers();
  std::string format = "csv";
  std::string out = "-";
};

std::string real_or_empty(double t) { return std::abs(t) < 700.0 ? format_real(std::exp(t)) : std::string(); }

int cmd_schedule(const MaxOptions& o, std::ostream& out) {
  check_format(o.format);
  smallmax::DistParams params;
  params.theta = o.theta;
  smallmax::validate(params);
  const auto rows = smallmax::schedule(params, o.n_min, o.n_max);
  const json resolved = {{"theta", o.theta}, {"n_min", o.n_min}, {"n_max", o.n_max}, {"s_min", params.s_min}};

  Output dest(o.out, out);
  if (o.format == "json") {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(smallmax::to_json(r));
    write_json(*dest, "schedule", resolved, {{"rows", std::move(arr)}});
    return 0;
  }
  write_csv_header(*dest, "schedule", resolved);
  *dest << "n,s,sigma,log_mprime,t,t_prime,pi,logPB,PE_bound,log_block,PA,PE,PB,a_mn,x_n\n";
  for (const auto& r : rows) {
    *dest << r.n << ',' << format_real(r.s) << ',' << format_real(r.sigma) << ',' << format_real(r.log_mprime)
          << ',' << format_real(r.t) << ',' << format_real(r.t_prime) << ',' << format_real(r.pi) << ','
          << format_real(r.log_pb.value) << ',' << format_real(r.pe_bound) << ',' << format_real(r.log_block)
          << ',' << format_real(r.pa) << ',' << format_real(r.pe) << ',' << format_real(r.pb()) << ','
          << real_or_empty(r.t) << ',' << real_or_empty(r.t_prime) << '\n';
  }
  return 0;
}

int cmd_simulate_smallmax(const MaxOptions& o, std::ostream& out) {
  check_format(o.format);
  smallmax::DistParams params;
  params.theta = o.theta;
  smallmax::validate(params);
  const smallmax::MaximaConfig config{o.n_min, o.n_max, o.trials, o.seed, o.workers};
  const auto summary = smallmax::simulate_maxima(params, config);
  const json resolved = {{"theta", o.theta},   {"n_min", o.n_min}, {"n_max", o.n_max},
                         {"trials", o.trials}, {"seed", o.seed},   {"workers", o.workers}};

  Output dest(o.out, out);
  if (o.format == "json") {
    write_json(*dest, "simulate-smallmax", resolved, smallmax::to_json(summary));
    return 0;
  }
  write_csv_header(*dest, "simulate-smallmax", resolved);
  *dest << "n,PA,PE,PB,PE_bound,freqA,freqE,freqB,freq_below_scale,mean_gap,gap_p10,gap_p50,gap_p90,"
           "mean_cumulative_b\n";
  for (std::size_t k = 0; k < summary.checkpoints.size(); ++k) {
    const auto& c = summary.checkpoints[k];
    const auto& r = summary.rows[k];
    *dest << c.n << ',' << format_real(r.pa) << ',' << format_real(r.pe) << ',' << format_real(r.pb()) << ','
          << format_real(r.pe_bound) << ',' << format_real(summary.freq(c.count_a)) << ','
          << format_real(summary.freq(c.count_e)) << ',' << format_real(summary.freq(c.count_b)) << ','
          << format_real(summary.freq(c.count_below_scale)) << ',' << format_real(c.mean_gap) << ','
          << format_real(c.gap_p10) << ',' << format_real(c.gap_p50) << ',' << format_real(c.gap_p90) << ','
          << format_real(c.mean_cumulative_b) << '\n';
  }
  return 0;
}

}  // namespace

std::string format_real(double x) {
  if (std::isinf(x)) return x < 0 ? "-inf" : "inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ThinningInput read_thinning_csv(std::istream& in) {
  ThinningInput input;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (first_content) {
      first_content = false;
      std::string compact;
      for (char c : line) {
        if (c != ' ') compact += c;
      }
      if (compact == "p,a") continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected two columns p,a");
    }
    auto parse = [&](const std::string& field, const char* name) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < field.size() && field[used] == ' ') ++used;
      if (used == 0 || used != field.size()) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": cannot parse " + name + " = '" + field +
                                    "'");
      }
      return v;
    };
    const double p = parse(line.substr(0, comma), "p");
    const double a = parse(line.substr(comma + 1), "a");
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": p = " + format_real(p) + " not in [0,1]");
    }
    if (!(a >= 0.0) || std::isinf(a)) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": a = " + format_real(a) +
                                  " must be finite and >= 0");
    }
    input.p.push_back(p);
    input.a.push_back(a);
  }
  return input;
}

std::string payload_of(const std::string& contents) {
  const auto first = contents.find_first_not_of(" \n\t");
  if (first != std::string::npos && contents[first] == '{') {
    return json::parse(contents).at("payload").dump();
  }
  std::istringstream in(contents);
  std::string line;
  std::string payload;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    payload += line;
    payload += '\n';
  }
  return payload;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contaminated Borel-Cantelli and small-maxima laboratory", "bclab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  ThinOptions thin;
  auto* thin_cmd = app.add_subcommand("thin", "Dyadic thinning of a p,a CSV");
  thin_cmd->add_option("--in,input", thin.input, "CSV with columns p,a")->required();
  thin_cmd->add_option("--out", thin.out, "Output path, '-' for stdout");

  BcOptions bc;
  std::string bc_config;
  auto* bc_cmd = app.add_subcommand("simulate-bc", "Monte Carlo run of a contaminated event scenario");
  bc_cmd->add_option("--config", bc_config, "JSON config file; flags override its entries");
  bc_cmd->add_option("--scenario", bc.scenario_file, "Scenario JSON file");
  auto* bc_horizon = bc_cmd->add_option("--horizon", bc.horizon, "Indices per trial");
  auto* bc_trials = bc_cmd->add_option("--trials", bc.trials);
  auto* bc_seed = bc_cmd->add_option("--seed", bc.seed);
  auto* bc_workers = bc_cmd->add_option("--workers", bc.workers);
  auto* bc_checkpoints = bc_cmd->add_option("--checkpoints", bc.checkpoints, "Horizons for cumulative B-counts");
  auto* bc_couple = bc_cmd->add_flag("--couple", bc.couple, "Run the thinning coupling U_n <= q_n");
  auto* bc_format = bc_cmd->add_option("--format", bc.format, "csv or json");
  auto* bc_out = bc_cmd->add_option("--out", bc.out);

  MaxOptions sched;
  std::string sched_config;
  auto* sched_cmd = app.add_subcommand("schedule", "Checkpoint schedule of the small-maxima construction");
  sched_cmd->add_option("--config", sched_config);
  auto* sc_theta = sched_cmd->add_option("--theta", sched.theta);
  auto* sc_nmin = sched_cmd->add_option("--n-min", sched.n_min);
  auto* sc_nmax = sched_cmd->add_option("--n-max", sched.n_max);
  auto* sc_format = sched_cmd->add_option("--format", sched.format);
  auto* sc_out = sched_cmd->add_option("--out", sched.out);

  MaxOptions sm;
  std::string sm_config;
  auto* sm_cmd = app.add_subcommand("simulate-smallmax", "Monte Carlo of partial maxima along the schedule");
  sm_cmd->add_option("--config", sm_config);
  auto* sm_theta = sm_cmd->add_option("--theta", sm.theta);
  auto* sm_nmin = sm_cmd->add_option("--n-min", sm.n_min);
  auto* sm_nmax = sm_cmd->add_option("--n-max", sm.n_max);
  auto* sm_trials = sm_cmd->add_option("--trials", sm.trials);
  auto* sm_seed = sm_cmd->add_option("--seed", sm.seed);
  auto* sm_workers = sm_cmd->add_option("--workers", sm.workers);
  auto* sm_format = sm_cmd->add_option("--format", sm.format);
  auto* sm_out = sm_cmd->add_option("--out", sm.out);

  std::vector<std::string> argv_store = {"bclab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (thin_cmd->parsed()) return cmd_thin(thin, out, err);

    if (bc_cmd->parsed()) {
      const json cfg = bc_config.empty() ? json::object() : load_json_file(bc_config);
      merge(cfg, bc_horizon, "horizon", bc.horizon);
      merge(cfg, bc_trials, "trials", bc.trials);
      merge(cfg, bc_seed, "seed", bc.seed);
      merge(cfg, bc_workers, "workers", bc.workers);
      merge(cfg, bc_checkpoints, "checkpoints", bc.checkpoints);
      merge(cfg, bc_couple, "couple", bc.couple);
      merge(cfg, bc_format, "format", bc.format);
      merge(cfg, bc_out, "out", bc.out);
      if (!bc.scenario_file.empty()) {
        bc.scenario_json = load_json_file(bc.scenario_file);
      } else if (cfg.contains("scenario")) {
        bc.scenario_json = cfg.at("scenario");
      }
      return cmd_simulate_bc(bc, out, err);
    }

    if (sched_cmd->parsed()) {
      const json cfg = sched_config.empty() ? json::object() : load_json_file(sched_config);
      merge(cfg, sc_theta, "theta", sched.theta);
      merge(cfg, sc_nmin, "n_min", sched.n_min);
      merge(cfg, sc_nmax, "n_max", sched.n_max);
      merge(cfg, sc_format, "format", sched.format);
      merge(cfg, sc_out, "out", sched.out);
      return cmd_schedule(sched, out);
    }

    if (sm_cmd->parsed()) {
      const json cfg = sm_config.empty() ? json::object() : load_json_file(sm_config);
      merge(cfg, sm_theta, "theta", sm.theta);
      merge(cfg, sm_nmin, "n_min", sm.n_min);
      merge(cfg, sm_nmax, "n_max", sm.n_max);
      merge(cfg, sm_trials, "trials", sm.trials);
      merge(cfg, sm_seed, "seed", sm.seed);
      merge(cfg, sm_workers, "workers", sm.workers);
      merge(cfg, sm_format, "format", sm.format);
      merge(cfg, sm_out, "out", sm.out);
      return cmd_simulate_smallmax(sm, out);
    }
  } catch (const std::exception& e) {
    err << "bclab: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace bclab::cli
