#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "macq/core.hpp"
#include "macq/coupled_chains.hpp"
#include "macq/evt.hpp"
#include "macq/gilbert_queue.hpp"
#include "macq/meanfield.hpp"
#include "macq/sim.hpp"

namespace macq::cli {

using json = nlohmann::ordered_json;
using io::format_number;

namespace {

const double kLambdaCritical = (1.0 / std::numbers::e) * (1.0 - 0.001);

struct Output {
  std::string csv = "-";
  std::string json_path;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct SimParams {
  int K = 7;
  double lambda_total = kLambdaCritical;
  std::string channel = "bernoulli";
  double p_exc = 0.0;  // 0: 1/K
  double mu = 0.0, sigma = 1.0, threshold = 0.0;
  double alpha = 0.1, beta = 0.1, mu_g = 0.7, mu_b = 0.5, sigma_g = 1.0, sigma_b = 0.5;
  std::int64_t slots = 1'000'000;
  std::int64_t warmup = -1;  // -1: slots / 10
  int replications = 8;
};

struct Params {
  Output out;
  SimParams sim;
  // model1
  double tol = 1e-10;
  int max_iter = 1000;
  // model2
  double tau = 0.0;  // 0: 1/K
  std::string mode = "exact";
  // model3
  double p_succ_init = 1.0;
  bool pmf = false;
  // evt / maxcap
  double K_evt = 5000;
  double p = 0.5;
  double mu_g = std::numbers::sqrt2, sigma_g = 0.5, mu_b = 0.0, sigma_b = 0.25;
  bool finite_k = false;
  double switch_rate = 0.2;
  std::int64_t samples = 10000;
  std::string max_mode = "both";
  // sweep
  std::string grid = "0.005:0.06:0.0025";
  // exceed
  std::int64_t n = 10000;
  double tau_exceed = -1.0;
  double e_neg_tau = 0.3961;
  std::int64_t blocks = 10000;
  std::string rule = "exact";
  // repro
  std::string repro_id;
  int repro_K = 0;
};

json scalar(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  if (!s.empty() && s.find_first_not_of("-0123456789") == std::string::npos) {
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
    }
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

void echo_inputs(const CLI::App* sub, json& inputs, json& defaults) {
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->get_expected_max() == 0) {
      inputs[name] = opt->count() > 0;
      if (opt->count() == 0) defaults.push_back(name);
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      inputs[name] = res.size() == 1 ? scalar(res.front()) : json(res);
    } else {
      inputs[name] = scalar(opt->get_default_str());
      defaults.push_back(name);
    }
  }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
}

std::string error_line(const std::string& kind, const std::string& message, int code,
                       const std::vector<std::string>& issues = {}) {
  json e;
  e["error"] = kind;
  e["message"] = message;
  if (!issues.empty()) e["issues"] = issues;
  e["exit_code"] = code;
  return e.dump() + "\n";
}

void add_estimate(io::Table& t, std::vector<std::string>& row, const std::string& name, const sim::Estimate& e,
                  bool header_only = false) {
  if (header_only) {
    t.header.push_back(name);
    t.header.push_back(name + "_hw");
    return;
  }
  row.push_back(format_number(e.mean));
  row.push_back(format_number(e.half_width));
}

json estimate_json(const sim::Estimate& e) { return json{{"mean", e.mean}, {"half_width", e.half_width}}; }

ChannelModel sim_channel(const SimParams& s) {
  if (s.channel == "bernoulli") return BernoulliExceedance{s.p_exc > 0 ? s.p_exc : 1.0 / s.K};
  if (s.channel == "gaussian") return GaussianIID{{s.mu, s.sigma}, s.threshold};
  if (s.channel == "gilbert") {
    // System-level exceedance rates shared by the K users.
    return GilbertElliott{s.alpha, s.beta, {s.mu_g / s.K, s.sigma_g}, {s.mu_b / s.K, s.sigma_b}, 0.0};
  }
  throw ValidationError({"channel: expected bernoulli, gaussian or gilbert, got " + s.channel});
}

SystemConfig sim_config(const SimParams& s, std::uint64_t seed) {
  SystemConfig c;
  c.K = s.K;
  c.lambda_total = s.lambda_total;
  c.slots = s.slots;
  c.warmup = s.warmup >= 0 ? s.warmup : s.slots / 10;
  c.replications = s.replications;
  c.seed = seed;
  return c;
}

const std::vector<std::string> kSimMetrics = {"mean_queue_len", "queue_incl_hol", "W_q",           "W_s",
                                              "total_delay",    "p_succ",         "throughput",    "avg_backlogged"};

std::vector<const sim::Estimate*> sim_metrics(const sim::SimReport& r) {
  return {&r.mean_queue_len, &r.queue_incl_hol, &r.W_q,        &r.W_s,
          &r.total_delay,    &r.p_succ_given_attempt, &r.throughput, &r.avg_backlogged};
}

Result do_sim(const Params& P) {
  const auto cfg = sim_config(P.sim, P.out.seed);
  sim::SimOptions o;
  o.threads = P.out.threads;
  const auto r = sim::run_sim(cfg, sim_channel(P.sim), o);
  Result res;
  res.resolved["warmup"] = cfg.warmup;
  if (P.sim.channel == "bernoulli") res.resolved["p-exc"] = P.sim.p_exc > 0 ? P.sim.p_exc : 1.0 / P.sim.K;
  std::vector<std::string> row;
  res.table.header = {"K", "lambda_total", "lambda_i"};
  for (const auto& m : kSimMetrics) add_estimate(res.table, row, m, {}, true);
  row = {std::to_string(r.K), format_number(P.sim.lambda_total), format_number(r.lambda_i)};
  for (const auto* e : sim_metrics(r)) add_estimate(res.table, row, "", *e);
  res.table.add_row(row);
  for (std::size_t i = 0; i < kSimMetrics.size(); ++i) res.outputs[kSimMetrics[i]] = estimate_json(*sim_metrics(r)[i]);
  res.outputs["P_I"] = estimate_json(r.P_I);
  res.outputs["P_A"] = estimate_json(r.P_A);
  res.outputs["P_B"] = estimate_json(r.P_B);
  res.outputs["queue_hist"] = r.queue_hist;
  res.outputs["arrivals"] = r.arrivals;
  res.outputs["departures"] = r.departures;
  res.outputs["in_flight"] = r.in_flight;
  res.outputs["measured_successes"] = r.measured_successes;
  res.outputs["low_confidence"] = r.low_confidence;
  res.outputs["notes"] = r.notes;
  res.residuals["conservation"] = static_cast<double>(r.arrivals - r.departures - r.in_flight);
  return res;
}

Result do_model1(const Params& P) {
  const int K = P.sim.K;
  SystemConfig cfg;
  cfg.K = K;
  cfg.lambda_total = P.sim.lambda_total;
  const double p = P.sim.p_exc > 0 ? P.sim.p_exc : 1.0 / K;
  cfg = validate_config(cfg, BernoulliExceedance{p});
  model1::SolveOptions o;
  o.tol = P.tol;
  o.max_iter = P.max_iter;
  const auto s = model1::solve_model1(K, cfg.lambda_i, p, o);
  Result res;
  res.resolved["p-exc"] = p;
  res.table.header = {"K", "lambda_i", "p_exc", "P_I", "P_A", "P_B", "P_1given1", "P_0given2", "p_succ",
                      "L", "W_q", "W_s", "D", "iterations", "residual", "states"};
  res.table.add_numbers({double(K), cfg.lambda_i, p, s.P_I, s.P_A, s.P_B, s.boundary.P_1given1, s.boundary.P_0given2,
                         s.p_succ, s.L, s.W_q, s.W_s, s.D, double(s.iterations), s.residual, double(s.states)});
  res.outputs = {{"P_I", s.P_I},     {"P_I_fresh", s.P_I_fresh}, {"P_A", s.P_A}, {"P_B", s.P_B},
                 {"P_1given1", s.boundary.P_1given1}, {"P_0given2", s.boundary.P_0given2},
                 {"p_succ", s.p_succ}, {"L", s.L}, {"W_q", s.W_q}, {"W_s", s.W_s}, {"D", s.D},
                 {"blocked_prob", s.blocked_prob}, {"states", s.states}, {"iterations", s.iterations}};
  res.residuals["fixed_point"] = s.residual;
  return res;
}

meanfield::Mode parse_mode(const std::string& m) {
  if (m == "exact") return meanfield::Mode::ExactK;
  if (m == "asymptotic") return meanfield::Mode::Asymptotic;
  throw ValidationError({"mode: expected exact or asymptotic, got " + m});
}

Result do_model2(const Params& P) {
  const int K = P.sim.K;
  SystemConfig cfg;
  cfg.K = K;
  cfg.lambda_total = P.sim.lambda_total;
  const double tau = P.tau > 0 ? P.tau : 1.0 / K;
  cfg = validate_config(cfg, BernoulliExceedance{std::min(tau, 1.0)});
  const auto mode = parse_mode(P.mode);
  const auto s = meanfield::solve_pcoll(cfg.lambda_i, tau, K, mode);
  Result res;
  res.resolved["tau-per-user"] = tau;
  res.table.header = {"K", "lambda_i", "tau", "p_coll", "p_succ", "rho", "empty_prob", "mean_queue",
                      "W_q", "W_s", "sojourn", "residual"};
  res.table.add_numbers({double(K), cfg.lambda_i, tau, s.p_coll, s.p_succ, s.rho, s.empty_prob, s.mean_queue, s.W_q,
                         s.W_s, s.sojourn, s.residual});
  res.outputs = {{"mode", meanfield::to_string(s.mode)}, {"p_coll", s.p_coll}, {"p_succ", s.p_succ}, {"rho", s.rho},
                 {"empty_prob", s.empty_prob}, {"mean_queue", s.mean_queue}, {"W_q", s.W_q}, {"W_s", s.W_s},
                 {"sojourn", s.sojourn}};
  res.residuals["fixed_point"] = s.residual;
  return res;
}

Result do_model3(const Params& P) {
  const int K = P.sim.K;
  if (K < 1) throw ValidationError({"K: K >= 1 required"});
  const double lam = P.sim.lambda_total / K;
  model3::SolveOptions o;
  o.tol = P.tol;
  o.max_iter = P.max_iter;
  o.p_succ_init = P.p_succ_init;
  const auto s = model3::solve_model3(K, lam, P.sim.mu_g / K, P.sim.mu_b / K, P.sim.alpha, P.sim.beta, o);
  Result res;
  if (P.pmf) {
    res.table.header = {"m", "pi_g", "pi_b"};
    for (std::size_t m = 0; m < s.steady.pi_g.size(); ++m)
      res.table.add_numbers({double(m), s.steady.pi_g[m], s.steady.pi_b[m]});
  } else {
    res.table.header = {"K", "lambda_i", "mu_g_eff", "mu_b_eff", "mu_hat", "z0", "pi_g0", "pi_b0",
                        "Qbar", "W", "P_t", "p_succ", "iterations", "residual"};
    res.table.add_numbers({double(K), lam, s.params.mu_g_eff, s.params.mu_b_eff, s.mu_hat, s.z0,
                           s.steady.boundary.pi_g0, s.steady.boundary.pi_b0, s.Qbar, s.W, s.P_t, s.p_succ,
                           double(s.iterations), s.residual});
  }
  double mass = 0.0;
  for (std::size_t m = 0; m < s.steady.pi_g.size(); ++m) mass += s.steady.pi_g[m] + s.steady.pi_b[m];
  res.outputs = {{"mu_g_eff", s.params.mu_g_eff}, {"mu_b_eff", s.params.mu_b_eff}, {"mu_hat", s.mu_hat},
                 {"z0", s.z0}, {"pi_g0", s.steady.boundary.pi_g0}, {"pi_b0", s.steady.boundary.pi_b0},
                 {"Qbar", s.Qbar}, {"W", s.W}, {"P_t", s.P_t}, {"p_succ", s.p_succ},
                 {"levels", s.steady.pi_g.size()}, {"used_recursion", s.steady.used_recursion},
                 {"iterations", s.iterations}};
  res.residuals["fixed_point"] = s.residual;
  res.residuals["cubic"] = std::abs(model3::cubic_coeffs(s.params)(s.z0));
  res.residuals["mass"] = std::abs(mass - 1.0);
  return res;
}

StationaryMixture evt_mixture(const Params& P) {
  if (!(P.p > 0.0 && P.p <= 1.0)) throw ValidationError({"p: 0 < p <= 1 required"});
  if (!(P.sigma_g > 0.0 && P.sigma_b > 0.0)) throw ValidationError({"sigma: positive values required"});
  return StationaryMixture::with_weight(P.p, {P.mu_g, P.sigma_g}, {P.mu_b, P.sigma_b});
}

Result do_evt(const Params& P) {
  const auto mix = evt_mixture(P);
  const double K = P.K_evt;
  if (!(K >= 2)) throw ValidationError({"K: K >= 2 required"});
  const auto g = evt::gumbel_constants(K, mix);
  const double em = evt::expected_max(K, mix);
  const double go = mix.p * K >= 2 ? evt::good_only_expected_max(K, mix) : NAN;
  const double u_cf = evt::threshold_for_one(K, mix, evt::ThresholdMethod::ClosedForm);
  const double u_num = evt::threshold_for_one(K, mix, evt::ThresholdMethod::Numeric);
  const auto dc = evt::distributed_capacity(K, mix, P.finite_k);
  Result res;
  res.table.header = {"K", "p", "a_K", "b_K", "expected_max", "good_only_expected_max", "threshold",
                      "threshold_numeric", "distributed_capacity", "conditional_mean", "utilized_prob"};
  res.table.add_numbers({K, mix.p, g.a, g.b, em, go, u_cf, u_num, dc.value, dc.conditional_mean, dc.utilized_prob});
  res.outputs = {{"a_K", g.a}, {"b_K", g.b}, {"expected_max", em}, {"good_only_expected_max", go},
                 {"threshold", u_cf}, {"threshold_numeric", u_num}, {"distributed_capacity", dc.value},
                 {"conditional_mean", dc.conditional_mean}, {"utilized_prob", dc.utilized_prob},
                 {"finite_k", dc.finite_k}};
  res.residuals["threshold_tail"] = std::abs(mixture_sf(u_num, mix) - 1.0 / K);
  return res;
}

Result do_sweep(const Params& P) {
  const auto grid = parse_grid(P.grid);
  const auto cfg = sim_config(P.sim, P.out.seed);
  sim::SimOptions o;
  o.threads = P.out.threads;
  const auto rows = sim::sweep_threshold(cfg, grid, o);
  Result res;
  res.resolved["warmup"] = cfg.warmup;
  res.table.header = {"p_exc"};
  std::vector<std::string> unused;
  for (const auto& m : kSimMetrics) add_estimate(res.table, unused, m, {}, true);
  json out = json::array();
  for (const auto& r : rows) {
    std::vector<std::string> row{format_number(r.p_exc)};
    for (const auto* e : sim_metrics(r.report)) add_estimate(res.table, row, "", *e);
    res.table.add_row(row);
    out.push_back({{"p_exc", r.p_exc},
                   {"throughput", estimate_json(r.report.throughput)},
                   {"total_delay", estimate_json(r.report.total_delay)},
                   {"avg_backlogged", estimate_json(r.report.avg_backlogged)},
                   {"low_confidence", r.report.low_confidence}});
  }
  res.outputs["rows"] = out;
  return res;
}

GilbertElliott maxcap_channel(const Params& P) {
  const auto mix = evt_mixture(P);
  GilbertElliott ch;
  ch.beta = P.switch_rate * mix.p;
  ch.alpha = P.switch_rate - ch.beta;
  if (!(ch.alpha > 0.0)) ch.alpha = 1e-12;  // p = 1: Bad state unreachable in practice
  ch.good = mix.good;
  ch.bad = mix.bad;
  return ch;
}

Result do_maxcap(const Params& P) {
  const auto mix = evt_mixture(P);
  if (!(P.K_evt >= 2) || P.K_evt != std::floor(P.K_evt)) throw ValidationError({"K: integer K >= 2 required"});
  if (!(P.switch_rate > 0.0 && P.switch_rate <= 1.0)) throw ValidationError({"switch: 0 < alpha + beta <= 1 required"});
  const int K = static_cast<int>(P.K_evt);
  std::vector<sim::MaxMode> modes;
  if (P.max_mode == "stationary" || P.max_mode == "both") modes.push_back(sim::MaxMode::Stationary);
  if (P.max_mode == "evolving" || P.max_mode == "both") modes.push_back(sim::MaxMode::Evolving);
  if (modes.empty()) throw ValidationError({"mode: expected stationary, evolving or both"});
  const auto g = evt::gumbel_constants(K, mix);
  const double em = evt::expected_max(K, mix);
  Result res;
  res.table.header = {"mode", "samples", "mean", "sd", "expected_max", "rel_gap", "ks_gumbel"};
  for (auto mode : modes) {
    auto x = sim::sample_max_capacity(K, maxcap_channel(P), P.samples, mode, P.out.seed);
    double sum = 0, ss = 0;
    for (double v : x) sum += v;
    const double mean = sum / x.size();
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = x.size() > 1 ? std::sqrt(ss / (x.size() - 1)) : NAN;
    std::sort(x.begin(), x.end());
    double ks = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double F = evt::gumbel_cdf(x[i], g);
      ks = std::max({ks, F - i / n, (i + 1) / n - F});
    }
    res.table.add_row({sim::to_string(mode), std::to_string(x.size()), format_number(mean), format_number(sd),
                       format_number(em), format_number((mean - em) / em), format_number(ks)});
    res.outputs[sim::to_string(mode)] = {{"mean", mean}, {"sd", sd}, {"ks_gumbel", ks}};
  }
  res.outputs["a_K"] = g.a;
  res.outputs["b_K"] = g.b;
  res.outputs["expected_max"] = em;
  return res;
}

Result do_exceed(const Params& P) {
  double tau = P.tau_exceed;
  if (tau <= 0) {
    if (!(P.e_neg_tau > 0.0 && P.e_neg_tau < 1.0)) throw ValidationError({"e-neg-tau: must lie in (0,1)"});
    tau = -std::log(P.e_neg_tau);
  }
  sim::LevelRule rule;
  if (P.rule == "exact") rule = sim::LevelRule::Exact;
  else if (P.rule == "asymptotic") rule = sim::LevelRule::Asymptotic;
  else throw ValidationError({"rule: expected exact or asymptotic"});
  const auto c = sim::count_exceedances(P.n, tau, {P.mu_g, P.sigma_g}, P.blocks, P.out.seed, rule);
  Result res;
  res.resolved["tau"] = tau;
  res.table.header = {"k", "empirical", "poisson", "abs_error"};
  const int kmax = std::max<int>(8, static_cast<int>(c.pmf.size()));
  double worst = 0.0;
  for (int k = 0; k < kmax; ++k) {
    const double emp = k < static_cast<int>(c.pmf.size()) ? c.pmf[k] : 0.0;
    const double poi = std::exp(-tau + k * std::log(tau) - std::lgamma(k + 1.0));
    worst = std::max(worst, std::abs(emp - poi));
    res.table.add_numbers({double(k), emp, poi, std::abs(emp - poi)});
  }
  res.outputs = {{"tau", tau}, {"level", c.level}, {"expected_intensity", c.expected_intensity},
                 {"blocks", c.blocks}, {"pmf", c.pmf}, {"max_abs_error", worst}};
  return res;
}

void add_output_options(CLI::App* sub, Output& o) {
  sub->add_option("--csv", o.csv, "CSV destination ('-' for stdout)");
  sub->add_option("--json", o.json_path, "JSON summary destination ('-' for stdout; empty: none)");
  sub->add_option("--seed", o.seed, "Base RNG seed");
  sub->add_option("--threads", o.threads, "Worker threads for replications (0: MACQ_THREADS or all cores)");
}

void add_system_options(CLI::App* sub, SimParams& s, bool with_channel) {
  sub->add_option("--K", s.K, "Number of users");
  sub->add_option("--lambda-total", s.lambda_total, "System arrival rate, packets per slot");
  sub->add_option("--p-exc", s.p_exc, "Per-slot exceedance probability (0: 1/K)");
  if (!with_channel) return;
  sub->add_option("--channel", s.channel, "bernoulli | gaussian | gilbert");
  sub->add_option("--mu", s.mu, "gaussian: capacity mean");
  sub->add_option("--sigma", s.sigma, "gaussian: capacity standard deviation");
  sub->add_option("--threshold", s.threshold, "gaussian: transmission threshold");
}

void add_gilbert_options(CLI::App* sub, SimParams& s) {
  sub->add_option("--alpha", s.alpha, "Good->Bad switching probability per slot");
  sub->add_option("--beta", s.beta, "Bad->Good switching probability per slot");
  sub->add_option("--mu-g", s.mu_g, "Good-state system exceedance rate (per user: mu_g / K)");
  sub->add_option("--mu-b", s.mu_b, "Bad-state system exceedance rate (per user: mu_b / K)");
}

void add_horizon_options(CLI::App* sub, SimParams& s) {
  sub->add_option("--slots", s.slots, "Simulation horizon in slots");
  sub->add_option("--warmup", s.warmup, "Discarded slots (-1: slots / 10)");
  sub->add_option("--replications", s.replications, "Independent replications");
}

void add_mixture_options(CLI::App* sub, Params& P) {
  sub->add_option("--K", P.K_evt, "Number of users");
  sub->add_option("--p", P.p, "Stationary Good-state probability");
  sub->add_option("--mu-g", P.mu_g, "Good-state capacity mean");
  sub->add_option("--sigma-g", P.sigma_g, "Good-state capacity standard deviation");
  sub->add_option("--mu-b", P.mu_b, "Bad-state capacity mean");
  sub->add_option("--sigma-b", P.sigma_b, "Bad-state capacity standard deviation");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"macq: queues sharing a collision channel under threshold scheduling"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a 'key = value' file; dotted keys (sim.K = 7) address a subcommand");

  Params P;
  std::vector<CLI::App*> subs;
  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    add_output_options(s, P.out);
    subs.push_back(s);
    return s;
  };

  auto* s_sim = sub("sim", "Slotted simulation of the K-queue system");
  add_system_options(s_sim, P.sim, true);
  add_gilbert_options(s_sim, P.sim);
  s_sim->add_option("--sigma-g", P.sim.sigma_g, "gilbert: Good-state capacity spread (dominance check only)");
  s_sim->add_option("--sigma-b", P.sim.sigma_b, "gilbert: Bad-state capacity spread (dominance check only)");
  add_horizon_options(s_sim, P.sim);

  auto* s_m1 = sub("model1", "Coupled status chains with Wegstein-closed success probabilities");
  add_system_options(s_m1, P.sim, false);
  s_m1->add_option("--tol", P.tol, "Fixed-point tolerance");
  s_m1->add_option("--max-iter", P.max_iter, "Fixed-point iteration cap");

  auto* s_m2 = sub("model2", "Constant collision probability decoupling (M/M/1 per user)");
  s_m2->add_option("--K", P.sim.K, "Number of users");
  s_m2->add_option("--lambda-total", P.sim.lambda_total, "System arrival rate, packets per slot");
  s_m2->add_option("--tau-per-user", P.tau, "Per-user exceedance rate tau (0: 1/K)");
  s_m2->add_option("--mode", P.mode, "exact | asymptotic");

  auto* s_m3 = sub("model3", "Gilbert-Elliott modulated queue with collision fixed point");
  s_m3->add_option("--K", P.sim.K, "Number of users");
  s_m3->add_option("--lambda-total", P.sim.lambda_total, "System arrival rate, packets per slot");
  add_gilbert_options(s_m3, P.sim);
  s_m3->add_option("--p-succ-init", P.p_succ_init, "Starting p_succ");
  s_m3->add_option("--tol", P.tol, "Fixed-point tolerance");
  s_m3->add_option("--max-iter", P.max_iter, "Fixed-point iteration cap");
  s_m3->add_flag("--pmf", P.pmf, "Emit the queue-length table instead of the summary row");

  auto* s_evt = sub("evt", "Extreme-value capacity scaling");
  add_mixture_options(s_evt, P);
  s_evt->add_flag("--finite-k", P.finite_k, "Use (1-1/K)^(K-1) instead of e^-1 for the utilized-slot probability");

  auto* s_sweep = sub("sweep", "Threshold sweep over exceedance probabilities");
  add_system_options(s_sweep, P.sim, false);
  s_sweep->add_option("--grid", P.grid, "a:b:step or comma-separated list of exceedance probabilities");
  add_horizon_options(s_sweep, P.sim);

  auto* s_max = sub("maxcap", "Simulated maxima of Good/Bad capacities");
  add_mixture_options(s_max, P);
  s_max->add_option("--samples", P.samples, "Number of maxima");
  s_max->add_option("--mode", P.max_mode, "stationary | evolving | both");
  s_max->add_option("--switch", P.switch_rate, "alpha + beta of the state chain");

  auto* s_exc = sub("exceed", "Exceedance counts per block against the Poisson law");
  s_exc->add_option("--n", P.n, "Draws per block");
  s_exc->add_option("--tau", P.tau_exceed, "Target intensity (<= 0: use --e-neg-tau)");
  s_exc->add_option("--e-neg-tau", P.e_neg_tau, "exp(-tau), the target probability of no exceedance");
  s_exc->add_option("--blocks", P.blocks, "Number of blocks");
  s_exc->add_option("--mu", P.mu_g, "Capacity mean");
  s_exc->add_option("--sigma", P.sigma_g, "Capacity standard deviation");
  s_exc->add_option("--rule", P.rule, "Level rule: exact | asymptotic");

  auto* s_rep = sub("repro", "Canned experiment with analytic and simulated columns side by side");
  std::string ids;
  for (const auto& id : kReproIds) ids += (ids.empty() ? "" : ", ") + id;
  s_rep->add_option("id", P.repro_id, "One of: " + ids)->required();
  s_rep->add_option("--K", P.repro_K, "Restrict to one user count (0: the scenario's own set)");
  s_rep->add_option("--slots", P.sim.slots, "Simulation horizon in slots");
  s_rep->add_option("--replications", P.sim.replications, "Independent replications");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << error_line("usage", e.what(), kValidationError);
    return kValidationError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Result res;
    if (name == "sim") res = do_sim(P);
    else if (name == "model1") res = do_model1(P);
    else if (name == "model2") res = do_model2(P);
    else if (name == "model3") res = do_model3(P);
    else if (name == "evt") res = do_evt(P);
    else if (name == "sweep") res = do_sweep(P);
    else if (name == "maxcap") res = do_maxcap(P);
    else if (name == "exceed") res = do_exceed(P);
    else {
      ReproParams rp;
      if (P.repro_K > 0) rp.K = P.repro_K;
      rp.slots = P.sim.slots;
      rp.replications = P.sim.replications;
      rp.seed = P.out.seed;
      rp.threads = P.out.threads;
      res = repro(P.repro_id, rp);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!P.out.csv.empty()) write_text(P.out.csv, io::to_csv(res.table), out);
    if (!P.out.json_path.empty()) {
      json j;
      j["schema"] = "macq.v1";
      j["command"] = name;
      json inputs = json::object(), defaults = json::array();
      echo_inputs(chosen, inputs, defaults);
      // Full-precision values where the captured default string is rounded.
      if (inputs.contains("lambda-total")) inputs["lambda-total"] = P.sim.lambda_total;
      if (name == "evt" || name == "maxcap") inputs["mu-g"] = P.mu_g;
      for (const auto& [k, v] : res.resolved.items()) inputs[k] = v;
      j["inputs"] = inputs;
      j["defaults"] = defaults;
      j["outputs"] = res.outputs;
      j["residuals"] = res.residuals;
      j["runtime"] = {{"seconds", seconds}, {"threads", P.out.threads > 0 ? P.out.threads : sim::worker_threads()}};
      write_text(P.out.json_path, j.dump(2) + "\n", out);
    }
    return kOk;
  } catch (const ValidationError& e) {
    err << error_line("validation", e.what(), kValidationError, e.issues());
    return kValidationError;
  } catch (const InstabilityError& e) {
    err << error_line("instability", e.what(), kInstability);
    return kInstability;
  } catch (const ConvergenceError& e) {
    err << error_line("convergence", e.what(), kConvergenceError);
    return kConvergenceError;
  } catch (const model3::RootSelectionError& e) {
    err << error_line("convergence", e.what(), kConvergenceError);
    return kConvergenceError;
  } catch (const std::invalid_argument& e) {
    err << error_line("validation", e.what(), kValidationError);
    return kValidationError;
  } catch (const std::exception& e) {
    err << error_line("error", e.what(), kOtherError);
    return kOtherError;
  }
}

}  // namespace macq::cli
