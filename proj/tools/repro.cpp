#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

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

std::vector<double> parse_grid(const std::string& spec) {
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ValidationError({"grid: cannot parse '" + s + "' in '" + spec + "'"});
    return v;
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw ValidationError({"grid: expected a:b:step, got '" + spec + "'"});
    const double a = num(parts[0]), b = num(parts[1]), step = num(parts[2]);
    if (!(step > 0.0) || !(b >= a)) throw ValidationError({"grid: need step > 0 and b >= a"});
    const auto n = static_cast<long long>(std::floor((b - a) / step + 1e-9)) + 1;
    for (long long i = 0; i < n; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(num(part));
  }
  if (out.empty()) throw ValidationError({"grid: empty"});
  return out;
}

namespace {

const double kLambdaCritical = (1.0 / std::numbers::e) * (1.0 - 0.001);

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

double rel(double model, double sim) { return std::abs(model - sim) / std::abs(sim); }

// Within `tol` relative, or within three half-widths, whichever is looser.
bool close(double model, const sim::Estimate& e, double tol) {
  return rel(model, e.mean) <= tol || std::abs(model - e.mean) <= 3.0 * e.half_width;
}

SystemConfig config(int K, double lambda_total, const ReproParams& p) {
  SystemConfig c;
  c.K = K;
  c.lambda_total = lambda_total;
  c.slots = p.slots;
  c.warmup = p.slots / 10;
  c.replications = p.replications;
  c.seed = p.seed;
  return c;
}

sim::SimReport simulate(int K, double lambda_total, const ChannelModel& ch, const ReproParams& p) {
  sim::SimOptions o;
  o.threads = p.threads;
  return sim::run_sim(config(K, lambda_total, p), ch, o);
}

std::vector<int> ks(const ReproParams& p, std::vector<int> fallback) {
  if (p.K) return {*p.K};
  return fallback;
}

json table_json(const io::Table& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json o = json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(r[i], &used);
        if (used == r[i].size()) {
          o[t.header[i]] = v;
          continue;
        }
      } catch (const std::exception&) {
      }
      o[t.header[i]] = r[i];
    }
    rows.push_back(o);
  }
  return rows;
}

Result model1_vs_sim(const ReproParams& p) {
  Result res;
  res.table.header = {"K",      "p_succ_model1", "p_succ_sim", "L_model1", "L_sim",  "L_hw",   "W_q_model1",
                      "W_q_sim", "W_q_hw",       "W_s_model1", "W_s_sim",  "W_s_hw", "pass"};
  for (int K : ks(p, {2, 3, 4, 5, 6, 7})) {
    const double pe = 1.0 / K;
    const auto m = model1::solve_model1(K, kLambdaCritical / K, pe);
    const auto s = simulate(K, kLambdaCritical, BernoulliExceedance{pe}, p);
    const bool ok = close(m.L, s.mean_queue_len, 0.10) && close(m.W_q, s.W_q, 0.10) && close(m.W_s, s.W_s, 0.10);
    res.table.add_row({std::to_string(K), format_number(m.p_succ), format_number(s.p_succ_given_attempt.mean),
                       format_number(m.L), format_number(s.mean_queue_len.mean),
                       format_number(s.mean_queue_len.half_width), format_number(m.W_q), format_number(s.W_q.mean),
                       format_number(s.W_q.half_width), format_number(m.W_s), format_number(s.W_s.mean),
                       format_number(s.W_s.half_width), verdict(ok)});
  }
  return res;
}

Result psucc_compare(const ReproParams& p) {
  Result res;
  res.table.header = {"K",           "p_succ_model1",  "p_succ_model2", "p_succ_sim", "p_succ_sim_hw",
                      "gap_m1_m2",   "gap_m2_sim",     "pass"};
  for (int K : ks(p, {2, 3, 4, 5, 6, 7, 8, 9, 10})) {
    const double pe = 1.0 / K;
    const double lam = kLambdaCritical / K;
    const auto m1 = model1::solve_model1(K, lam, pe);
    const auto m2 = meanfield::solve_pcoll(lam, pe, K, meanfield::Mode::ExactK);
    const auto s = simulate(K, kLambdaCritical, BernoulliExceedance{pe}, p);
    const double g12 = std::abs(m1.p_succ - m2.p_succ) / m1.p_succ;
    const double g2s = rel(m2.p_succ, s.p_succ_given_attempt.mean);
    std::string pass = "-";
    if (K == 7) pass = verdict(g12 <= 0.025);
    if (K == 4) pass = verdict(g2s <= 0.07);
    if (K == 10) pass = verdict(g2s <= 0.03);
    res.table.add_row({std::to_string(K), format_number(m1.p_succ), format_number(m2.p_succ),
                       format_number(s.p_succ_given_attempt.mean), format_number(s.p_succ_given_attempt.half_width),
                       format_number(g12), format_number(g2s), pass});
  }
  return res;
}

Result service_time(const ReproParams& p) {
  // The analytic service time counts the successful slot; the simulator's W_s does not.
  Result res;
  res.table.header = {"K", "W_s_model2", "W_s_sim_incl_tx", "W_s_sim_hw", "rel_gap", "pass"};
  for (int K : ks(p, {10, 20, 50})) {
    const double tau = 1.0 / K;
    const auto m = meanfield::solve_pcoll(0.3 / K, tau, K, meanfield::Mode::ExactK);
    const auto s = simulate(K, 0.3, BernoulliExceedance{tau}, p);
    const double sim_ws = s.W_s.mean + 1.0;
    const double g = rel(m.W_s, sim_ws);
    res.table.add_row({std::to_string(K), format_number(m.W_s), format_number(sim_ws), format_number(s.W_s.half_width),
                       format_number(g), verdict(g <= 0.10)});
  }
  return res;
}

Result threshold_sweep(const ReproParams& p) {
  const int K = p.K.value_or(50);
  const auto grid = parse_grid("0.005:0.06:0.0025");
  sim::SimOptions o;
  o.threads = p.threads;
  const auto rows = sim::sweep_threshold(config(K, 0.35, p), grid, o);
  double best_thr = 0.0, plateau = INFINITY;
  for (const auto& r : rows) {
    best_thr = std::max(best_thr, r.report.throughput.mean);
    plateau = std::min(plateau, r.report.total_delay.mean);
  }
  Result res;
  res.table.header = {"p_exc", "throughput", "throughput_hw", "total_delay", "total_delay_hw", "delay_over_plateau",
                      "pass"};
  const double target = 1.0 / K;
  for (const auto& r : rows) {
    const double x = r.p_exc;
    std::string pass = "-";
    if (std::abs(x - target) < 1e-9) pass = verdict(r.report.throughput.mean >= 0.95 * best_thr);
    if (x <= 0.010 + 1e-12 || x >= 0.035 - 1e-12) pass = verdict(r.report.total_delay.mean >= 10.0 * plateau);
    res.table.add_row({format_number(x), format_number(r.report.throughput.mean),
                       format_number(r.report.throughput.half_width), format_number(r.report.total_delay.mean),
                       format_number(r.report.total_delay.half_width), format_number(r.report.total_delay.mean / plateau),
                       pass});
  }
  res.outputs["plateau_delay"] = plateau;
  res.outputs["max_throughput"] = best_thr;
  return res;
}

struct GilbertRow {
  int K;
  double lambda_total;
  model3::ModulatedQueueSolution m;
  sim::SimReport s;
};

std::vector<GilbertRow> gilbert_rows(const ReproParams& p) {
  std::vector<GilbertRow> out;
  for (double lt : {0.1, 0.3}) {
    for (int K : ks(p, {10, 50, 150})) {
      const double mg = 0.7 / K, mb = 0.5 / K;
      auto m = model3::solve_model3(K, lt / K, mg, mb, 0.1, 0.1);
      auto s = simulate(K, lt, GilbertElliott{0.1, 0.1, {mg, 1.0}, {mb, 0.5}, 0.0}, p);
      out.push_back({K, lt, std::move(m), std::move(s)});
    }
  }
  return out;
}

Result gilbert_psucc(const ReproParams& p) {
  Result res;
  res.table.header = {"K", "lambda_total", "p_succ_model3", "p_succ_sim", "p_succ_sim_hw", "rel_gap", "pass"};
  for (const auto& r : gilbert_rows(p)) {
    const double g = rel(r.m.p_succ, r.s.p_succ_given_attempt.mean);
    res.table.add_row({std::to_string(r.K), format_number(r.lambda_total), format_number(r.m.p_succ),
                       format_number(r.s.p_succ_given_attempt.mean), format_number(r.s.p_succ_given_attempt.half_width),
                       format_number(g), verdict(g <= 0.05)});
  }
  return res;
}

Result gilbert_queue(const ReproParams& p) {
  Result res;
  res.table.header = {"K",     "lambda_total", "Qbar_model3", "Qbar_sim", "Qbar_sim_hw", "W_model3",
                      "W_sim", "W_sim_hw",     "pass"};
  for (const auto& r : gilbert_rows(p)) {
    const auto& q = r.s.queue_incl_hol;
    const auto& w = r.s.total_delay;
    const bool ok = rel(r.m.Qbar, q.mean) <= 0.10 && rel(r.m.W, w.mean) <= 0.10;
    res.table.add_row({std::to_string(r.K), format_number(r.lambda_total), format_number(r.m.Qbar),
                       format_number(q.mean), format_number(q.half_width), format_number(r.m.W), format_number(w.mean),
                       format_number(w.half_width), verdict(ok)});
  }
  return res;
}

Result maxcap_gumbel(const ReproParams& p) {
  const int K = p.K.value_or(5000);
  const auto mix = StationaryMixture::with_weight(0.5, {std::numbers::sqrt2, 0.5}, {0.0, 0.25});
  GilbertElliott ch{0.1, 0.1, mix.good, mix.bad, 0.0};
  const auto g = evt::gumbel_constants(K, mix);
  const double em = evt::expected_max(K, mix);
  Result res;
  res.table.header = {"mode", "samples", "mean", "expected_max", "rel_gap", "ks_gumbel", "pass"};
  for (auto mode : {sim::MaxMode::Stationary, sim::MaxMode::Evolving}) {
    auto x = sim::sample_max_capacity(K, ch, 10000, mode, p.seed);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double F = evt::gumbel_cdf(x[i], g);
      ks = std::max({ks, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
    }
    const double gap = std::abs(mean - em) / em;
    res.table.add_row({sim::to_string(mode), std::to_string(x.size()), format_number(mean), format_number(em),
                       format_number(gap), format_number(ks), verdict(gap <= 0.02 && ks < 0.05)});
  }
  res.outputs["a_K"] = g.a;
  res.outputs["b_K"] = g.b;
  return res;
}

Result poisson_table(const ReproParams& p) {
  const double tau = -std::log(0.3961);
  const auto c = sim::count_exceedances(10000, tau, {0.0, 1.0}, 30000, p.seed, sim::LevelRule::Exact);
  Result res;
  res.table.header = {"k", "empirical", "poisson", "abs_error", "pass"};
  for (int k = 0; k < 8; ++k) {
    const double emp = k < static_cast<int>(c.pmf.size()) ? c.pmf[k] : 0.0;
    const double poi = std::exp(-tau + k * std::log(tau) - std::lgamma(k + 1.0));
    const double err = std::abs(emp - poi);
    res.table.add_row({std::to_string(k), format_number(emp), format_number(poi), format_number(err),
                       k <= 5 ? verdict(err <= 0.01) : "-"});
  }
  res.outputs["tau"] = tau;
  res.outputs["level"] = c.level;
  return res;
}

}  // namespace

Result repro(const std::string& id, const ReproParams& p) {
  if (p.K && *p.K < 1) throw ValidationError({"K: K >= 1 required"});
  if (p.slots < 1 || p.replications < 1) throw ValidationError({"slots and replications must be positive"});
  Result res;
  if (id == "model1-vs-sim") res = model1_vs_sim(p);
  else if (id == "psucc-compare") res = psucc_compare(p);
  else if (id == "service-time") res = service_time(p);
  else if (id == "threshold-sweep") res = threshold_sweep(p);
  else if (id == "gilbert-psucc") res = gilbert_psucc(p);
  else if (id == "gilbert-queue") res = gilbert_queue(p);
  else if (id == "maxcap-gumbel") res = maxcap_gumbel(p);
  else if (id == "poisson-table") res = poisson_table(p);
  else {
    std::string known;
    for (const auto& k : kReproIds) known += (known.empty() ? "" : ", ") + k;
    throw ValidationError({"unknown repro id '" + id + "'; expected one of " + known});
  }
  bool all = true;
  const auto col = std::find(res.table.header.begin(), res.table.header.end(), "pass") - res.table.header.begin();
  for (const auto& r : res.table.rows) all = all && r[col] != "FAIL";
  res.outputs["id"] = id;
  res.outputs["rows"] = table_json(res.table);
  res.outputs["all_pass"] = all;
  return res;
}

}  // namespace macq::cli
