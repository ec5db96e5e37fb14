#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "macq/core.hpp"
#include "macq/coupled_chains.hpp"
#include "macq/evt.hpp"
#include "macq/gilbert_queue.hpp"
#include "macq/meanfield.hpp"
#include "macq/sim.hpp"

namespace py = pybind11;
using namespace macq;

namespace {

meanfield::Mode parse_mode(const std::string& m) {
  if (m == "exact") return meanfield::Mode::ExactK;
  if (m == "asymptotic") return meanfield::Mode::Asymptotic;
  throw ValidationError({"mode: expected 'exact' or 'asymptotic'"});
}

StationaryMixture mixture(double p, double mu_g, double sigma_g, double mu_b, double sigma_b) {
  return StationaryMixture::with_weight(p, {mu_g, sigma_g}, {mu_b, sigma_b});
}

py::dict estimate(const sim::Estimate& e) {
  py::dict d;
  d["mean"] = e.mean;
  d["half_width"] = e.half_width;
  return d;
}

py::dict sim_report(const sim::SimReport& r) {
  py::dict d;
  d["K"] = r.K;
  d["lambda_i"] = r.lambda_i;
  d["mean_queue_len"] = estimate(r.mean_queue_len);
  d["queue_incl_hol"] = estimate(r.queue_incl_hol);
  d["W_q"] = estimate(r.W_q);
  d["W_s"] = estimate(r.W_s);
  d["total_delay"] = estimate(r.total_delay);
  d["p_succ"] = estimate(r.p_succ_given_attempt);
  d["throughput"] = estimate(r.throughput);
  d["avg_backlogged"] = estimate(r.avg_backlogged);
  d["P_I"] = estimate(r.P_I);
  d["P_A"] = estimate(r.P_A);
  d["P_B"] = estimate(r.P_B);
  d["queue_hist"] = r.queue_hist;
  d["arrivals"] = r.arrivals;
  d["departures"] = r.departures;
  d["in_flight"] = r.in_flight;
  d["low_confidence"] = r.low_confidence;
  d["notes"] = r.notes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_macq, m) {
  m.doc() = "Collision-channel queueing models, slotted simulator and extreme-value capacity scaling";

  auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InstabilityError>(m, "InstabilityError", PyExc_RuntimeError);
  static py::exception<ConvergenceError> convergence(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConvergenceError& e) {
      convergence(e.what());
    } catch (const model3::RootSelectionError& e) {
      convergence(e.what());
    }
  });
  (void)validation;

  m.def(
      "solve_pcoll",
      [](double lam, double tau, int K, const std::string& mode) {
        const auto s = meanfield::solve_pcoll(lam, tau, K, parse_mode(mode));
        py::dict d;
        d["p_coll"] = s.p_coll;
        d["p_succ"] = s.p_succ;
        d["rho"] = s.rho;
        d["empty_prob"] = s.empty_prob;
        d["mean_queue"] = s.mean_queue;
        d["W_q"] = s.W_q;
        d["W_s"] = s.W_s;
        d["sojourn"] = s.sojourn;
        d["residual"] = s.residual;
        return d;
      },
      py::arg("lam"), py::arg("tau"), py::arg("K"), py::arg("mode") = "exact",
      "Smallest stable root of the per-user collision fixed point (per-user rates lam, tau).");

  m.def(
      "solve_model1",
      [](int K, double lambda_i, double p_exc) {
        const auto s = model1::solve_model1(K, lambda_i, p_exc);
        py::dict d;
        d["P_I"] = s.P_I;
        d["P_A"] = s.P_A;
        d["P_B"] = s.P_B;
        d["P_1given1"] = s.boundary.P_1given1;
        d["P_0given2"] = s.boundary.P_0given2;
        d["p_succ"] = s.p_succ;
        d["L"] = s.L;
        d["W_q"] = s.W_q;
        d["W_s"] = s.W_s;
        d["D"] = s.D;
        d["iterations"] = s.iterations;
        d["residual"] = s.residual;
        d["states"] = s.states;
        return d;
      },
      py::arg("K"), py::arg("lambda_i"), py::arg("p_exc"), "Coupled status-chain model, homogeneous users.");

  m.def(
      "solve_model3",
      [](int K, double lambda_i, double mu_g, double mu_b, double alpha, double beta) {
        const auto s = model3::solve_model3(K, lambda_i, mu_g, mu_b, alpha, beta);
        py::dict d;
        d["p_succ"] = s.p_succ;
        d["z0"] = s.z0;
        d["mu_hat"] = s.mu_hat;
        d["pi_g0"] = s.steady.boundary.pi_g0;
        d["pi_b0"] = s.steady.boundary.pi_b0;
        d["Qbar"] = s.Qbar;
        d["W"] = s.W;
        d["P_t"] = s.P_t;
        d["pi_g"] = s.steady.pi_g;
        d["pi_b"] = s.steady.pi_b;
        d["iterations"] = s.iterations;
        return d;
      },
      py::arg("K"), py::arg("lambda_i"), py::arg("mu_g"), py::arg("mu_b"), py::arg("alpha") = 0.1,
      py::arg("beta") = 0.1, "Gilbert-Elliott modulated queue with the collision fixed point (per-user rates).");

  m.def(
      "gumbel_constants",
      [](double K, double p, double mu_g, double sigma_g, double mu_b, double sigma_b) {
        const auto g = evt::gumbel_constants(K, mixture(p, mu_g, sigma_g, mu_b, sigma_b));
        return py::make_tuple(g.a, g.b);
      },
      py::arg("K"), py::arg("p"), py::arg("mu_g"), py::arg("sigma_g"), py::arg("mu_b"), py::arg("sigma_b"),
      "Normalizing constants (a_K, b_K) of the maximum of K mixture capacities.");

  m.def(
      "expected_max",
      [](double K, double p, double mu_g, double sigma_g, double mu_b, double sigma_b) {
        return evt::expected_max(K, mixture(p, mu_g, sigma_g, mu_b, sigma_b));
      },
      py::arg("K"), py::arg("p"), py::arg("mu_g"), py::arg("sigma_g"), py::arg("mu_b"), py::arg("sigma_b"));

  m.def(
      "threshold_for_one",
      [](double K, double p, double mu_g, double sigma_g, double mu_b, double sigma_b, const std::string& method) {
        evt::ThresholdMethod tm;
        if (method == "closed_form") tm = evt::ThresholdMethod::ClosedForm;
        else if (method == "numeric") tm = evt::ThresholdMethod::Numeric;
        else throw ValidationError({"method: expected 'closed_form' or 'numeric'"});
        return evt::threshold_for_one(K, mixture(p, mu_g, sigma_g, mu_b, sigma_b), tm);
      },
      py::arg("K"), py::arg("p"), py::arg("mu_g"), py::arg("sigma_g"), py::arg("mu_b"), py::arg("sigma_b"),
      py::arg("method") = "closed_form");

  m.def(
      "distributed_capacity",
      [](double K, double p, double mu_g, double sigma_g, double mu_b, double sigma_b, bool finite_k) {
        return evt::distributed_capacity(K, mixture(p, mu_g, sigma_g, mu_b, sigma_b), finite_k).value;
      },
      py::arg("K"), py::arg("p"), py::arg("mu_g"), py::arg("sigma_g"), py::arg("mu_b"), py::arg("sigma_b"),
      py::arg("finite_k") = false);

  m.def(
      "run_sim",
      [](int K, double lambda_total, double p_exc, std::int64_t slots, std::int64_t warmup, int replications,
         std::uint64_t seed, int threads) {
        SystemConfig c;
        c.K = K;
        c.lambda_total = lambda_total;
        c.slots = slots;
        c.warmup = warmup >= 0 ? warmup : slots / 10;
        c.replications = replications;
        c.seed = seed;
        sim::SimOptions o;
        o.threads = threads;
        sim::SimReport r;
        {
          py::gil_scoped_release release;
          r = sim::run_sim(c, BernoulliExceedance{p_exc > 0 ? p_exc : 1.0 / K}, o);
        }
        return sim_report(r);
      },
      py::arg("K"), py::arg("lambda_total"), py::arg("p_exc") = 0.0, py::arg("slots") = 1000000,
      py::arg("warmup") = -1, py::arg("replications") = 8, py::arg("seed") = 1, py::arg("threads") = 0,
      "Slotted simulation with i.i.d. exceedance (p_exc <= 0 means 1/K; warmup < 0 means slots/10).");

  m.def(
      "sample_max_capacity",
      [](int K, double p, double mu_g, double sigma_g, double mu_b, double sigma_b, std::int64_t n,
         const std::string& mode, double switch_rate, std::uint64_t seed) {
        GilbertElliott ch;
        ch.beta = switch_rate * p;
        ch.alpha = switch_rate - ch.beta;
        ch.good = {mu_g, sigma_g};
        ch.bad = {mu_b, sigma_b};
        sim::MaxMode mm;
        if (mode == "stationary") mm = sim::MaxMode::Stationary;
        else if (mode == "evolving") mm = sim::MaxMode::Evolving;
        else throw ValidationError({"mode: expected 'stationary' or 'evolving'"});
        return sim::sample_max_capacity(K, ch, n, mm, seed);
      },
      py::arg("K"), py::arg("p"), py::arg("mu_g"), py::arg("sigma_g"), py::arg("mu_b"), py::arg("sigma_b"),
      py::arg("n"), py::arg("mode") = "stationary", py::arg("switch_rate") = 0.2, py::arg("seed") = 1);

  m.def(
      "count_exceedances",
      [](std::int64_t n, double tau, std::int64_t blocks, std::uint64_t seed, const std::string& rule) {
        sim::LevelRule lr;
        if (rule == "exact") lr = sim::LevelRule::Exact;
        else if (rule == "asymptotic") lr = sim::LevelRule::Asymptotic;
        else throw ValidationError({"rule: expected 'exact' or 'asymptotic'"});
        const auto c = sim::count_exceedances(n, tau, {0.0, 1.0}, blocks, seed, lr);
        py::dict d;
        d["level"] = c.level;
        d["expected_intensity"] = c.expected_intensity;
        d["pmf"] = c.pmf;
        return d;
      },
      py::arg("n"), py::arg("tau"), py::arg("blocks"), py::arg("seed") = 1, py::arg("rule") = "exact",
      "Exceedances of u_n(tau) per block of n standard Gaussian draws.");
}
