#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "macq/core.hpp"
#include "macq/gilbert_queue.hpp"
#include "macq/meanfield.hpp"
#include "macq/sim.hpp"
#include "oracles.hpp"

using namespace macq;
using namespace macq::sim;

namespace {

SystemConfig config(int K, double lambda_total, std::int64_t slots, int reps, std::uint64_t seed = 1) {
  SystemConfig c;
  c.K = K;
  c.lambda_total = lambda_total;
  c.slots = slots;
  c.warmup = slots / 10;
  c.replications = reps;
  c.seed = seed;
  return c;
}

bool within(const Estimate& e, double target, double n_hw) { return std::abs(e.mean - target) <= n_hw * e.half_width; }

// Single queue with Bernoulli(lam) arrivals and per-slot success probability s,
// arrival before transmission. Returns the mean number present at the
// transmission point, from the stationary law of the end-of-slot count.
double single_queue_at_tx(double lam, double s, int N = 2000) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N, N);
  for (int n = 0; n < N; ++n) {
    for (int a = 0; a < 2; ++a) {
      const double pa = a ? lam : 1 - lam;
      const int x = n + a;
      if (x == 0) {
        P(n, 0) += pa;
        continue;
      }
      P(n, std::min(x - 1, N - 1)) += pa * s;
      P(n, std::min(x, N - 1)) += pa * (1 - s);
    }
  }
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(N, N);
  A.row(N - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  rhs[N - 1] = 1.0;
  const Eigen::VectorXd pi = A.partialPivLu().solve(rhs);
  double mean = 0.0;
  for (int n = 0; n < N; ++n) mean += pi[n] * (n + lam);
  return mean;
}

double poisson_pmf(int k, double tau) { return std::exp(-tau + k * std::log(tau) - std::lgamma(k + 1.0)); }

}  // namespace

TEST_CASE("stream seeds follow the documented splitmix scheme") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(stream_seed(5, 2, 3) == splitmix64(splitmix64(splitmix64(5) + 2) + 3));
  CHECK(stream_seed(5, 2, 3) != stream_seed(5, 3, 2));
}

TEST_CASE("single user with certain exceedance never waits") {
  const auto r = run_sim(config(1, 0.1, 200000, 4), BernoulliExceedance{1.0});
  CHECK(r.p_succ_given_attempt.mean == 1.0);
  CHECK(r.W_s.mean == 0.0);
  CHECK(r.W_q.mean == 0.0);
  CHECK(r.total_delay.mean == 1.0);
  CHECK(r.mean_queue_len.mean == 0.0);
}

TEST_CASE("single user: mean queue against the exact slotted single-server queue") {
  for (double s : {1.0, 0.5, 0.3}) {
    const double lam = 0.1;
    const auto r = run_sim(config(1, lam, 1000000, 8, 3), BernoulliExceedance{s});
    const double ref = single_queue_at_tx(lam, s);
    INFO("p_exc = " << s << ": sim " << r.queue_incl_hol.mean << " +- " << r.queue_incl_hol.half_width << ", chain "
                    << ref);
    if (s == 1.0) CHECK(r.queue_incl_hol.mean == doctest::Approx(lam).epsilon(0.02));
    else CHECK(within(r.queue_incl_hol, ref, 3.0));
    // Little's law with the measured delay.
    CHECK(r.queue_incl_hol.mean == doctest::Approx(lam * r.total_delay.mean).epsilon(0.01));
  }
}

TEST_CASE("single user with certain exceedance: mean queue against M/M/1 formulas with no collisions") {
  const double lam = 0.1;
  const auto r = run_sim(config(1, lam, 1000000, 8, 5), BernoulliExceedance{1.0});
  const auto m = meanfield::mm1_metrics(lam, 1.0, 0.0);
  MESSAGE("sim queue incl. head-of-line " << r.queue_incl_hol.mean << " +- " << r.queue_incl_hol.half_width
                                          << ", M/M/1 mean " << m.mean_queue);
  CHECK(within(r.queue_incl_hol, m.mean_queue, 3.0));
}

TEST_CASE("conservation, bounds and delay decomposition") {
  for (const ChannelModel& ch :
       {ChannelModel{BernoulliExceedance{0.2}}, ChannelModel{GaussianIID{{0.0, 1.0}, 0.8}},
        ChannelModel{GilbertElliott{0.1, 0.1, {0.7, 1.0}, {0.5, 0.5}, 0.0}}}) {
    const auto r = run_sim(config(5, 0.3, 100000, 3), ch);
    CHECK(r.arrivals == r.departures + r.in_flight);
    CHECK(r.throughput.mean <= 1.0);
    CHECK(r.p_succ_given_attempt.mean >= 0.0);
    CHECK(r.p_succ_given_attempt.mean <= 1.0);
    CHECK(r.total_delay.mean == doctest::Approx(r.W_q.mean + r.W_s.mean + 1.0).epsilon(1e-12));
    double mass = 0.0;
    for (double h : r.queue_hist) mass += h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("slot trace: a success iff exactly one transmitter, status bookkeeping") {
  SimOptions o;
  o.trace_slots = 20000;
  const auto r = run_sim(config(6, 0.3, 20000, 1), BernoulliExceedance{1.0 / 6}, o);
  REQUIRE(r.trace.size() == 20000);
  for (std::size_t t = 0; t < r.trace.size(); ++t) {
    const auto& s = r.trace[t];
    REQUIRE(s.success == (s.transmitters.size() == 1));
    REQUIRE(static_cast<int>(s.transmitters.size()) <= s.backlogged);
    if (t + 1 < r.trace.size()) {
      const auto& next = r.trace[t + 1].status;
      int active = 0;
      for (int u = 0; u < 6; ++u) {
        active += next[u] == UserStatus::Active;
        if (next[u] == UserStatus::Active) REQUIRE((s.success && s.transmitters.front() == u));
      }
      REQUIRE(active <= 1);
    }
  }
}

TEST_CASE("fixed seed is bit-reproducible and independent of the thread count") {
  const auto cfg = config(4, 0.3, 50000, 4, 77);
  SimOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = run_sim(cfg, BernoulliExceedance{0.25}, one);
  const auto b = run_sim(cfg, BernoulliExceedance{0.25}, many);
  const auto c = run_sim(cfg, BernoulliExceedance{0.25}, one);
  for (const auto* r : {&b, &c}) {
    CHECK(r->mean_queue_len.mean == a.mean_queue_len.mean);
    CHECK(r->W_q.mean == a.W_q.mean);
    CHECK(r->W_s.mean == a.W_s.mean);
    CHECK(r->throughput.mean == a.throughput.mean);
    CHECK(r->arrivals == a.arrivals);
    CHECK(r->queue_hist == a.queue_hist);
  }
  auto other = cfg;
  other.seed = 78;
  CHECK(run_sim(other, BernoulliExceedance{0.25}).arrivals != a.arrivals);
}

TEST_CASE("short horizon is flagged, not fatal") {
  const auto r = run_sim(config(3, 0.01, 1000, 2), BernoulliExceedance{0.3});
  CHECK(r.low_confidence);
  CHECK_FALSE(r.notes.empty());
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(run_sim(config(0, 0.1, 1000, 1), BernoulliExceedance{0.5}), ValidationError);
  CHECK_THROWS_AS(run_sim(config(2, 3.0, 1000, 1), BernoulliExceedance{0.5}), ValidationError);
  CHECK_THROWS_AS(sweep_threshold(config(2, 0.1, 1000, 1), {0.0, 0.5}), ValidationError);
}

TEST_CASE("degenerate sweep equals a single run") {
  const auto cfg = config(5, 0.3, 50000, 2, 9);
  const auto rows = sweep_threshold(cfg, {0.2});
  REQUIRE(rows.size() == 1);
  const auto r = run_sim(cfg, BernoulliExceedance{0.2});
  CHECK(rows[0].p_exc == 0.2);
  CHECK(rows[0].report.throughput.mean == r.throughput.mean);
  CHECK(rows[0].report.total_delay.mean == r.total_delay.mean);
  CHECK(rows[0].report.avg_backlogged.mean == r.avg_backlogged.mean);
}

TEST_CASE("Gilbert-Elliott channel attempts with probability 1 - exp(-mu)") {
  // Saturated single user: every slot is an attempt, so throughput is the attempt probability.
  GilbertElliott ch{0.1, 0.3, {0.7, 1.0}, {0.2, 0.5}, 0.0};
  const auto r = run_sim(config(1, 0.999, 400000, 4), ch);
  const double p = 0.3 / 0.4;
  const double expect = p * (1 - std::exp(-0.7)) + (1 - p) * (1 - std::exp(-0.2));
  CHECK(within(r.throughput, expect, 4.0));
}

TEST_CASE("collision probability at lambda/tau = 0.1 with 200 users") {
  const int K = 200;
  const double tau = 1.0 / K;
  const auto mf = meanfield::solve_pcoll(0.1 * tau, tau, 0, meanfield::Mode::Asymptotic);
  const auto r = run_sim(config(K, 0.1, 10000000, 2, 21), BernoulliExceedance{tau});
  MESSAGE("p_coll sim " << 1 - r.p_succ_given_attempt.mean << ", fixed point " << mf.p_coll);
  CHECK(std::abs((1 - r.p_succ_given_attempt.mean) - mf.p_coll) <= 0.01);
}

TEST_CASE("modulated queue: occupancy histogram against Model III") {
  const int K = 150;
  const double lam = 0.3 / K, mg = 0.7 / K, mb = 0.5 / K;
  const auto m3 = model3::solve_model3(K, lam, mg, mb, 0.1, 0.1);
  GilbertElliott ch{0.1, 0.1, {mg, 1.0}, {mb, 0.5}, 0.0};
  const auto r = run_sim(config(K, 0.3, 1000000, 8, 31), ch);
  int bad = 0;
  for (std::size_t m = 0; m < 10; ++m) {
    const double model = m3.steady.pi_g[m] + m3.steady.pi_b[m];
    const double dev = std::abs(r.queue_hist[m] - model) / r.queue_hist_half_width[m];
    MESSAGE("bin " << m << ": sim " << r.queue_hist[m] << " +- " << r.queue_hist_half_width[m] << ", model " << model);
    if (dev > 3.0) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("single-user maxima are the capacity law itself") {
  GilbertElliott ch{1e-9, 1.0, {1.5, 0.7}, {0.0, 0.1}, 0.0};  // Good with probability ~1
  const auto x = sample_max_capacity(1, ch, 20000, MaxMode::Stationary, 3);
  const double d = oracle::ks_distance(x, [](double v) { return normal_cdf((v - 1.5) / 0.7); });
  CHECK(d < 1.36 / std::sqrt(20000.0));
}

TEST_CASE("stationary and evolving sampling give the same maximum law") {
  GilbertElliott ch{0.1, 0.1, {std::numbers::sqrt2, 0.5}, {0.0, 0.25}, 0.0};
  const auto a = sample_max_capacity(5000, ch, 10000, MaxMode::Stationary, 101);
  const auto b = sample_max_capacity(5000, ch, 10000, MaxMode::Evolving, 202);
  const double d = oracle::ks_two_sample(a, b);
  MESSAGE("two-sample KS distance " << d);
  CHECK(d < 0.02);
}

TEST_CASE("exceedance counts: vanishing intensity and Poisson(0.5)") {
  const auto zero = count_exceedances(10000, 1e-9, {0.0, 1.0}, 2000, 1);
  CHECK(zero.pmf[0] == doctest::Approx(1.0).epsilon(1e-12));

  const auto c = count_exceedances(10000, 0.5, {0.0, 1.0}, 10000, 2);
  CHECK(c.expected_intensity == doctest::Approx(0.5).epsilon(1e-9));
  for (int k = 0; k < 6; ++k) {
    const double emp = k < static_cast<int>(c.pmf.size()) ? c.pmf[k] : 0.0;
    INFO("k = " << k);
    CHECK(std::abs(emp - poisson_pmf(k, 0.5)) <= 0.01);
  }
}

TEST_CASE("MACQ_THREADS caps the worker count") {
  ::setenv("MACQ_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  ::setenv("MACQ_THREADS", "0", 1);
  CHECK(worker_threads() >= 1);
  ::unsetenv("MACQ_THREADS");
}
