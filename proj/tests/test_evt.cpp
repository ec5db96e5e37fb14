#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "macq/core.hpp"
#include "macq/evt.hpp"
#include "macq/sim.hpp"
#include "oracles.hpp"

using namespace macq;
using namespace macq::evt;

namespace {

const Gaussian kGood{std::numbers::sqrt2, 0.5};
const Gaussian kBad{0.0, 0.25};

StationaryMixture mixture(double p) { return StationaryMixture::with_weight(p, kGood, kBad); }

GilbertElliott channel_with_weight(double p) {
  // alpha + beta = 0.2 keeps the chain slowly mixing, as in the capacity figures.
  GilbertElliott ch;
  ch.beta = 0.2 * p;
  ch.alpha = 0.2 - ch.beta;
  ch.good = kGood;
  ch.bad = kBad;
  return ch;
}

double mean(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); }

// Maximum-likelihood Gumbel fit; returns {location, scale}.
std::pair<double, double> gumbel_mle(const std::vector<double>& x) {
  const double m = mean(x);
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  double beta = std::sqrt(6.0 * var / x.size()) / std::numbers::pi;
  const double shift = *std::min_element(x.begin(), x.end());
  for (int it = 0; it < 200; ++it) {
    double s0 = 0.0, s1 = 0.0;
    for (double v : x) {
      const double w = std::exp(-(v - shift) / beta);
      s0 += w;
      s1 += v * w;
    }
    const double next = m - s1 / s0;
    if (std::abs(next - beta) < 1e-14) break;
    beta = next;
  }
  double s0 = 0.0;
  for (double v : x) s0 += std::exp(-(v - shift) / beta);
  const double loc = shift - beta * std::log(s0 / x.size());
  return {loc, beta};
}

double q_function(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("Gumbel constants by direct substitution at K = e") {
  const auto g = gumbel_constants(std::numbers::e, StationaryMixture::with_weight(1.0, {0.0, 1.0}, kBad));
  CHECK(g.a == doctest::Approx(std::numbers::sqrt2).epsilon(1e-15));
  CHECK(g.b == doctest::Approx(std::numbers::sqrt2 - std::log(4 * std::numbers::pi) / (2 * std::numbers::sqrt2))
                   .epsilon(1e-15));
}

TEST_CASE("p = 1 reduces to the classical Gaussian constants") {
  for (double K : {10.0, 1e3, 1e6}) {
    for (const Gaussian& c : {Gaussian{0.0, 1.0}, Gaussian{2.5, 0.3}}) {
      const auto g = gumbel_constants(K, StationaryMixture::with_weight(1.0, c, {0.0, 0.1}));
      const double s = std::sqrt(2 * std::log(K));
      const double b = c.mu + c.sigma * (s - (std::log(std::log(K)) + std::log(4 * std::numbers::pi)) / (2 * s));
      CHECK(g.a == doctest::Approx(s / c.sigma).epsilon(1e-14));
      CHECK(g.b == doctest::Approx(b).epsilon(1e-14));
    }
  }
}

TEST_CASE("invalid Gumbel inputs are rejected") {
  CHECK_THROWS(gumbel_constants(1.0, mixture(0.5)));
  CHECK_THROWS(gumbel_constants(100.0, StationaryMixture::with_weight(0.0, kGood, kBad)));
  CHECK_THROWS(good_only_expected_max(3.0, mixture(0.5)));
}

TEST_CASE("expected maximum is b + gamma/a and increases with K") {
  const auto mix = mixture(0.5);
  const auto g = gumbel_constants(5000, mix);
  CHECK(expected_max(5000, mix) == doctest::Approx(g.b + kEulerGamma / g.a).epsilon(1e-15));
  double prev = -INFINITY;
  for (double K : {1e2, 1e3, 1e4, 1e5}) {
    const double v = expected_max(K, mix);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("p = 1: expected maximum and good-only value share the leading term") {
  for (double K : {1e2, 1e4, 1e8, 1e16}) {
    const auto mix = StationaryMixture::with_weight(1.0, kGood, kBad);
    const double s = std::sqrt(2 * std::log(K));
    const double corr = std::log(std::log(K)) + std::log(4 * std::numbers::pi);
    // What remains after the shared sigma sqrt(2 log K) + mu cancels.
    const double rest = kGood.sigma * (kEulerGamma - corr / 2) / s;
    CHECK(expected_max(K, mix) - good_only_expected_max(K, mix) == doctest::Approx(rest).epsilon(1e-10));
    CHECK(good_only_expected_max(K, mix) == doctest::Approx(kGood.sigma * s + kGood.mu).epsilon(1e-15));
  }
}

TEST_CASE("expected maximum within 2% of simulated maxima, both sampling modes") {
  const double K = 5000;
  const double target = expected_max(K, mixture(0.5));
  for (auto mode : {sim::MaxMode::Stationary, sim::MaxMode::Evolving}) {
    const auto x = sim::sample_max_capacity(5000, channel_with_weight(0.5), 10000, mode, 17);
    CHECK(std::abs(mean(x) - target) / target <= 0.02);
  }
}

TEST_CASE("Gumbel fit of simulated maxima recovers b_K and 1/a_K within 3%") {
  const auto g = gumbel_constants(5000, mixture(0.5));
  const auto x = sim::sample_max_capacity(5000, channel_with_weight(0.5), 10000, sim::MaxMode::Stationary, 23);
  const auto [loc, scale] = gumbel_mle(x);
  MESSAGE("fitted location " << loc << " vs b_K " << g.b << "; fitted scale " << scale << " vs 1/a_K " << 1 / g.a);
  CHECK(std::abs(loc - g.b) / g.b <= 0.03);
  CHECK(std::abs(scale - 1 / g.a) * g.a <= 0.03);
}

TEST_CASE("normalized maxima follow the Gumbel law (KS < 0.05), both sampling modes") {
  const auto g = gumbel_constants(5000, mixture(0.5));
  for (auto mode : {sim::MaxMode::Stationary, sim::MaxMode::Evolving}) {
    const auto x = sim::sample_max_capacity(5000, channel_with_weight(0.5), 10000, mode, 29);
    const double d = oracle::ks_distance(x, [&](double v) { return gumbel_cdf(v, g); });
    MESSAGE(std::string(sim::to_string(mode)) << " KS distance " << d);
    CHECK(d < 0.05);
  }
}

TEST_CASE("good-only selection against selecting from both groups") {
  // Leading-order formulas at K = 5000 for a sweep over p.
  const double K = 5000;
  std::vector<double> gap;
  for (double p : {0.05, 0.2, 0.5, 0.8, 1.0}) gap.push_back(expected_max(K, mixture(p)) - good_only_expected_max(K, mixture(p)));
  MESSAGE("expected_max - good_only at p = 0.05, 0.2, 0.5, 0.8, 1: " << gap[0] << ", " << gap[1] << ", " << gap[2]
                                                                     << ", " << gap[3] << ", " << gap[4]);
  CHECK(gap[1] >= 0.0);
  for (std::size_t i = 1; i < gap.size(); ++i) CHECK(std::abs(gap[i]) <= std::abs(gap[i - 1]));

  // Monte-Carlo of both selection rules at p = 0.2.
  std::mt19937_64 rng(5);
  std::bernoulli_distribution good(0.2);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n = 3000;
  double all = 0.0, only_good = 0.0;
  for (int s = 0; s < n; ++s) {
    double m_all = -INFINITY, m_good = -INFINITY;
    for (int k = 0; k < 5000; ++k) {
      const bool g = good(rng);
      const double c = g ? kGood.mu + kGood.sigma * N(rng) : kBad.mu + kBad.sigma * N(rng);
      m_all = std::max(m_all, c);
      if (g) m_good = std::max(m_good, c);
    }
    all += m_all;
    only_good += m_good;
  }
  const double mc_gap = (all - only_good) / n;
  MESSAGE("Monte-Carlo gap at p = 0.2: " << mc_gap << ", formula gap: " << gap[1]);
  CHECK(std::abs(mc_gap - gap[1]) <= 0.02);
}

TEST_CASE("numeric threshold: one exceedance per slot on average") {
  const auto pure = StationaryMixture::with_weight(1.0, kGood, kBad);
  const double u = threshold_for_one(1e4, pure, ThresholdMethod::Numeric);
  CHECK(q_function((u - kGood.mu) / kGood.sigma) == doctest::Approx(1e-4).epsilon(1e-9));
  CHECK(threshold_for_one(1e4, pure, ThresholdMethod::ClosedForm) == gumbel_constants(1e4, pure).b);
}

TEST_CASE("closed-form and numeric thresholds agree to half a Gumbel scale for K >= 100") {
  for (double p : {0.2, 0.5, 1.0}) {
    for (double K : {1e2, 1e3, 1e4, 1e5, 1e6}) {
      const auto mix = mixture(p);
      const double a = gumbel_constants(K, mix).a;
      const double d = std::abs(threshold_for_one(K, mix, ThresholdMethod::Numeric) -
                                threshold_for_one(K, mix, ThresholdMethod::ClosedForm));
      INFO("p = " << p << ", K = " << K);
      CHECK(d * a <= 0.5);
    }
  }
}

TEST_CASE("numeric threshold grows like sigma sqrt(2 log K)") {
  const auto mix = mixture(0.5);
  double prev_u = -INFINITY, prev_ratio = 0.0;
  for (double K = 10; K <= 1e15; K *= 10) {
    const double u = threshold_for_one(K, mix, ThresholdMethod::Numeric);
    const double ratio = (u - kGood.mu) / (kGood.sigma * std::sqrt(2 * std::log(K)));
    CHECK(u > prev_u);
    CHECK(ratio > prev_ratio);
    CHECK(ratio < 1.0);
    prev_u = u;
    prev_ratio = ratio;
  }
  CHECK(prev_ratio > 0.85);
}

TEST_CASE("simulated exceedance frequency at the numeric threshold is 1/K") {
  const double K = 5000;
  const auto mix = mixture(0.5);
  const double u = threshold_for_one(K, mix, ThresholdMethod::Numeric);
  std::mt19937_64 rng(41);
  std::bernoulli_distribution good(0.5);
  std::normal_distribution<double> N(0.0, 1.0);
  const long long n = 20'000'000;
  long long hits = 0;
  for (long long i = 0; i < n; ++i) {
    const double c = good(rng) ? kGood.mu + kGood.sigma * N(rng) : kBad.mu + kBad.sigma * N(rng);
    hits += c > u;
  }
  const double f = static_cast<double>(hits) / n;
  const double hw = std::sqrt(f * (1 - f) / n);
  CHECK(std::abs(f - 1 / K) <= 3 * hw);
}

TEST_CASE("distributed capacity") {
  const auto mix = mixture(0.5);
  const auto d = distributed_capacity(5000, mix);
  const auto g = gumbel_constants(5000, mix);
  CHECK_FALSE(d.finite_k);
  CHECK(d.value == doctest::Approx(std::exp(-1.0) * (g.b + 1 / g.a)).epsilon(1e-15));

  CHECK(distributed_capacity(50, mix, true).utilized_prob == doctest::Approx(0.3716).epsilon(1e-4));
  CHECK(distributed_capacity(1e9, mix, true).utilized_prob == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));

  double prev = INFINITY;
  for (double K : {1e2, 1e4, 1e6, 1e8}) {
    const double gap = std::abs(distributed_capacity(K, mix).value / expected_max(K, mix) - std::exp(-1.0));
    CHECK(gap < prev);
    prev = gap;
  }
}

TEST_CASE("conditional mean above the threshold matches rejection sampling within 2%") {
  const double K = 5000;
  const auto mix = mixture(0.5);
  const double u = threshold_for_one(K, mix, ThresholdMethod::ClosedForm);
  std::mt19937_64 rng(43);
  std::bernoulli_distribution good(0.5);
  std::normal_distribution<double> N(0.0, 1.0);
  double sum = 0.0;
  long long kept = 0;
  for (long long i = 0; i < 20'000'000; ++i) {
    const double c = good(rng) ? kGood.mu + kGood.sigma * N(rng) : kBad.mu + kBad.sigma * N(rng);
    if (c > u) {
      sum += c;
      ++kept;
    }
  }
  REQUIRE(kept > 1000);
  CHECK(std::abs(distributed_capacity(K, mix).conditional_mean - sum / kept) / (sum / kept) <= 0.02);
}

TEST_CASE("mixing coefficient of the two-state chain") {
  CHECK(mixing_bound(1, 0.1, 0.1) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(mixing_bound(10000, 0.1, 0.1) < 1e-12);
  for (double a : {0.05, 0.1, 0.3, 0.5, 0.7, 0.95}) {
    for (long long k : {1, 2, 3, 10, 57}) CHECK(std::abs(mixing_bound(k, a, a) - std::pow(std::abs(1 - 2 * a), k)) <= 1e-12);
  }
  for (double a = 0.05; a < 1.0; a += 0.1) {
    for (double b = 0.05; a + b <= 1.0; b += 0.1) {
      double prev = INFINITY;
      for (long long k = 1; k <= 200; ++k) {
        const double v = mixing_bound(k, a, b);
        REQUIRE(v <= prev + 1e-15);
        prev = v;
      }
    }
  }
}

TEST_CASE("D' tail sum: independent case, monotonicity in k, and the bound") {
  // alpha + beta = 1 makes consecutive states independent; equal components make C i.i.d.
  const auto iid = StationaryMixture::with_weight(0.5, kGood, kGood);
  const long long n = 10000;
  for (long long k : {10, 100, 1000}) {
    const auto L = level_for_intensity(n, 1.0, iid);
    const double s = L.intensity_asymptotic / n;
    const double expect = n * static_cast<double>(n / k - 1) * s * s;
    CHECK(dprime_tail_sum(n, k, 1.0, iid, 0.5, 0.5) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(L.intensity_asymptotic * L.intensity_asymptotic / k).epsilon(0.01));
  }

  const auto mix = mixture(0.5);
  double prev = INFINITY;
  for (long long k : {10, 100, 1000}) {
    const double v = dprime_tail_sum(n, k, 1.0, mix, 0.1, 0.1);
    CHECK(v < prev);
    CHECK(v <= dprime_bound(k, 1.0, 0.1, 0.1));
    prev = v;
  }
}

TEST_CASE("level for a target exceedance intensity") {
  const auto mix = mixture(0.5);
  CHECK(level_for_intensity(1e4, 1.0, mix).u_asymptotic == gumbel_constants(1e4, mix).b);

  const auto pure = StationaryMixture::with_weight(1.0, kGood, kBad);
  const double tau = -std::log(0.3961);
  const auto L = level_for_intensity(1e4, tau, pure);
  CHECK(1e4 * mixture_sf(L.u_exact, pure) == doctest::Approx(tau).epsilon(1e-9));
  MESSAGE("intensity at the asymptotic level: " << L.intensity_asymptotic << " (target " << tau << ")");
  CHECK(std::abs(L.intensity_asymptotic - tau) / tau <= 0.05);
}

TEST_CASE("location equivariance of EVT outputs") {
  for (double c : {-3.0, 0.5, 10.0}) {
    const auto m0 = mixture(0.4);
    const auto m1 = StationaryMixture::with_weight(0.4, {kGood.mu + c, kGood.sigma}, {kBad.mu + c, kBad.sigma});
    for (double K : {100.0, 5000.0}) {
      CHECK(gumbel_constants(K, m1).b - gumbel_constants(K, m0).b == doctest::Approx(c).epsilon(1e-12));
      CHECK(expected_max(K, m1) - expected_max(K, m0) == doctest::Approx(c).epsilon(1e-12));
      CHECK(threshold_for_one(K, m1, ThresholdMethod::ClosedForm) - threshold_for_one(K, m0, ThresholdMethod::ClosedForm) ==
            doctest::Approx(c).epsilon(1e-12));
      CHECK(std::abs(threshold_for_one(K, m1, ThresholdMethod::Numeric) -
                     threshold_for_one(K, m0, ThresholdMethod::Numeric) - c) <= 1e-10);
    }
  }
}

TEST_CASE("domain-of-attraction diagnostic tends to -1") {
  const auto mix = mixture(0.5);
  const double t8 = kGood.mu + 8 * kGood.sigma;
  CHECK(std::abs(attraction_diagnostic(t8, mix) + 1.0) <= 0.05);
  double prev = INFINITY;
  for (double t = kGood.mu + 2 * kGood.sigma; t <= t8; t += kGood.sigma) {
    const double gap = std::abs(attraction_diagnostic(t, mix) + 1.0);
    CHECK(gap < prev);
    prev = gap;
  }
}
