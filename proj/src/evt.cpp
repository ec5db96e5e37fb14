#include "macq/evt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace macq::evt {

namespace {

using Mat2 = std::array<std::array<double, 2>, 2>;

Mat2 mul(const Mat2& A, const Mat2& B) {
  Mat2 C{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) C[i][j] = A[i][0] * B[0][j] + A[i][1] * B[1][j];
  return C;
}

Mat2 chain(double alpha, double beta) { return Mat2{{{1.0 - alpha, alpha}, {beta, 1.0 - beta}}}; }

void check_chain(double alpha, double beta) {
  if (!(alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("alpha, beta: need 0 < alpha, beta <= 1");
}

double stationary_good(double alpha, double beta) { return beta / (alpha + beta); }

double component_sf(double x, const Gaussian& g) { return gaussian_sf(x, g); }

}  // namespace

GumbelConstants gumbel_constants(double K, const StationaryMixture& mix) {
  if (!(K > 1.0)) throw std::invalid_argument("K: K > 1 required for Gumbel constants");
  if (!(mix.p > 0.0)) throw std::invalid_argument("p: Good-state weight must be positive");
  if (!(mix.good.sigma > 0.0)) throw std::invalid_argument("sigma_g: must be positive");
  const double s = std::sqrt(2.0 * std::log(K));
  GumbelConstants g;
  g.K = K;
  g.mix = mix;
  g.a = s / mix.good.sigma;
  const double corr = std::log(std::log(K)) + std::log(4.0 * std::numbers::pi / (mix.p * mix.p));
  g.b = mix.good.sigma * (s - corr / (2.0 * s)) + mix.good.mu;
  return g;
}

double gumbel_cdf(double x, const GumbelConstants& g) { return std::exp(-std::exp(-g.a * (x - g.b))); }

double expected_max(double K, const StationaryMixture& mix) {
  const GumbelConstants g = gumbel_constants(K, mix);
  return g.b + kEulerGamma / g.a;
}

double good_only_expected_max(double K, const StationaryMixture& mix) {
  const double pk = mix.p * K;
  if (!(pk >= 2.0)) {
    std::ostringstream os;
    os << "pK: need p*K >= 2, got " << pk;
    throw std::invalid_argument(os.str());
  }
  return mix.good.sigma * std::sqrt(2.0 * std::log(pk)) + mix.good.mu;
}

double tail_quantile(double target, const StationaryMixture& mix) {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("tail_quantile: target must lie in (0,1)");
  const double spread = std::max(mix.good.sigma, mix.bad.sigma);
  double lo = std::min(mix.good.mu, mix.bad.mu) - spread;
  while (mixture_sf(lo, mix) < target) lo -= spread;
  double hi = std::max(mix.good.mu, mix.bad.mu) + spread;
  while (mixture_sf(hi, mix) > target) hi += spread;
  for (int it = 0; it < 400 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (mixture_sf(mid, mix) > target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double threshold_for_one(double K, const StationaryMixture& mix, ThresholdMethod method) {
  if (!(K >= 2.0)) throw std::invalid_argument("K: K >= 2 required");
  if (method == ThresholdMethod::ClosedForm) return gumbel_constants(K, mix).b;
  return tail_quantile(1.0 / K, mix);
}

DistributedCapacity distributed_capacity(double K, const StationaryMixture& mix, bool finite_k) {
  const GumbelConstants g = gumbel_constants(K, mix);
  DistributedCapacity d;
  d.finite_k = finite_k;
  d.conditional_mean = threshold_for_one(K, mix, ThresholdMethod::ClosedForm) + 1.0 / g.a;
  d.utilized_prob = finite_k ? std::exp((K - 1.0) * std::log1p(-1.0 / K)) : std::exp(-1.0);
  d.value = d.utilized_prob * d.conditional_mean;
  return d;
}

double mixing_bound(long long k, double alpha, double beta) {
  if (k < 1) throw std::invalid_argument("k: lag must be >= 1");
  check_chain(alpha, beta);
  const double pg = stationary_good(alpha, beta);
  const double pi[2] = {pg, 1.0 - pg};
  // P^k = Pi + r^k (I - Pi), r = 1 - alpha - beta the second eigenvalue.
  const double rk = std::pow(1.0 - alpha - beta, static_cast<double>(k));
  double g = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double pk = pi[j] + rk * ((i == j ? 1.0 : 0.0) - pi[j]);
      g += pi[i] * std::abs(pk - pi[j]);
    }
  return g;
}

IntensityLevel level_for_intensity(double n, double tau, const StationaryMixture& mix) {
  if (!(n >= 2.0)) throw std::invalid_argument("n: n >= 2 required");
  if (!(tau > 0.0)) throw std::invalid_argument("tau: tau > 0 required");
  const GumbelConstants g = gumbel_constants(n, mix);
  IntensityLevel L;
  L.u_asymptotic = std::log(1.0 / tau) / g.a + g.b;
  L.intensity_asymptotic = n * mixture_sf(L.u_asymptotic, mix);
  if (tau < n) L.u_exact = tail_quantile(tau / n, mix);
  return L;
}

double dprime_tail_sum(long long n, long long k, double tau, const StationaryMixture& mix, double alpha,
                       double beta) {
  if (n < 2 || k < 1) throw std::invalid_argument("dprime_tail_sum: need n >= 2 and k >= 1");
  check_chain(alpha, beta);
  const double u = level_for_intensity(static_cast<double>(n), tau, mix).u_asymptotic;
  const double pg = stationary_good(alpha, beta);
  const double pi[2] = {pg, 1.0 - pg};
  const double s[2] = {component_sf(u, mix.good), component_sf(u, mix.bad)};
  const Mat2 P = chain(alpha, beta);
  Mat2 Pj = P;  // P^(j-1), starting at j = 2
  const long long m = n / k;
  double sum = 0.0;
  for (long long j = 2; j <= m; ++j) {
    for (int i = 0; i < 2; ++i)
      for (int l = 0; l < 2; ++l) sum += s[i] * s[l] * pi[i] * Pj[i][l];
    Pj = mul(Pj, P);
  }
  return static_cast<double>(n) * sum;
}

double dprime_bound(long long k, double tau, double alpha, double beta, int r_max) {
  if (k < 1 || r_max < 1) throw std::invalid_argument("dprime_bound: need k >= 1 and r_max >= 1");
  check_chain(alpha, beta);
  const double pg = stationary_good(alpha, beta);
  const double pi[2] = {pg, 1.0 - pg};
  const Mat2 P = chain(alpha, beta);
  Mat2 Pr = P;
  Mat2 best = P;
  for (int r = 2; r <= r_max; ++r) {
    Pr = mul(Pr, P);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) best[i][j] = std::max(best[i][j], Pr[i][j]);
  }
  double acc = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) acc += pi[i] / pi[j] * best[i][j];
  return tau * tau * acc / static_cast<double>(k);
}

double attraction_diagnostic(double t, const StationaryMixture& mix) {
  auto dens = [&](const Gaussian& g, double w, double& f, double& fp) {
    if (w == 0.0) return;
    const double z = (t - g.mu) / g.sigma;
    const double phi = normal_pdf(z) / g.sigma;
    f += w * phi;
    fp += -w * z / g.sigma * phi;
  };
  double f = 0.0, fp = 0.0;
  dens(mix.good, mix.p, f, fp);
  dens(mix.bad, mix.q, f, fp);
  return fp * mixture_sf(t, mix) / (f * f);
}

}  // namespace macq::evt
