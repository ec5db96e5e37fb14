#pragma once

// Extreme-value scaling of the best user's capacity when capacities follow a
// Good/Bad Gaussian mixture, plus the mixing and local-dependence diagnostics
// behind the Poisson limit of the threshold-exceedance process.

#include "macq/core.hpp"

namespace macq::evt {

struct GumbelConstants {
  double a = 0.0;  // inverse scale
  double b = 0.0;  // location
  double K = 0.0;
  StationaryMixture mix;
};

/// a_K = sqrt(2 log K)/sigma_g,
/// b_K = sigma_g (sqrt(2 log K) - (log log K + log(4 pi / p^2)) / (2 sqrt(2 log K))) + mu_g.
/// K is real so that K = e can be used. Throws std::invalid_argument unless K > 1 and p > 0.
GumbelConstants gumbel_constants(double K, const StationaryMixture& mix);

/// exp(-exp(-a (x - b))).
double gumbel_cdf(double x, const GumbelConstants& g);

/// b_K + gamma / a_K.
double expected_max(double K, const StationaryMixture& mix);

/// sigma_g sqrt(2 log(pK)) + mu_g. Throws when pK < 2.
double good_only_expected_max(double K, const StationaryMixture& mix);

enum class ThresholdMethod { ClosedForm, Numeric };

/// Level exceeded by one user per slot on average: b_K (closed form) or the
/// root of 1 - F(u) = 1/K by bisection.
double threshold_for_one(double K, const StationaryMixture& mix, ThresholdMethod method);

/// Root of 1 - F(u) = target by bracketed bisection (|du| <= 1e-12).
double tail_quantile(double target, const StationaryMixture& mix);

struct DistributedCapacity {
  double value = 0.0;             // utilized probability * conditional mean
  double conditional_mean = 0.0;  // E[C | C > u] ~ u + 1/a_K
  double utilized_prob = 0.0;     // e^-1, or K (1/K)(1-1/K)^(K-1) when finite_k
  bool finite_k = false;
};

/// e^-1 (b_K + 1/a_K); with finite_k the e^-1 factor is replaced by the exact
/// single-transmitter probability (1-1/K)^(K-1).
DistributedCapacity distributed_capacity(double K, const StationaryMixture& mix, bool finite_k = false);

/// Strong-mixing coefficient sum_{i,j} pi_i |(P^k)_ij - pi_j| of the Good/Bad chain.
double mixing_bound(long long k, double alpha, double beta);

struct IntensityLevel {
  double u_asymptotic = 0.0;          // log(1/tau)/a_n + b_n
  double intensity_asymptotic = 0.0;  // n (1 - F(u_asymptotic))
  double u_exact = 0.0;               // n (1 - F(u_exact)) = tau
};

IntensityLevel level_for_intensity(double n, double tau, const StationaryMixture& mix);

/// n sum_{j=2}^{floor(n/k)} P(C_1 > u_n, C_j > u_n) for the Markov-modulated
/// sequence, at the asymptotic level u_n(tau).
double dprime_tail_sum(long long n, long long k, double tau, const StationaryMixture& mix, double alpha, double beta);

/// tau^2 (1/k) sum_{i,j} (pi_i / pi_j) max_{1<=r<=r_max} (P^r)_ij.
double dprime_bound(long long k, double tau, double alpha, double beta, int r_max = 1000);

/// f'(t) (1 - F(t)) / f(t)^2 for the mixture; tends to -1 in the Gumbel domain of attraction.
double attraction_diagnostic(double t, const StationaryMixture& mix);

}  // namespace macq::evt
