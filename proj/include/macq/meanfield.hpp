#pragma once

// Constant-collision-probability decoupling: each user's queue is an M/M/1
// queue whose service rate is the exceedance rate thinned by the success
// probability, with the collision probability closed by a fixed point.

namespace macq::meanfield {

enum class Mode { ExactK, Asymptotic };

const char* to_string(Mode m);

struct MM1Metrics {
  double mean_queue = 0.0;  // rho / (1 - rho)
  double sojourn = 0.0;     // 1 / (mu_eff - lambda)
  double W_s = 0.0;         // 1 / mu_eff, mean head-of-line service duration
  double empty_prob = 1.0;  // 1 - rho
};

struct MeanFieldSolution {
  double p_coll = 0.0;
  double p_succ = 1.0;
  double rho = 0.0;
  double empty_prob = 1.0;
  double mean_queue = 0.0;
  double W_q = 0.0;  // sojourn - W_s
  double W_s = 0.0;
  double sojourn = 0.0;
  double residual = 0.0;
  Mode mode = Mode::ExactK;
};

/// Right-hand side of the collision fixed point: p -> 1 - (1 - rho(p)/K)^(K-1)
/// (exact-K) or 1 - exp(-rho(p)) (asymptotic), rho(p) = lambda / ((1-p) tau).
double collision_map(double p_coll, double lambda, double tau, int K, Mode mode);

/// Smallest root of p = collision_map(p) with rho < 1, by grid scan and bisection.
/// K is ignored in asymptotic mode.
/// Throws InstabilityError when no stable root exists.
MeanFieldSolution solve_pcoll(double lambda, double tau, int K, Mode mode);

/// M/M/1 metrics with service rate (1 - p_coll) tau.
MM1Metrics mm1_metrics(double lambda, double tau, double p_coll);

}  // namespace macq::meanfield
