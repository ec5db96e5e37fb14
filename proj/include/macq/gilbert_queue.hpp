#pragma once

// Single decoupled queue whose service rate is modulated by a Good/Bad
// (Gilbert-Elliott) channel, with the collision-thinned service rates closed
// by the attempt-probability fixed point p_succ = (1 - P_t)^(K-1).

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace macq::model3 {

struct QueueParams {
  double lambda = 0.0;
  double mu_g_eff = 0.0;  // mu_g * p_succ
  double mu_b_eff = 0.0;  // mu_b * p_succ
  double alpha = 0.1;     // Good -> Bad rate
  double beta = 0.1;      // Bad -> Good rate

  double p() const { return beta / (alpha + beta); }
  double q() const { return alpha / (alpha + beta); }
  double mu_hat() const { return p() * mu_g_eff + q() * mu_b_eff; }
};

struct Cubic {
  double c3 = 0.0, c2 = 0.0, c1 = 0.0, c0 = 0.0;
  double operator()(double z) const { return ((c3 * z + c2) * z + c1) * z + c0; }
  std::complex<double> operator()(std::complex<double> z) const { return ((c3 * z + c2) * z + c1) * z + c0; }
  double max_abs() const;
};

Cubic cubic_coeffs(const QueueParams& prm);

/// All roots of the polynomial (degree drops when leading coefficients vanish).
std::vector<std::complex<double>> cubic_roots(const Cubic& g);

struct BoundaryMasses {
  double pi_g0 = 0.0;
  double pi_b0 = 0.0;
};

/// Empty-queue masses implied by a candidate root z.
BoundaryMasses boundary_masses(double z, const QueueParams& prm);

/// No root, or more than one, passed the admissibility test. what() lists
/// every root with both boundary evaluations.
class RootSelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The real root in (0,1) whose boundary masses both lie in (0,1), refined by
/// Newton to |g(z0)| <= 1e-12 max|c|. Throws InstabilityError if mu_hat <= lambda.
double solve_z0(const Cubic& g, const QueueParams& prm);

/// Partial generating functions G_g, G_b at z given the boundary masses.
std::complex<double> G_good(std::complex<double> z, const QueueParams& prm, const BoundaryMasses& b);
std::complex<double> G_bad(std::complex<double> z, const QueueParams& prm, const BoundaryMasses& b);

struct SteadyState {
  BoundaryMasses boundary;
  std::vector<double> pi_g;  // pi_g[m], m = 0..m_max
  std::vector<double> pi_b;
  bool used_recursion = true;  // false when the Cauchy-integral fallback produced the table
  double tail_ratio = 0.0;     // geometric decay rate used to size the table
};

inline constexpr int kMaxQueueLevels = 100000;

/// Boundary masses from the closed-form expressions, then pi^g_m, pi^b_m by the
/// forward recursions; if those turn negative or overshoot the total mass,
/// the table is extracted from G_g, G_b by contour integration instead.
/// m_max <= 0 picks the size so the neglected tail is below 1e-10.
SteadyState steady_state(double z0, const QueueParams& prm, int m_max = 0);

struct QueueMetrics {
  double Qbar = 0.0;
  double W = 0.0;
};

QueueMetrics metrics(const QueueParams& prm, const BoundaryMasses& b);

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 1000;
  double p_succ_init = 1.0;
  double damping = 0.5;
};

struct ModulatedQueueSolution {
  QueueParams params;  // at the fixed point
  double mu_hat = 0.0;
  double z0 = 0.0;
  SteadyState steady;
  double Qbar = 0.0;
  double W = 0.0;
  double P_t = 0.0;
  double p_succ = 1.0;
  int iterations = 0;
  double residual = 0.0;
};

/// mu_g, mu_b are per-user exceedance rates; a user in state s attempts with
/// probability 1 - exp(-mu_s) when backlogged.
ModulatedQueueSolution solve_model3(int K, double lambda_i, double mu_g, double mu_b, double alpha, double beta,
                                    const SolveOptions& opts = {});

}  // namespace macq::model3
