#include "macq/meanfield.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "macq/core.hpp"

namespace macq::meanfield {

namespace {

constexpr int kScanPoints = 20000;
constexpr int kBisectionIters = 200;

}  // namespace

const char* to_string(Mode m) { return m == Mode::ExactK ? "exact-K" : "asymptotic"; }

double collision_map(double p_coll, double lambda, double tau, int K, Mode mode) {
  const double rho = lambda / ((1.0 - p_coll) * tau);
  if (mode == Mode::Asymptotic) return -std::expm1(-rho);
  const double attempt = rho / K;
  return -std::expm1((K - 1) * std::log1p(-attempt));
}

MeanFieldSolution solve_pcoll(double lambda, double tau, int K, Mode mode) {
  if (!(lambda >= 0.0) || !(tau > 0.0)) throw std::invalid_argument("solve_pcoll: need lambda >= 0 and tau > 0");
  if (mode == Mode::ExactK && K < 2) throw std::invalid_argument("solve_pcoll: exact-K mode needs K >= 2");

  MeanFieldSolution s;
  s.mode = mode;
  if (lambda >= tau) {
    std::ostringstream os;
    os << "unstable: arrival rate " << lambda << " >= exceedance rate " << tau;
    throw InstabilityError(os.str());
  }

  auto h = [&](double p) { return collision_map(p, lambda, tau, K, mode) - p; };

  double root = 0.0;
  if (lambda > 0.0) {
    // Stable branch is p < 1 - lambda/tau; h(0) >= 0, so the first sign change
    // below that bound brackets the smallest root.
    const double upper = 1.0 - lambda / tau;
    const double eps = upper * 1e-12;
    double lo = 0.0;
    double hi = -1.0;
    for (int i = 1; i <= kScanPoints; ++i) {
      const double x = (i == kScanPoints) ? upper - eps : upper * static_cast<double>(i) / kScanPoints;
      const double hx = h(x);
      if (hx <= 0.0) {
        hi = x;
        break;
      }
      lo = x;
    }
    if (hi < 0.0) {
      std::ostringstream os;
      os << "unstable: no collision fixed point with rho < 1 (lambda=" << lambda << ", tau=" << tau << ")";
      throw InstabilityError(os.str());
    }
    for (int it = 0; it < kBisectionIters && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (h(mid) > 0.0) lo = mid;
      else hi = mid;
    }
    root = std::abs(h(lo)) < std::abs(h(hi)) ? lo : hi;
  }

  s.p_coll = root;
  s.p_succ = 1.0 - root;
  s.residual = std::abs(h(root));
  const MM1Metrics m = mm1_metrics(lambda, tau, root);
  s.rho = lambda / (s.p_succ * tau);
  s.empty_prob = m.empty_prob;
  s.mean_queue = m.mean_queue;
  s.sojourn = m.sojourn;
  s.W_s = m.W_s;
  s.W_q = m.sojourn - m.W_s;
  return s;
}

MM1Metrics mm1_metrics(double lambda, double tau, double p_coll) {
  const double mu_eff = (1.0 - p_coll) * tau;
  if (!(mu_eff > lambda)) {
    std::ostringstream os;
    os << "unstable: effective service rate " << mu_eff << " <= arrival rate " << lambda;
    throw InstabilityError(os.str());
  }
  const double rho = lambda / mu_eff;
  MM1Metrics m;
  m.empty_prob = 1.0 - rho;
  m.mean_queue = rho / (1.0 - rho);
  m.sojourn = 1.0 / (mu_eff - lambda);
  m.W_s = 1.0 / mu_eff;
  return m;
}

}  // namespace macq::meanfield
