#include "macq/gilbert_queue.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "macq/core.hpp"

namespace macq::model3 {

double Cubic::max_abs() const { return std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)}); }

Cubic cubic_coeffs(const QueueParams& prm) {
  const double l = prm.lambda, a = prm.alpha, b = prm.beta, mg = prm.mu_g_eff, mb = prm.mu_b_eff;
  return Cubic{l * l, -(a * l + b * l + l * l + l * mb + l * mg), a * mb + b * mg + mg * mb + l * mb + l * mg,
               -mg * mb};
}

std::vector<std::complex<double>> cubic_roots(const Cubic& g) {
  const double scale = g.max_abs();
  if (scale == 0.0) throw std::invalid_argument("cubic_roots: zero polynomial");
  double c[4] = {g.c0, g.c1, g.c2, g.c3};
  int deg = 3;
  while (deg > 0 && std::abs(c[deg]) <= 1e-300) --deg;
  std::vector<std::complex<double>> out;
  if (deg == 0) return out;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[i] / c[deg];
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  for (int i = 0; i < deg; ++i) out.push_back(es.eigenvalues()[i]);
  return out;
}

BoundaryMasses boundary_masses(double z, const QueueParams& prm) {
  const double gap = prm.mu_hat() - prm.lambda;
  BoundaryMasses b;
  b.pi_g0 = prm.beta * gap * z / (prm.mu_g_eff * (1.0 - z) * (prm.mu_b_eff - prm.lambda * z));
  b.pi_b0 = prm.alpha * gap * z / (prm.mu_b_eff * (1.0 - z) * (prm.mu_g_eff - prm.lambda * z));
  return b;
}

namespace {

void check_params(const QueueParams& prm) {
  if (!(prm.lambda >= 0.0) || !(prm.mu_g_eff > 0.0) || !(prm.mu_b_eff > 0.0) || !(prm.alpha > 0.0) ||
      !(prm.beta > 0.0))
    throw std::invalid_argument("modulated queue: need lambda >= 0 and positive service and switching rates");
}

void check_stable(const QueueParams& prm) {
  if (!(prm.mu_hat() > prm.lambda)) {
    std::ostringstream os;
    os << "unstable: average service rate " << prm.mu_hat() << " <= arrival rate " << prm.lambda;
    throw InstabilityError(os.str());
  }
}

double polish(const Cubic& g, double z) {
  for (int it = 0; it < 50; ++it) {
    const double d = (3.0 * g.c3 * z + 2.0 * g.c2) * z + g.c1;
    if (d == 0.0) break;
    const double step = g(z) / d;
    const double nz = z - step;
    if (std::abs(g(nz)) >= std::abs(g(z))) break;
    z = nz;
  }
  return z;
}

bool unit_open(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

double solve_z0(const Cubic& g, const QueueParams& prm) {
  check_params(prm);
  check_stable(prm);
  const auto roots = cubic_roots(g);
  const double scale = g.max_abs();

  std::vector<double> admissible;
  std::ostringstream dump;
  dump.precision(12);
  for (const auto& r : roots) {
    dump << " z=" << r;
    if (std::abs(r.imag()) > 1e-9 * std::max(1.0, std::abs(r))) continue;
    const double z = polish(g, r.real());
    const BoundaryMasses b = boundary_masses(z, prm);
    dump << " -> (pi_g0=" << b.pi_g0 << ", pi_b0=" << b.pi_b0 << ")";
    if (unit_open(z) && unit_open(b.pi_g0) && unit_open(b.pi_b0)) admissible.push_back(z);
  }
  if (admissible.size() != 1) {
    std::ostringstream os;
    os << "z0 selection: " << admissible.size() << " admissible roots;" << dump.str();
    throw RootSelectionError(os.str());
  }
  const double z0 = admissible.front();
  if (!(std::abs(g(z0)) <= 1e-12 * scale)) {
    std::ostringstream os;
    os << "z0 refinement stalled: |g(z0)| = " << std::abs(g(z0)) << " at z0 = " << z0;
    throw ConvergenceError(os.str());
  }
  return z0;
}

std::complex<double> G_good(std::complex<double> z, const QueueParams& prm, const BoundaryMasses& b) {
  const Cubic g = cubic_coeffs(prm);
  const double gap = prm.mu_hat() - prm.lambda;
  return (prm.beta * gap * z + b.pi_g0 * prm.mu_g_eff * (1.0 - z) * (prm.lambda * z - prm.mu_b_eff)) / g(z);
}

std::complex<double> G_bad(std::complex<double> z, const QueueParams& prm, const BoundaryMasses& b) {
  const Cubic g = cubic_coeffs(prm);
  const double gap = prm.mu_hat() - prm.lambda;
  return (prm.alpha * gap * z + b.pi_b0 * prm.mu_b_eff * (1.0 - z) * (prm.lambda * z - prm.mu_g_eff)) / g(z);
}

namespace {

// Geometric decay of the queue-length tail: 1/R for the smallest root of g
// outside the closed unit disk.
double tail_ratio(const QueueParams& prm) {
  double R = INFINITY;
  for (const auto& r : cubic_roots(cubic_coeffs(prm)))
    if (std::abs(r) > 1.0) R = std::min(R, std::abs(r));
  return std::isfinite(R) ? 1.0 / R : 0.0;
}

int levels_for_tail(double ratio) {
  if (ratio <= 0.0) return 16;
  const double m = std::log(1e-10 * (1.0 - ratio)) / std::log(ratio);
  return static_cast<int>(std::clamp(std::ceil(m) + 16.0, 16.0, static_cast<double>(kMaxQueueLevels)));
}

bool recurse(const QueueParams& prm, SteadyState& s, int m_max) {
  const double l = prm.lambda, a = prm.alpha, b = prm.beta, mg = prm.mu_g_eff, mb = prm.mu_b_eff;
  s.pi_g.assign(1, s.boundary.pi_g0);
  s.pi_b.assign(1, s.boundary.pi_b0);
  double sg = s.boundary.pi_g0, sb = s.boundary.pi_b0;
  for (int m = 1; m <= m_max; ++m) {
    const double g = s.pi_g.back() * l / mg + sg * a / mg - sb * b / mg;
    const double bb = s.pi_b.back() * l / mb + sb * b / mb - sg * a / mb;
    if (g < -1e-12 || bb < -1e-12) return false;
    s.pi_g.push_back(g);
    s.pi_b.push_back(bb);
    sg += g;
    sb += bb;
    if (sg + sb > 1.0 + 1e-9) return false;
  }
  return true;
}

void contour(const QueueParams& prm, SteadyState& s, int m_max) {
  std::size_t N = 256;
  while (N < 4 * static_cast<std::size_t>(m_max + 1)) N *= 2;
  std::vector<std::complex<double>> vg(N), vb(N), cg, cb;
  for (std::size_t k = 0; k < N; ++k) {
    const double th = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(N);
    const std::complex<double> z(std::cos(th), std::sin(th));
    vg[k] = G_good(z, prm, s.boundary);
    vb[k] = G_bad(z, prm, s.boundary);
  }
  Eigen::FFT<double> fft;
  fft.fwd(cg, vg);
  fft.fwd(cb, vb);
  s.pi_g.assign(static_cast<std::size_t>(m_max) + 1, 0.0);
  s.pi_b.assign(static_cast<std::size_t>(m_max) + 1, 0.0);
  for (int m = 0; m <= m_max; ++m) {
    const auto i = static_cast<std::size_t>(m);
    const double g = cg[i].real() / static_cast<double>(N);
    const double b = cb[i].real() / static_cast<double>(N);
    if (g < -1e-12 || b < -1e-12) {
      std::ostringstream os;
      os << "steady_state: contour extraction gave negative mass at level " << m;
      throw ConvergenceError(os.str());
    }
    // Rounding noise in the far tail.
    s.pi_g[i] = std::max(g, 0.0);
    s.pi_b[i] = std::max(b, 0.0);
  }
  // Level 0 is known exactly.
  s.pi_g[0] = s.boundary.pi_g0;
  s.pi_b[0] = s.boundary.pi_b0;
}

}  // namespace

SteadyState steady_state(double z0, const QueueParams& prm, int m_max) {
  check_params(prm);
  check_stable(prm);
  SteadyState s;
  s.boundary = boundary_masses(z0, prm);
  s.tail_ratio = tail_ratio(prm);
  if (m_max <= 0) m_max = levels_for_tail(s.tail_ratio);
  m_max = std::min(m_max, kMaxQueueLevels);
  s.used_recursion = recurse(prm, s, m_max);
  if (!s.used_recursion) contour(prm, s, m_max);
  return s;
}

QueueMetrics metrics(const QueueParams& prm, const BoundaryMasses& b) {
  check_params(prm);
  check_stable(prm);
  const double l = prm.lambda, mg = prm.mu_g_eff, mb = prm.mu_b_eff;
  const double gap = prm.mu_hat() - l;
  QueueMetrics m;
  m.Qbar = l / gap + (mg * (mb - l) * b.pi_g0 + mb * (mg - l) * b.pi_b0 - (mg - l) * (mb - l)) /
                         ((prm.alpha + prm.beta) * gap);
  m.W = l > 0.0 ? m.Qbar / l : 0.0;
  return m;
}

ModulatedQueueSolution solve_model3(int K, double lambda_i, double mu_g, double mu_b, double alpha, double beta,
                                    const SolveOptions& opts) {
  if (K < 1) throw std::invalid_argument("K: K >= 1 required");
  if (!(lambda_i > 0.0)) throw std::invalid_argument("lambda_i: lambda_i > 0 required");
  if (!(mu_g > 0.0 && mu_b > 0.0)) throw std::invalid_argument("mu_g, mu_b: positive rates required");
  if (!(alpha > 0.0 && beta > 0.0)) throw std::invalid_argument("alpha, beta: positive rates required");

  QueueParams prm{lambda_i, mu_g, mu_b, alpha, beta};
  if (!(prm.mu_hat() > lambda_i)) {
    std::ostringstream os;
    os << "unstable: p mu_g + q mu_b = " << prm.mu_hat() << " <= lambda_i = " << lambda_i;
    throw InstabilityError(os.str());
  }

  const double att_g = -std::expm1(-mu_g);
  const double att_b = -std::expm1(-mu_b);
  ModulatedQueueSolution sol;
  double ps = opts.p_succ_init;

  for (int it = 1; it <= opts.max_iter; ++it) {
    prm.mu_g_eff = mu_g * ps;
    prm.mu_b_eff = mu_b * ps;
    if (!(prm.mu_hat() > lambda_i)) {
      std::ostringstream os;
      os << "unstable under self-consistent collisions: mu_hat = " << prm.mu_hat() << " <= lambda_i = " << lambda_i
         << " at p_succ = " << ps << " (iteration " << it << ")";
      throw InstabilityError(os.str());
    }
    const double z0 = solve_z0(cubic_coeffs(prm), prm);
    const BoundaryMasses b = boundary_masses(z0, prm);
    const double Gg1 = G_good(1.0, prm, b).real();
    const double Gb1 = G_bad(1.0, prm, b).real();
    const double Pt = (Gg1 - b.pi_g0) * att_g + (Gb1 - b.pi_b0) * att_b;
    const double next = std::pow(1.0 - Pt, K - 1);
    sol.iterations = it;
    sol.residual = std::abs(next - ps);
    if (sol.residual <= opts.tol) {
      sol.params = prm;
      sol.mu_hat = prm.mu_hat();
      sol.z0 = z0;
      sol.P_t = Pt;
      sol.p_succ = ps;
      sol.steady = steady_state(z0, prm);
      const QueueMetrics m = metrics(prm, b);
      sol.Qbar = m.Qbar;
      sol.W = m.W;
      return sol;
    }
    ps = (1.0 - opts.damping) * ps + opts.damping * next;
  }
  std::ostringstream os;
  os << "Model III fixed point did not converge in " << opts.max_iter << " iterations (|dp_succ| = " << sol.residual
     << ")";
  throw ConvergenceError(os.str());
}

}  // namespace macq::model3
