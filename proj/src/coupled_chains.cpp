#include "macq/coupled_chains.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

namespace macq::model1 {

// ---------------------------------------------------------------------------
// State space

StatusVector::StatusVector(std::vector<UserStatus> users) : users_(std::move(users)) {
  int actives = 0;
  for (UserStatus s : users_) actives += (s == UserStatus::Active);
  if (actives > 1) throw std::invalid_argument("StatusVector: at most one Active user allowed");
}

int StatusVector::active() const noexcept {
  for (std::size_t i = 0; i < users_.size(); ++i)
    if (users_[i] == UserStatus::Active) return static_cast<int>(i);
  return -1;
}

std::string StatusVector::str() const {
  std::string out;
  for (UserStatus s : users_) out += s == UserStatus::Idle ? 'I' : s == UserStatus::Active ? 'A' : 'B';
  return out;
}

StatusSpace::StatusSpace(int K) : K_(K) {
  if (K < 1 || K > kMaxUsers) {
    std::ostringstream os;
    os << "K: 1 <= K <= " << kMaxUsers << " required for the status chain, got " << K;
    throw std::invalid_argument(os.str());
  }
  size_ = state_count(K);
}

namespace {

// Removes bit `pos` from mask, shifting higher bits down.
std::uint32_t drop_bit(std::uint32_t mask, int pos) {
  const std::uint32_t low = mask & ((1u << pos) - 1u);
  const std::uint32_t high = (mask >> (pos + 1)) << pos;
  return low | high;
}

std::uint32_t insert_zero_bit(std::uint32_t mask, int pos) {
  const std::uint32_t low = mask & ((1u << pos) - 1u);
  const std::uint32_t high = (mask >> pos) << (pos + 1);
  return low | high;
}

}  // namespace

std::size_t StatusSpace::index(std::uint32_t blocked_mask, int active) const {
  if (active < 0) return blocked_mask;
  const std::size_t half = std::size_t{1} << (K_ - 1);
  return (std::size_t{1} << K_) + static_cast<std::size_t>(active) * half + drop_bit(blocked_mask, active);
}

void StatusSpace::decode(std::size_t idx, std::uint32_t& blocked_mask, int& active) const {
  const std::size_t full = std::size_t{1} << K_;
  if (idx < full) {
    blocked_mask = static_cast<std::uint32_t>(idx);
    active = -1;
    return;
  }
  const std::size_t half = full >> 1;
  const std::size_t rest = idx - full;
  active = static_cast<int>(rest / half);
  blocked_mask = insert_zero_bit(static_cast<std::uint32_t>(rest % half), active);
}

StatusVector StatusSpace::state(std::size_t idx) const {
  if (idx >= size_) throw std::out_of_range("StatusSpace::state: index out of range");
  std::uint32_t mask = 0;
  int active = -1;
  decode(idx, mask, active);
  std::vector<UserStatus> u(static_cast<std::size_t>(K_), UserStatus::Idle);
  for (int i = 0; i < K_; ++i) {
    if (i == active) u[static_cast<std::size_t>(i)] = UserStatus::Active;
    else if (mask >> i & 1u) u[static_cast<std::size_t>(i)] = UserStatus::Blocked;
  }
  return StatusVector(std::move(u));
}

std::size_t StatusSpace::index(const StatusVector& s) const {
  if (s.size() != K_) throw std::invalid_argument("StatusSpace::index: wrong number of users");
  std::uint32_t mask = 0;
  for (int i = 0; i < K_; ++i)
    if (s[i] == UserStatus::Blocked) mask |= 1u << i;
  return index(mask, s.active());
}

std::vector<StatusVector> enumerate_states(int K) {
  const StatusSpace space(K);
  std::vector<StatusVector> out;
  out.reserve(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) out.push_back(space.state(i));
  return out;
}

// ---------------------------------------------------------------------------
// Transition matrix

ChainParams ChainParams::homogeneous(int K, double lambda, double p_exc, double P_1given1, double P_0given2) {
  const auto n = static_cast<std::size_t>(K);
  return ChainParams{std::vector<double>(n, lambda), std::vector<double>(n, p_exc), std::vector<double>(n, P_1given1),
                     std::vector<double>(n, P_0given2)};
}

namespace {

void check_params(const StatusSpace& space, const ChainParams& prm) {
  const auto K = static_cast<std::size_t>(space.users());
  if (prm.lambda.size() != K || prm.p_exc.size() != K || prm.P_1given1.size() != K || prm.P_0given2.size() != K)
    throw std::invalid_argument("ChainParams: every vector needs one entry per user");
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  for (std::size_t i = 0; i < K; ++i) {
    if (!unit(prm.lambda[i]) || !unit(prm.p_exc[i]) || !unit(prm.P_1given1[i]) || !unit(prm.P_0given2[i])) {
      std::ostringstream os;
      os << "ChainParams: user " << i << " has a probability outside [0,1]";
      throw std::invalid_argument(os.str());
    }
  }
}

struct Entry {
  std::size_t col;
  double val;
};

// Distribution over (arrival mask among idle users, transmitter summary) for one
// source state. Transmitter summary t: 0 = nobody, 1+u = only user u, K+1 = two or more.
void fill_row(const StatusSpace& space, const ChainParams& prm, std::size_t row, std::vector<double>& dp,
              std::vector<double>& next, std::vector<Entry>& out) {
  const int K = space.users();
  const int T = K + 2;
  const int many = K + 1;
  std::uint32_t blocked = 0;
  int active = -1;
  space.decode(row, blocked, active);

  std::vector<int> idle;
  for (int u = 0; u < K; ++u)
    if (u != active && !(blocked >> u & 1u)) idle.push_back(u);

  auto bump = [&](int t, int u) { return t == 0 ? 1 + u : many; };

  dp.assign(static_cast<std::size_t>(T), 0.0);
  dp[0] = 1.0;

  // Users already holding a packet: they transmit iff the channel exceeds.
  for (int u = 0; u < K; ++u) {
    if (u != active && !(blocked >> u & 1u)) continue;
    const double p = prm.p_exc[static_cast<std::size_t>(u)];
    next.assign(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
      const double v = dp[static_cast<std::size_t>(t)];
      if (v == 0.0) continue;
      next[static_cast<std::size_t>(t)] += v * (1.0 - p);
      next[static_cast<std::size_t>(bump(t, u))] += v * p;
    }
    dp.swap(next);
  }

  // Idle users: arrival or not, then exceedance.
  std::size_t masks = 1;
  for (std::size_t j = 0; j < idle.size(); ++j) {
    const int u = idle[j];
    const double lam = prm.lambda[static_cast<std::size_t>(u)];
    const double p = prm.p_exc[static_cast<std::size_t>(u)];
    const std::size_t bit = std::size_t{1} << j;
    next.assign(masks * 2 * static_cast<std::size_t>(T), 0.0);
    for (std::size_t m = 0; m < masks; ++m) {
      for (int t = 0; t < T; ++t) {
        const double v = dp[m * T + static_cast<std::size_t>(t)];
        if (v == 0.0) continue;
        next[m * T + static_cast<std::size_t>(t)] += v * (1.0 - lam);
        next[(m | bit) * T + static_cast<std::size_t>(t)] += v * lam * (1.0 - p);
        next[(m | bit) * T + static_cast<std::size_t>(bump(t, u))] += v * lam * p;
      }
    }
    masks *= 2;
    dp.swap(next);
  }

  out.clear();
  for (std::size_t m = 0; m < masks; ++m) {
    std::uint32_t arrived = 0;
    for (std::size_t j = 0; j < idle.size(); ++j)
      if (m >> j & 1u) arrived |= 1u << idle[j];
    for (int t = 0; t < T; ++t) {
      const double v = dp[m * T + static_cast<std::size_t>(t)];
      if (v == 0.0) continue;
      const int winner = (t >= 1 && t <= K) ? t - 1 : -1;
      // Everyone holding a packet who did not win ends the slot Blocked.
      std::uint32_t target = blocked | arrived;
      if (active >= 0) target |= 1u << active;
      if (winner < 0) {
        out.push_back({space.index(target, -1), v});
        continue;
      }
      target &= ~(1u << winner);
      const bool was_idle = !(blocked >> winner & 1u) && winner != active;
      if (was_idle) {
        out.push_back({space.index(target, -1), v});
        continue;
      }
      const auto w = static_cast<std::size_t>(winner);
      const double lam = prm.lambda[w];
      const double stay = winner == active ? prm.P_1given1[w] + lam * (1.0 - prm.P_1given1[w])
                                           : (1.0 - prm.P_0given2[w]) + lam * prm.P_0given2[w];
      out.push_back({space.index(target, winner), v * stay});
      out.push_back({space.index(target, -1), v * (1.0 - stay)});
    }
  }

  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
  std::size_t w = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (w > 0 && out[w - 1].col == out[i].col) out[w - 1].val += out[i].val;
    else out[w++] = out[i];
  }
  out.resize(w);
}

}  // namespace

SparseMatrix build_transition_matrix(const StatusSpace& space, const ChainParams& prm) {
  check_params(space, prm);
  const std::size_t n = space.size();
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> dp, next;
  std::vector<Entry> row;
  for (std::size_t i = 0; i < n; ++i) {
    fill_row(space, prm, i, dp, next, row);
    double sum = 0.0;
    for (const Entry& e : row) {
      sum += e.val;
      if (e.val != 0.0)
        trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.col), e.val);
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "transition row for state " << space.state(i).str() << " sums to " << sum;
      throw std::runtime_error(os.str());
    }
  }
  SparseMatrix P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  P.setFromTriplets(trips.begin(), trips.end());
  P.makeCompressed();
  return P;
}

SparseMatrix build_transition_matrix(int K, double lambda, double p_exc, double P_1given1, double P_0given2) {
  const StatusSpace space(K);
  return build_transition_matrix(space, ChainParams::homogeneous(K, lambda, p_exc, P_1given1, P_0given2));
}

// ---------------------------------------------------------------------------
// Stationary distribution

namespace {

std::vector<char> reach(const SparseMatrix& P) {
  const auto n = static_cast<std::size_t>(P.rows());
  std::vector<char> seen(n, 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const Eigen::Index i = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(P, i); it; ++it) {
      if (it.value() <= 0.0) continue;
      const auto j = static_cast<std::size_t>(it.col());
      if (!seen[j]) {
        seen[j] = 1;
        stack.push_back(it.col());
      }
    }
  }
  return seen;
}

double stationarity_residual(const SparseMatrix& P, const Eigen::VectorXd& x) {
  const Eigen::VectorXd y = P.transpose() * x;
  return (y - x).cwiseAbs().maxCoeff();
}

void normalize_nonneg(Eigen::VectorXd& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < 0.0) x[i] = 0.0;
  x /= x.sum();
}

}  // namespace

bool is_irreducible(const SparseMatrix& P) {
  if (P.rows() == 0) return false;
  const auto fwd = reach(P);
  SparseMatrix Pt = SparseMatrix(P.transpose());
  const auto bwd = reach(Pt);
  return std::all_of(fwd.begin(), fwd.end(), [](char c) { return c != 0; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](char c) { return c != 0; });
}

StationaryResult stationary_distribution(const SparseMatrix& P, const StationaryOptions& opts,
                                         std::span<const double> warm_start) {
  const Eigen::Index n = P.rows();
  if (n == 0 || P.cols() != n) throw std::invalid_argument("stationary_distribution: need a non-empty square matrix");
  if (!is_irreducible(P)) throw std::runtime_error("stationary_distribution: chain is reducible");

  StationaryResult res;
  Eigen::VectorXd x(n);
  if (static_cast<Eigen::Index>(warm_start.size()) == n) {
    for (Eigen::Index i = 0; i < n; ++i) x[i] = warm_start[static_cast<std::size_t>(i)];
    normalize_nonneg(x);
  } else {
    x.setConstant(1.0 / static_cast<double>(n));
  }

  const SparseMatrix Pt = P.transpose();
  double r = INFINITY;
  for (int it = 0; it < opts.max_power_iterations; ++it) {
    Eigen::VectorXd y = Pt * x;
    y /= y.sum();
    r = (y - x).cwiseAbs().maxCoeff();
    x.swap(y);
    res.iterations = it + 1;
    if (r <= opts.tol) break;
  }
  res.method = "power";

  if (!(r <= opts.tol)) {
    // Solve (P^T - I) x = 0 with one equation replaced by sum(x) = 1.
    if (static_cast<std::size_t>(n) <= kDenseFallbackStates) {
      Eigen::MatrixXd A = Eigen::MatrixXd(P.transpose());
      A.diagonal().array() -= 1.0;
      A.row(n - 1).setOnes();
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      b[n - 1] = 1.0;
      x = A.partialPivLu().solve(b);
      res.method = "dense-lu";
    } else {
      Eigen::SparseMatrix<double> A = Eigen::SparseMatrix<double>(P.transpose());
      for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) -= 1.0;
      for (Eigen::Index j = 0; j < n; ++j) A.coeffRef(n - 1, j) = 1.0;
      A.prune(0.0);
      A.makeCompressed();
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(A);
      if (lu.info() != Eigen::Success) throw std::runtime_error("stationary_distribution: sparse LU failed");
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      b[n - 1] = 1.0;
      x = lu.solve(b);
      res.method = "sparse-lu";
    }
    normalize_nonneg(x);
    // A few power steps clean up rounding from the direct solve.
    for (int it = 0; it < 3; ++it) {
      Eigen::VectorXd y = Pt * x;
      x = y / y.sum();
    }
    r = stationarity_residual(P, x);
    if (!(r <= std::max(opts.tol, 1e-11)))
      throw std::runtime_error("stationary_distribution: residual " + std::to_string(r) + " after direct solve");
  }

  res.residual = r;
  res.pi.assign(x.data(), x.data() + n);
  return res;
}

// ---------------------------------------------------------------------------
// Average success probabilities

SuccessProbs avg_success_probs(const StatusSpace& space, std::span<const double> pi, std::span<const double> lambda,
                               std::span<const double> p_exc, int user) {
  const int K = space.users();
  if (pi.size() != space.size()) throw std::invalid_argument("avg_success_probs: pi has wrong length");
  if (lambda.size() != static_cast<std::size_t>(K) || p_exc.size() != static_cast<std::size_t>(K))
    throw std::invalid_argument("avg_success_probs: need one lambda and p_exc per user");
  if (user < 0 || user >= K) throw std::invalid_argument("avg_success_probs: user out of range");

  // Probability that user j stays silent given its status.
  std::vector<double> silent_idle(static_cast<std::size_t>(K)), silent_busy(static_cast<std::size_t>(K));
  for (std::size_t j = 0; j < silent_idle.size(); ++j) {
    silent_idle[j] = lambda[j] * (1.0 - p_exc[j]) + (1.0 - lambda[j]);
    silent_busy[j] = 1.0 - p_exc[j];
  }

  double mass[3] = {0.0, 0.0, 0.0};
  double num[3] = {0.0, 0.0, 0.0};
  for (std::size_t s = 0; s < space.size(); ++s) {
    std::uint32_t blocked = 0;
    int active = -1;
    space.decode(s, blocked, active);
    double others = 1.0;
    for (int j = 0; j < K; ++j) {
      if (j == user) continue;
      const bool idle = j != active && !(blocked >> j & 1u);
      others *= idle ? silent_idle[static_cast<std::size_t>(j)] : silent_busy[static_cast<std::size_t>(j)];
    }
    const int st = user == active ? 1 : (blocked >> user & 1u) ? 2 : 0;
    mass[st] += pi[s];
    num[st] += pi[s] * others;
  }

  static const char* names[3] = {"Idle", "Active", "Blocked"};
  for (int st = 0; st < 3; ++st) {
    if (!(mass[st] > 0.0)) {
      std::ostringstream os;
      os << "avg_success_probs: status " << names[st] << " has zero stationary mass for user " << user;
      throw std::runtime_error(os.str());
    }
  }

  const double p = p_exc[static_cast<std::size_t>(user)];
  SuccessProbs out;
  out.prob_idle = mass[0];
  out.prob_active = mass[1];
  out.prob_blocked = mass[2];
  out.P_I_fresh = p * num[0] / mass[0];
  out.P_I = lambda[static_cast<std::size_t>(user)] * out.P_I_fresh;
  out.P_A = p * num[1] / mass[1];
  out.P_B = p * num[2] / mass[2];
  return out;
}

SuccessProbs avg_success_probs(const StatusSpace& space, std::span<const double> pi, double lambda, double p_exc) {
  const std::vector<double> l(static_cast<std::size_t>(space.users()), lambda);
  const std::vector<double> p(static_cast<std::size_t>(space.users()), p_exc);
  return avg_success_probs(space, pi, l, p, 0);
}

// ---------------------------------------------------------------------------
// Queue chain boundary

QueueBoundary queue_boundary(double lambda, double P_I_fresh, double P_A, double P_B) {
  QueueBoundary b;
  if (lambda == 0.0) return b;
  const double lb = 1.0 - lambda;
  const double drift = lb * P_B - lambda * (1.0 - P_A);
  const double den = lb * P_B - lambda * (P_I_fresh - P_A);
  if (!(drift > 0.0) || !(den > 0.0)) {
    std::ostringstream os;
    os << "unstable queue chain: (1-lambda) P_B - lambda (1-P_A) = " << drift
       << ", (1-lambda) P_B - lambda (P_I - P_A) = " << den;
    throw InstabilityError(os.str());
  }
  b.pi10 = drift / den;
  b.pi00 = lambda * (1.0 - P_I_fresh) / (lambda * P_A + lb * P_B) * b.pi10;
  b.pi11 = lambda / lb * b.pi00;
  b.G0_at_1 = lambda * lb * (1.0 - P_I_fresh) / den;
  b.G1_at_1 = lambda + lb * b.pi10;
  b.P_1given1 = 1.0 - b.pi11 / (b.G1_at_1 - b.pi10);
  b.P_0given2 = b.G0_at_1 > 0.0 ? b.pi00 / b.G0_at_1 : 1.0;
  return b;
}

// ---------------------------------------------------------------------------
// Fixed point

namespace {

struct Evaluation {
  SuccessProbs probs;
  QueueBoundary boundary;
  std::vector<double> pi;
};

Evaluation evaluate(const StatusSpace& space, double lambda, double p_exc, double P11, double P02,
                    std::span<const double> warm) {
  const int K = space.users();
  const SparseMatrix P = build_transition_matrix(space, ChainParams::homogeneous(K, lambda, p_exc, P11, P02));
  StationaryOptions so;
  so.max_power_iterations = warm.empty() ? 20000 : 5000;
  StationaryResult st = stationary_distribution(P, so, warm);
  Evaluation e;
  e.probs = avg_success_probs(space, st.pi, lambda, p_exc);
  e.boundary = queue_boundary(lambda, e.probs.P_I_fresh, e.probs.P_A, e.probs.P_B);
  e.pi = std::move(st.pi);
  return e;
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

ModelISolution solve_model1(int K, double lambda_i, double p_exc, const SolveOptions& opts) {
  if (!(lambda_i >= 0.0 && lambda_i < 1.0)) throw std::invalid_argument("lambda_i: 0 <= lambda_i < 1 required");
  if (!(p_exc > 0.0 && p_exc <= 1.0)) throw std::invalid_argument("p_exc: 0 < p_exc <= 1 required");
  const StatusSpace space(K);

  ModelISolution sol;
  sol.states = space.size();

  if (lambda_i == 0.0) {
    // No traffic: the chain sits in the all-idle state and a lone packet never collides.
    sol.P_A = sol.P_B = sol.P_I_fresh = p_exc;
    sol.P_I = 0.0;
    sol.p_succ = 1.0;
    return sol;
  }

  double x[2] = {opts.P_1given1_init, opts.P_0given2_init};
  double x_prev[2] = {0.0, 0.0};
  double f_prev[2] = {0.0, 0.0};
  bool have_prev = false;
  double best = INFINITY;
  double last = INFINITY;
  int stall = 0;
  std::vector<double> warm;

  for (int it = 1; it <= opts.max_iter; ++it) {
    Evaluation e = evaluate(space, lambda_i, p_exc, x[0], x[1], warm);
    warm = e.pi;
    const double f[2] = {clamp01(e.boundary.P_1given1), clamp01(e.boundary.P_0given2)};
    const double r = std::max(std::abs(f[0] - x[0]), std::abs(f[1] - x[1]));
    sol.iterations = it;
    sol.residual = r;

    if (r < opts.tol) {
      const SuccessProbs& pr = e.probs;
      const QueueBoundary& b = e.boundary;
      const double lam = lambda_i;
      const double lb = 1.0 - lam;
      sol.P_I = pr.P_I;
      sol.P_I_fresh = pr.P_I_fresh;
      sol.P_A = pr.P_A;
      sol.P_B = pr.P_B;
      sol.boundary = b;
      sol.L = lam * lam * lb * (1.0 - pr.P_I_fresh) /
              ((lb * pr.P_B - lam * (1.0 - pr.P_A)) * (lb * pr.P_B - lam * (pr.P_I_fresh - pr.P_A)));
      sol.W_q = sol.L / lam;
      const double busy_hol = b.G1_at_1 - b.pi10;
      const double w = lam * b.pi10 + busy_hol;
      sol.blocked_prob = 1.0 - (b.pi10 / w * pr.P_I + busy_hol / w * pr.P_A);
      sol.W_s = sol.blocked_prob / pr.P_B;
      sol.D = sol.W_q + sol.W_s + 1.0;
      sol.p_succ = (pr.P_A * busy_hol + pr.P_I * b.pi10 + pr.P_B * b.G0_at_1) / (p_exc * (1.0 - lb * b.pi10));
      return sol;
    }

    if (r < best) {
      best = r;
      stall = 0;
    } else if (++stall >= 50) {
      std::ostringstream os;
      os << "Model I fixed point diverging: residual " << r << " after " << it << " iterations (best " << best << ")";
      throw ConvergenceError(os.str());
    }

    double nx[2];
    if (have_prev && r <= last) {
      for (int c = 0; c < 2; ++c) {
        const double dx = x[c] - x_prev[c];
        double q = 0.0;
        if (std::abs(dx) > 1e-300) {
          const double a = (f[c] - f_prev[c]) / dx;
          q = a == 1.0 ? 0.5 : a / (a - 1.0);
          q = std::min(0.5, std::max(-5.0, q));
        }
        nx[c] = q * x[c] + (1.0 - q) * f[c];
      }
    } else if (have_prev) {
      for (int c = 0; c < 2; ++c) nx[c] = 0.5 * x[c] + 0.5 * f[c];
    } else {
      for (int c = 0; c < 2; ++c) nx[c] = f[c];
    }
    for (int c = 0; c < 2; ++c) {
      x_prev[c] = x[c];
      f_prev[c] = f[c];
      x[c] = clamp01(nx[c]);
    }
    have_prev = true;
    last = r;
  }

  std::ostringstream os;
  os << "Model I fixed point did not converge in " << opts.max_iter << " iterations (residual " << sol.residual << ")";
  throw ConvergenceError(os.str());
}

}  // namespace macq::model1
