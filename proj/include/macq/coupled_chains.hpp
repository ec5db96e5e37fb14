#pragma once

// Coupled system-status / queue-length chains for a threshold-based
// multi-access channel (adapted Ephremides-Zhu approximation).
//
// The status chain tracks every user as Idle, Active or Blocked with at most
// one Active user. Its transitions need two queue-chain quantities
// (P(1|1), P(0|2)); the queue chain in turn needs the status chain's average
// success probabilities. solve_model1 closes that loop by Wegstein iteration.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "macq/core.hpp"

namespace macq::model1 {

inline constexpr int kMaxUsers = 12;
inline constexpr std::size_t kDenseFallbackStates = 4096;

/// Per-user status vector with at most one Active entry.
class StatusVector {
 public:
  StatusVector() = default;
  explicit StatusVector(std::vector<UserStatus> users);

  int size() const noexcept { return static_cast<int>(users_.size()); }
  UserStatus operator[](int i) const { return users_[static_cast<std::size_t>(i)]; }
  const std::vector<UserStatus>& users() const noexcept { return users_; }
  /// Index of the Active user, or -1.
  int active() const noexcept;
  std::string str() const;  // e.g. "IAB"

  friend bool operator==(const StatusVector&, const StatusVector&) = default;

 private:
  std::vector<UserStatus> users_;
};

/// Bijective index <-> StatusVector map over all 2^(K-1) (K+2) states.
///
/// Layout: indices [0, 2^K) are the no-Active states (bit u set = user u
/// Blocked); then for each Active user a, a block of 2^(K-1) states indexed by
/// the Blocked mask of the remaining users.
class StatusSpace {
 public:
  explicit StatusSpace(int K);

  int users() const noexcept { return K_; }
  std::size_t size() const noexcept { return size_; }

  StatusVector state(std::size_t index) const;
  std::size_t index(const StatusVector& s) const;

  // Compact form used by the builders: blocked bitmask + active user (-1 if none).
  std::size_t index(std::uint32_t blocked_mask, int active) const;
  void decode(std::size_t index, std::uint32_t& blocked_mask, int& active) const;

 private:
  int K_;
  std::size_t size_;
};

/// Enumerates the state space; throws std::invalid_argument beyond kMaxUsers.
std::vector<StatusVector> enumerate_states(int K);

inline std::size_t state_count(int K) { return (std::size_t{1} << (K - 1)) * static_cast<std::size_t>(K + 2); }

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Per-user parameters of the status chain. Vectors have one entry per user.
struct ChainParams {
  std::vector<double> lambda;   // per-slot arrival probability
  std::vector<double> p_exc;    // per-slot exceedance probability
  std::vector<double> P_1given1;  // Pr(queue > 1 | Active)
  std::vector<double> P_0given2;  // Pr(queue == 1 | Blocked)

  static ChainParams homogeneous(int K, double lambda, double p_exc, double P_1given1, double P_0given2);
  int users() const noexcept { return static_cast<int>(lambda.size()); }
};

/// Row-stochastic transition matrix built by enumerating every user's
/// micro-events (arrival, exceedance) and resolving collisions.
/// Throws std::runtime_error naming the first state whose row does not sum to 1.
SparseMatrix build_transition_matrix(const StatusSpace& space, const ChainParams& params);
SparseMatrix build_transition_matrix(int K, double lambda, double p_exc, double P_1given1, double P_0given2);

struct StationaryOptions {
  double tol = 1e-12;
  int max_power_iterations = 20000;
};

struct StationaryResult {
  std::vector<double> pi;
  double residual = 0.0;  // max |pi P - pi|
  int iterations = 0;
  std::string method;  // "power", "dense-lu", "sparse-lu"
};

/// Stationary vector of an irreducible row-stochastic matrix. Power iteration
/// first (optionally warm-started), then dense LU (small chains) or sparse LU.
/// Throws std::runtime_error if the chain is reducible or nothing converges.
StationaryResult stationary_distribution(const SparseMatrix& P, const StationaryOptions& opts = {},
                                         std::span<const double> warm_start = {});

bool is_irreducible(const SparseMatrix& P);

struct SuccessProbs {
  double P_I = 0.0;        // Pr(success, Idle) / Pr(Idle); includes the arrival probability
  double P_I_fresh = 0.0;  // success probability of a fresh packet at an Idle user (P_I / lambda)
  double P_A = 0.0;
  double P_B = 0.0;
  double prob_idle = 0.0;
  double prob_active = 0.0;
  double prob_blocked = 0.0;
};

/// Average success probabilities of `user`, averaging the other users' statuses
/// under pi. Throws std::runtime_error when a status has zero marginal mass.
SuccessProbs avg_success_probs(const StatusSpace& space, std::span<const double> pi, std::span<const double> lambda,
                               std::span<const double> p_exc, int user = 0);
SuccessProbs avg_success_probs(const StatusSpace& space, std::span<const double> pi, double lambda, double p_exc);

struct QueueBoundary {
  double pi00 = 0.0;
  double pi10 = 1.0;
  double pi11 = 0.0;
  double G0_at_1 = 0.0;
  double G1_at_1 = 1.0;
  double P_1given1 = 0.0;
  double P_0given2 = 1.0;
};

/// Closed-form boundary masses of the per-user queue chain.
/// `P_I_fresh` is the fresh-packet success probability (see SuccessProbs).
/// Throws InstabilityError when either stability expression is non-positive.
QueueBoundary queue_boundary(double lambda, double P_I_fresh, double P_A, double P_B);

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 1000;
  double P_1given1_init = 0.5;
  double P_0given2_init = 0.5;
};

struct ModelISolution {
  double P_I = 0.0;
  double P_I_fresh = 0.0;
  double P_A = 0.0;
  double P_B = 0.0;
  QueueBoundary boundary;
  double L = 0.0;
  double W_q = 0.0;
  double W_s = 0.0;
  double D = 1.0;
  double blocked_prob = 0.0;
  double p_succ = 1.0;
  int iterations = 0;
  double residual = 0.0;
  std::size_t states = 0;
};

/// Homogeneous Model I fixed point and metrics.
/// Throws ConvergenceError on divergence / iteration cap, InstabilityError from the boundary.
ModelISolution solve_model1(int K, double lambda_i, double p_exc, const SolveOptions& opts = {});

}  // namespace macq::model1
