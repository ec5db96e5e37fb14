#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "macq/coupled_chains.hpp"
#include "macq/sim.hpp"
#include "oracles.hpp"

using namespace macq;
using namespace macq::model1;

namespace {

Eigen::MatrixXd dense(const SparseMatrix& P) { return Eigen::MatrixXd(P); }

}  // namespace

TEST_CASE("state space size is 2^(K-1)(K+2) and the index map is a bijection") {
  for (int K = 2; K <= 10; ++K) {
    const auto states = enumerate_states(K);
    CHECK(states.size() == (std::size_t{1} << (K - 1)) * static_cast<std::size_t>(K + 2));
    const StatusSpace space(K);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < states.size(); ++i) {
      CHECK(space.index(states[i]) == i);
      seen.insert(states[i].str());
    }
    CHECK(seen.size() == states.size());
  }
  CHECK(enumerate_states(2).size() == 8);
  CHECK(enumerate_states(3).size() == 20);
  CHECK(enumerate_states(10).size() == 6144);
  CHECK_THROWS_AS(enumerate_states(kMaxUsers + 1), std::invalid_argument);
  CHECK_THROWS_AS(StatusVector({UserStatus::Active, UserStatus::Active}), std::invalid_argument);
}

TEST_CASE("transition rows sum to one for random parameters, homogeneous and heterogeneous") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int K = 2; K <= 6; ++K) {
    for (int trial = 0; trial < 5; ++trial) {
      const StatusSpace space(K);
      ChainParams prm;
      for (int u = 0; u < K; ++u) {
        prm.lambda.push_back(U(rng));
        prm.p_exc.push_back(U(rng));
        prm.P_1given1.push_back(U(rng));
        prm.P_0given2.push_back(U(rng));
      }
      const SparseMatrix P = build_transition_matrix(space, prm);
      for (Eigen::Index i = 0; i < P.rows(); ++i) {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(P, i); it; ++it) {
          CHECK(it.value() >= 0.0);
          s += it.value();
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("no-arrival corner cases at K=2") {
  const StatusSpace space(2);
  const double p = 0.37;
  const SparseMatrix P = build_transition_matrix(2, 0.0, p, 0.4, 0.6);
  const auto bb = space.index(StatusVector({UserStatus::Blocked, UserStatus::Blocked}));
  const auto ii = space.index(StatusVector({UserStatus::Idle, UserStatus::Idle}));
  // Both silent or both transmitting keeps (B, B).
  CHECK(P.coeff(static_cast<Eigen::Index>(bb), static_cast<Eigen::Index>(bb)) ==
        doctest::Approx(p * p + (1 - p) * (1 - p)).epsilon(1e-15));
  CHECK(P.coeff(static_cast<Eigen::Index>(ii), static_cast<Eigen::Index>(ii)) == 1.0);
}

TEST_CASE("micro-event matrix equals the grouped closed-form transitions at K=2,3") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.01, 0.99);
  for (int K = 2; K <= 4; ++K) {
    const auto states = enumerate_states(K);
    for (int trial = 0; trial < 6; ++trial) {
      const double lam = U(rng), p = U(rng), P11 = U(rng), P02 = U(rng);
      const Eigen::MatrixXd P = dense(build_transition_matrix(K, lam, p, P11, P02));
      double worst = 0.0;
      for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = 0; j < states.size(); ++j) {
          const double ref = oracle::grouped_transition(states[i], states[j], lam, p, P11, P02);
          worst = std::max(worst, std::abs(ref - P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("stationary distribution") {
  SUBCASE("symmetric two-state toy") {
    SparseMatrix P(2, 2);
    P.insert(0, 0) = 0.9;
    P.insert(0, 1) = 0.1;
    P.insert(1, 0) = 0.1;
    P.insert(1, 1) = 0.9;
    const auto st = stationary_distribution(P);
    CHECK(st.pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(st.pi[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("identity is reducible") {
    SparseMatrix I(3, 3);
    I.setIdentity();
    CHECK_THROWS_AS(stationary_distribution(I), std::runtime_error);
    CHECK_FALSE(is_irreducible(I));
  }
  SUBCASE("K=2 model chain against an SVD null-vector solve") {
    const SparseMatrix P = build_transition_matrix(2, 0.05, 0.5, 0.5, 0.5);
    const auto st = stationary_distribution(P);
    CHECK(st.residual <= 1e-12);
    const auto ref = oracle::svd_stationary(dense(P));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(st.pi[i] - ref[i]) <= 1e-10);
  }
  SUBCASE("direct fallback agrees with power iteration") {
    const SparseMatrix P = build_transition_matrix(4, 0.08, 0.25, 0.3, 0.6);
    StationaryOptions fast;
    fast.max_power_iterations = 0;
    const auto lu = stationary_distribution(P, fast);
    const auto pw = stationary_distribution(P);
    CHECK(lu.method == "dense-lu");
    for (std::size_t i = 0; i < lu.pi.size(); ++i) CHECK(std::abs(lu.pi[i] - pw.pi[i]) <= 1e-10);
  }
}

TEST_CASE("average success probabilities") {
  SUBCASE("single user sees no interference") {
    const StatusSpace space(1);
    const SparseMatrix P = build_transition_matrix(1, 0.2, 0.3, 0.5, 0.5);
    const auto st = stationary_distribution(P);
    const auto sp = avg_success_probs(space, st.pi, 0.2, 0.3);
    CHECK(sp.P_B == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(sp.P_A == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(sp.P_I_fresh == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(sp.P_I == doctest::Approx(0.2 * 0.3).epsilon(1e-14));
  }
  SUBCASE("interference only lowers success") {
    const StatusSpace space(2);
    const double p = 0.5;
    const SparseMatrix P = build_transition_matrix(2, 0.01, p, 0.5, 0.5);
    const auto sp = avg_success_probs(space, stationary_distribution(P).pi, 0.01, p);
    CHECK(sp.P_B > 0.0);
    CHECK(sp.P_B <= p);
    CHECK(sp.P_A <= p);
  }
}

TEST_CASE("queue boundary closed forms") {
  SUBCASE("perfect service never blocks") {
    const auto b = queue_boundary(0.1, 1.0, 1.0, 1.0);
    CHECK(b.pi10 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(b.G0_at_1 == doctest::Approx(0.0));
  }
  SUBCASE("vanishing traffic empties the queue") {
    const auto b = queue_boundary(1e-9, 0.3, 0.3, 0.3);
    CHECK(b.pi10 == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("blocked and unblocked masses add to one") {
    const auto b = queue_boundary(0.05, 0.35, 0.3, 0.25);
    CHECK(std::abs(b.G0_at_1 + b.G1_at_1 - 1.0) <= 1e-9);
  }
  SUBCASE("matches the single-queue chain driven by fixed success probabilities") {
    for (auto [lam, sI, sA, sB] : {std::tuple{0.05, 0.3, 0.3, 0.3}, std::tuple{0.05, 0.4, 0.3, 0.2},
                                   std::tuple{0.1, 0.35, 0.3, 0.25}}) {
      const auto b = queue_boundary(lam, sI, sA, sB);
      const auto ref = oracle::single_queue_chain(lam, sI, sA, sB);
      CHECK(b.P_1given1 == doctest::Approx(ref.P_1given1).epsilon(1e-9));
      CHECK(b.P_0given2 == doctest::Approx(ref.P_0given2).epsilon(1e-9));
      CHECK(b.pi10 == doctest::Approx(ref.empty).epsilon(1e-9));
    }
  }
  SUBCASE("instability is reported") {
    CHECK_THROWS_AS(queue_boundary(0.5, 0.1, 0.1, 0.1), InstabilityError);
  }
}

TEST_CASE("queue boundary against a simulated single queue") {
  // Direct Monte-Carlo of one queue whose success probability depends on its status.
  const double lam = 0.05, s = 0.3;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  long long q = 0;
  bool active = false;
  long long active_slots = 0, active_deep = 0, blocked_slots = 0, blocked_one = 0, empty_slots = 0;
  const long long T = 4'000'000;
  for (long long t = 0; t < T; ++t) {
    if (q == 0) ++empty_slots;
    else if (active) {
      ++active_slots;
      active_deep += q >= 2;
    } else {
      ++blocked_slots;
      blocked_one += q == 1;
    }
    q += U(rng) < lam;
    if (q > 0 && U(rng) < s) {
      --q;
      active = q > 0;
    } else {
      active = false;
    }
  }
  const auto b = queue_boundary(lam, s, s, s);
  CHECK(b.pi10 == doctest::Approx(double(empty_slots) / T).epsilon(0.01));
  CHECK(b.P_0given2 == doctest::Approx(double(blocked_one) / blocked_slots).epsilon(0.02));
  CHECK(b.P_1given1 == doctest::Approx(double(active_deep) / active_slots).epsilon(0.05));
}

TEST_CASE("Model I fixed point") {
  SUBCASE("no traffic") {
    const auto s = solve_model1(4, 0.0, 0.25);
    CHECK(s.L == 0.0);
    CHECK(s.W_q == 0.0);
    CHECK(s.blocked_prob == 0.0);
    CHECK(s.D == 1.0);
  }
  SUBCASE("solution invariants") {
    const double lamT = (1.0 / std::exp(1.0)) * 0.999;
    for (int K = 2; K <= 5; ++K) {
      const auto s = solve_model1(K, lamT / K, 1.0 / K);
      CHECK(s.residual < 1e-10);
      CHECK(s.D == doctest::Approx(s.W_q + s.W_s + 1.0).epsilon(1e-15));
      CHECK(std::abs(s.boundary.G0_at_1 + s.boundary.G1_at_1 - 1.0) <= 1e-9);
      for (double pr : {s.P_I, s.P_A, s.P_B, s.blocked_prob, s.p_succ, s.boundary.P_1given1, s.boundary.P_0given2}) {
        CHECK(pr >= 0.0);
        CHECK(pr <= 1.0);
      }
      CHECK(s.W_q == doctest::Approx(s.L / (lamT / K)).epsilon(1e-14));
    }
  }
  SUBCASE("insensitive to the starting point") {
    for (int K : {2, 3, 5}) {
      const double lam = 0.3 / K;
      SolveOptions a, b, c;
      a.P_1given1_init = a.P_0given2_init = 0.1;
      b.P_1given1_init = b.P_0given2_init = 0.9;
      c.P_1given1_init = c.P_0given2_init = 0.5;
      const auto sa = solve_model1(K, lam, 1.0 / K, a);
      const auto sb = solve_model1(K, lam, 1.0 / K, b);
      const auto sc = solve_model1(K, lam, 1.0 / K, c);
      CHECK(std::abs(sa.boundary.P_1given1 - sc.boundary.P_1given1) <= 1e-8);
      CHECK(std::abs(sb.boundary.P_1given1 - sc.boundary.P_1given1) <= 1e-8);
      CHECK(std::abs(sa.boundary.P_0given2 - sc.boundary.P_0given2) <= 1e-8);
      CHECK(std::abs(sb.boundary.P_0given2 - sc.boundary.P_0given2) <= 1e-8);
    }
  }
  SUBCASE("L grows with load") {
    double prev = -1.0;
    for (double lamT : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3}) {
      const auto s = solve_model1(4, lamT / 4, 0.25);
      CHECK(s.L >= prev);
      prev = s.L;
    }
  }
  SUBCASE("closed-form L equals the single-queue chain at the fixed point") {
    const int K = 3;
    const double lam = 0.3 / K;
    const auto s = solve_model1(K, lam, 1.0 / K);
    const auto ref = oracle::single_queue_chain(lam, s.P_I_fresh, s.P_A, s.P_B);
    CHECK(s.L == doctest::Approx(ref.L).epsilon(1e-8));
  }
}

TEST_CASE("Model I success probability tracks the simulator at K=7") {
  const int K = 7;
  const double lamT = (1.0 / std::exp(1.0)) * 0.999;
  const auto s = solve_model1(K, lamT / K, 1.0 / K);
  SystemConfig cfg;
  cfg.K = K;
  cfg.lambda_total = lamT;
  cfg.slots = 1'000'000;
  cfg.warmup = 100'000;
  cfg.replications = 4;
  const auto r = sim::run_sim(cfg, BernoulliExceedance{1.0 / K});
  MESSAGE("model p_succ " << s.p_succ << " sim " << r.p_succ_given_attempt.mean);
  CHECK(std::abs(s.p_succ - r.p_succ_given_attempt.mean) / r.p_succ_given_attempt.mean <= 0.02);
}

TEST_CASE("status-conditioned success probabilities against simulation at K=3") {
  const int K = 3;
  const double lam = 0.3 / K, p = 1.0 / K;
  const auto s = solve_model1(K, lam, p);
  SystemConfig cfg;
  cfg.K = K;
  cfg.lambda_total = 0.3;
  cfg.slots = 1'000'000;
  cfg.warmup = 100'000;
  cfg.replications = 8;
  const auto r = sim::run_sim(cfg, BernoulliExceedance{p});
  MESSAGE("P_I " << s.P_I << " vs " << r.P_I.mean << " +- " << r.P_I.half_width);
  MESSAGE("P_A " << s.P_A << " vs " << r.P_A.mean << " +- " << r.P_A.half_width);
  MESSAGE("P_B " << s.P_B << " vs " << r.P_B.mean << " +- " << r.P_B.half_width);
  CHECK(std::abs(s.P_I - r.P_I.mean) <= 3 * r.P_I.half_width);
  CHECK(std::abs(s.P_A - r.P_A.mean) <= 3 * r.P_A.half_width);
  CHECK(std::abs(s.P_B - r.P_B.mean) <= 3 * r.P_B.half_width);
}
