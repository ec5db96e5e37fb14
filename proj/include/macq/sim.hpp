#pragma once

// Slotted simulator of K FIFO queues sharing a collision channel under the
// threshold rule. Per slot: Bernoulli arrivals, then each user's channel
// draw, then every backlogged user whose channel exceeds transmits its
// head-of-line packet; the packet departs iff it was the only transmission.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "macq/core.hpp"

namespace macq::sim {

/// Seed of the stream owned by (replication, user):
/// splitmix64(splitmix64(splitmix64(base) + replication) + user).
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t replication, std::uint64_t user);
std::uint64_t splitmix64(std::uint64_t x);

/// Worker threads for replications: MACQ_THREADS if set and positive, else hardware concurrency.
int worker_threads();

struct Estimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t half-width over replications; NaN with one replication
};

struct SlotRecord {
  std::int64_t slot = 0;
  int backlogged = 0;
  std::vector<int> transmitters;
  bool success = false;
  std::vector<UserStatus> status;  // at the start of the slot
};

struct SimOptions {
  std::int64_t trace_slots = 0;  // record the first N slots of replication 0
  int threads = 0;               // 0: worker_threads()
};

struct SimReport {
  int K = 0;
  double lambda_i = 0.0;
  std::int64_t slots = 0;
  std::int64_t warmup = 0;
  int replications = 0;
  std::uint64_t seed = 0;

  Estimate mean_queue_len;  // per user, waiting packets excluding head-of-line
  Estimate queue_incl_hol;  // per user, including head-of-line
  Estimate W_q;
  Estimate W_s;
  Estimate total_delay;
  Estimate p_succ_given_attempt;
  Estimate throughput;  // successes per slot, whole system
  Estimate avg_backlogged;
  // Success frequency per slot conditioned on the user's status at slot start.
  // P_I is a joint frequency (arrival and success) like the status-chain quotient.
  Estimate P_I, P_A, P_B;

  std::vector<double> queue_hist;  // pooled per-user queue length (incl. head-of-line); last bin is overflow
  std::vector<double> queue_hist_half_width;

  std::int64_t arrivals = 0;
  std::int64_t departures = 0;
  std::int64_t in_flight = 0;
  std::int64_t measured_successes = 0;
  std::int64_t measured_packets = 0;
  bool low_confidence = false;
  std::vector<std::string> notes;
  std::vector<SlotRecord> trace;
};

inline constexpr std::size_t kQueueHistBins = 64;

SimReport run_sim(const SystemConfig& cfg, const ChannelModel& ch, const SimOptions& opts = {});

struct SweepRow {
  double p_exc = 0.0;
  SimReport report;
};

/// One run_sim per exceedance probability, all with the same seeds.
std::vector<SweepRow> sweep_threshold(const SystemConfig& cfg, const std::vector<double>& grid,
                                      const SimOptions& opts = {});

enum class MaxMode { Stationary, Evolving };
const char* to_string(MaxMode m);

/// Samples of max_k C_k over K users whose capacities follow a Gilbert-Elliott
/// mixture. Stationary mode redraws every state from (p, q) per sample;
/// evolving mode runs K independent state chains over consecutive samples.
std::vector<double> sample_max_capacity(int K, const GilbertElliott& ch, std::int64_t n_samples, MaxMode mode,
                                        std::uint64_t seed);

enum class LevelRule { Exact, Asymptotic };

struct ExceedanceCounts {
  double level = 0.0;
  double expected_intensity = 0.0;  // n (1 - F(level))
  std::vector<double> pmf;          // pmf[k] = fraction of blocks with k exceedances
  std::int64_t blocks = 0;
};

/// Counts, per block of n i.i.d. Gaussian capacities, the draws above u_n(tau).
/// Exact: u_n solves n (1 - F(u)) = tau. Asymptotic: u_n = log(1/tau)/a_n + b_n.
ExceedanceCounts count_exceedances(std::int64_t n, double tau, const Gaussian& capacity, std::int64_t blocks,
                                   std::uint64_t seed, LevelRule rule = LevelRule::Exact);

}  // namespace macq::sim
