#include "macq/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "macq/evt.hpp"

namespace macq::sim {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t replication, std::uint64_t user) {
  return splitmix64(splitmix64(splitmix64(base) + replication) + user);
}

int worker_threads() {
  if (const char* env = std::getenv("MACQ_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min<long>(v, 1024));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

const char* to_string(MaxMode m) { return m == MaxMode::Stationary ? "stationary" : "evolving"; }

namespace {

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : eng_(seed) {}
  double operator()() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// Runs `jobs` independent tasks over a small thread pool; task i writes slot i only.
template <class Fn>
void parallel_for(int jobs, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, jobs));
  if (threads == 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < jobs; i = next++) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Channel {
  enum class Kind { Bernoulli, Gaussian, GE } kind;
  double p_exc = 0.0;
  GaussianIID iid;
  double alpha = 0.0, beta = 0.0, exc_good = 0.0, exc_bad = 0.0, p_good = 1.0;
};

Channel make_channel(const ChannelModel& ch) {
  Channel c{};
  if (const auto* b = std::get_if<BernoulliExceedance>(&ch)) {
    c.kind = Channel::Kind::Bernoulli;
    c.p_exc = b->p_exc;
  } else if (const auto* g = std::get_if<GaussianIID>(&ch)) {
    c.kind = Channel::Kind::Gaussian;
    c.iid = *g;
  } else {
    const auto& ge = std::get<GilbertElliott>(ch);
    c.kind = Channel::Kind::GE;
    c.alpha = ge.alpha;
    c.beta = ge.beta;
    c.exc_good = -std::expm1(-ge.good.mu);
    c.exc_bad = -std::expm1(-ge.bad.mu);
    c.p_good = ge.beta / (ge.alpha + ge.beta);
  }
  return c;
}

struct UserState {
  Uniform rng;
  std::normal_distribution<double> normal;
  std::deque<std::int64_t> queue;  // arrival slots, FIFO
  std::int64_t hol_start = 0;
  std::int64_t next_arrival = 0;
  UserStatus status = UserStatus::Idle;
  bool good = true;
  std::int64_t state_slot = -1;  // slot at which `good` was last drawn
  // Queue length seen at the transmission point, and since when it has held.
  std::int64_t len = 0;
  std::int64_t len_since = 0;
  std::int64_t status_since = 0;
  explicit UserState(std::uint64_t seed) : rng(seed) {}
};

struct RepResult {
  double L = 0, Q = 0, W_q = 0, W_s = 0, D = 0, p_succ = 0, throughput = 0, backlogged = 0;
  double P_I = 0, P_A = 0, P_B = 0;
  std::vector<double> hist;
  std::int64_t arrivals = 0, departures = 0, in_flight = 0, successes = 0, packets = 0;
  std::vector<SlotRecord> trace;
};

// Slots until the next Bernoulli(lam) arrival, counting the current one as 0.
std::int64_t arrival_gap(Uniform& u, double log_miss) {
  if (log_miss == 0.0) return std::numeric_limits<std::int64_t>::max() / 2;
  const double g = std::floor(std::log1p(-u()) / log_miss);
  return g > 1e15 ? std::numeric_limits<std::int64_t>::max() / 2 : static_cast<std::int64_t>(g);
}

RepResult run_replication(const SystemConfig& cfg, const Channel& ch, int rep, std::int64_t trace_slots) {
  const int K = cfg.K;
  const double log_miss = std::log1p(-cfg.lambda_i);
  const double r_ge = 1.0 - ch.alpha - ch.beta;
  std::vector<UserState> users;
  users.reserve(static_cast<std::size_t>(K));
  for (int u = 0; u < K; ++u) {
    users.emplace_back(stream_seed(cfg.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(u)));
    UserState& us = users.back();
    if (ch.kind == Channel::Kind::GE) us.good = us.rng() < ch.p_good;
    us.next_arrival = arrival_gap(us.rng, log_miss);
  }

  RepResult r;
  r.hist.assign(kQueueHistBins, 0.0);
  double sum_wait = 0, sum_queue = 0, sum_backlog = 0, sum_wq = 0, sum_ws = 0;
  double status_slots[3] = {0, 0, 0};
  std::int64_t attempts = 0;
  std::int64_t status_succ[3] = {0, 0, 0};

  // Statistics are integrated over time: a value held on [from, to) counts for
  // the part of that interval inside the measurement window.
  auto measured = [&](std::int64_t from, std::int64_t to) {
    return static_cast<double>(std::max<std::int64_t>(0, std::min(to, cfg.slots) - std::max(from, cfg.warmup)));
  };
  auto set_len = [&](UserState& us, std::int64_t from, std::int64_t len) {
    const double w = measured(us.len_since, from);
    if (w > 0) {
      r.hist[std::min<std::size_t>(static_cast<std::size_t>(us.len), kQueueHistBins - 1)] += w;
      sum_queue += w * static_cast<double>(us.len);
      if (us.len > 0) {
        sum_wait += w * static_cast<double>(us.len - 1);
        sum_backlog += w;
      }
    }
    us.len = len;
    us.len_since = from;
  };
  auto set_status = [&](UserState& us, std::int64_t from, UserStatus s) {
    if (s == us.status) return;
    status_slots[static_cast<int>(us.status)] += measured(us.status_since, from);
    us.status = s;
    us.status_since = from;
  };
  auto exceeds = [&](UserState& us, std::int64_t t) {
    switch (ch.kind) {
      case Channel::Kind::Bernoulli: return us.rng() < ch.p_exc;
      case Channel::Kind::Gaussian:
        return ch.iid.capacity.mu + ch.iid.capacity.sigma * us.normal(us.rng.engine()) > ch.iid.threshold;
      case Channel::Kind::GE: {
        // The state chain advances every slot; between draws it is sampled
        // from the n-step law P(Good) = p + r^n (1{Good} - p).
        const std::int64_t n = t - us.state_slot;
        if (n == 1) {
          us.good = us.good ? !(us.rng() < ch.alpha) : us.rng() < ch.beta;
        } else {
          const double pg = ch.p_good + std::pow(r_ge, static_cast<double>(n)) * ((us.good ? 1.0 : 0.0) - ch.p_good);
          us.good = us.rng() < pg;
        }
        us.state_slot = t;
        return us.rng() < (us.good ? ch.exc_good : ch.exc_bad);
      }
    }
    return false;
  };

  std::vector<int> tx, touched;
  tx.reserve(static_cast<std::size_t>(K));
  int active = -1;  // user whose status is Active at the start of the slot

  for (std::int64_t t = 0; t < cfg.slots; ++t) {
    const bool measure = t >= cfg.warmup;
    const bool tracing = rep == 0 && t < trace_slots;
    SlotRecord rec;
    if (tracing) {
      rec.slot = t;
      rec.status.reserve(static_cast<std::size_t>(K));
      for (const auto& us : users) rec.status.push_back(us.status);
    }

    tx.clear();
    touched.clear();
    for (int u = 0; u < K; ++u) {
      UserState& us = users[static_cast<std::size_t>(u)];
      if (us.next_arrival == t) {
        if (us.queue.empty()) {
          us.hol_start = t;
          touched.push_back(u);
        }
        us.queue.push_back(t);
        ++r.arrivals;
        set_len(us, t, static_cast<std::int64_t>(us.queue.size()));
        us.next_arrival = t + 1 + arrival_gap(us.rng, log_miss);
      }
      if (!us.queue.empty() && exceeds(us, t)) tx.push_back(u);
    }

    const int winner = tx.size() == 1 ? tx.front() : -1;

    if (tracing) {
      rec.backlogged = 0;
      for (const auto& us : users) rec.backlogged += !us.queue.empty();
      rec.transmitters = tx;
      rec.success = winner >= 0;
      r.trace.push_back(std::move(rec));
    }

    if (measure) {
      attempts += static_cast<std::int64_t>(tx.size());
      if (winner >= 0) {
        ++r.successes;
        ++status_succ[static_cast<int>(users[static_cast<std::size_t>(winner)].status)];
      }
    }

    if (winner >= 0) {
      UserState& us = users[static_cast<std::size_t>(winner)];
      const std::int64_t arrived = us.queue.front();
      us.queue.pop_front();
      ++r.departures;
      if (arrived >= cfg.warmup) {
        sum_wq += static_cast<double>(us.hol_start - arrived);
        sum_ws += static_cast<double>(t - us.hol_start);
        ++r.packets;
      }
      if (!us.queue.empty()) us.hol_start = t + 1;
      set_len(us, t + 1, static_cast<std::int64_t>(us.queue.size()));
      touched.push_back(winner);
    }

    // Only the previous Active user, the winner and users that just left Idle
    // can change status; every other backlogged user stays Blocked.
    if (active >= 0) touched.push_back(active);
    for (int u : touched) {
      UserState& us = users[static_cast<std::size_t>(u)];
      set_status(us, t + 1,
                 us.queue.empty() ? UserStatus::Idle : (u == winner ? UserStatus::Active : UserStatus::Blocked));
    }
    active = winner >= 0 && !users[static_cast<std::size_t>(winner)].queue.empty() ? winner : -1;
  }

  for (auto& us : users) {
    r.in_flight += static_cast<std::int64_t>(us.queue.size());
    set_len(us, cfg.slots, 0);
    status_slots[static_cast<int>(us.status)] += measured(us.status_since, cfg.slots);
  }

  const double slots = static_cast<double>(cfg.slots - cfg.warmup);
  const double user_slots = slots * K;
  r.L = sum_wait / user_slots;
  r.Q = sum_queue / user_slots;
  r.backlogged = sum_backlog / slots;
  r.throughput = static_cast<double>(r.successes) / slots;
  r.p_succ = attempts > 0 ? static_cast<double>(r.successes) / static_cast<double>(attempts) : 1.0;
  const double np = static_cast<double>(r.packets);
  r.W_q = r.packets > 0 ? sum_wq / np : 0.0;
  r.W_s = r.packets > 0 ? sum_ws / np : 0.0;
  r.D = r.W_q + r.W_s + 1.0;
  auto ratio = [](double a, double b) { return b > 0 ? a / b : std::numeric_limits<double>::quiet_NaN(); };
  r.P_I = ratio(static_cast<double>(status_succ[0]), status_slots[0]);
  r.P_A = ratio(static_cast<double>(status_succ[1]), status_slots[1]);
  r.P_B = ratio(static_cast<double>(status_succ[2]), status_slots[2]);
  for (double& h : r.hist) h /= user_slots;
  return r;
}

Estimate estimate(const std::vector<double>& x) {
  Estimate e;
  const auto n = x.size();
  double sum = 0.0;
  for (double v : x) sum += v;
  e.mean = sum / static_cast<double>(n);
  if (n < 2) {
    e.half_width = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  double ss = 0.0;
  for (double v : x) ss += (v - e.mean) * (v - e.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  e.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(static_cast<double>(n));
  return e;
}

Estimate summarize(const std::vector<RepResult>& reps, double RepResult::*field) {
  std::vector<double> x;
  x.reserve(reps.size());
  for (const auto& r : reps) x.push_back(r.*field);
  return estimate(x);
}

}  // namespace

SimReport run_sim(const SystemConfig& cfg_in, const ChannelModel& ch, const SimOptions& opts) {
  const SystemConfig cfg = validate_config(cfg_in, ch);
  const Channel channel = make_channel(ch);

  std::vector<RepResult> reps(static_cast<std::size_t>(cfg.replications));
  const int threads = opts.threads > 0 ? opts.threads : worker_threads();
  parallel_for(cfg.replications, threads, [&](int i) {
    reps[static_cast<std::size_t>(i)] = run_replication(cfg, channel, i, opts.trace_slots);
  });

  SimReport rep;
  rep.K = cfg.K;
  rep.lambda_i = cfg.lambda_i;
  rep.slots = cfg.slots;
  rep.warmup = cfg.warmup;
  rep.replications = cfg.replications;
  rep.seed = cfg.seed;
  rep.mean_queue_len = summarize(reps, &RepResult::L);
  rep.queue_incl_hol = summarize(reps, &RepResult::Q);
  rep.W_q = summarize(reps, &RepResult::W_q);
  rep.W_s = summarize(reps, &RepResult::W_s);
  rep.total_delay = summarize(reps, &RepResult::D);
  rep.p_succ_given_attempt = summarize(reps, &RepResult::p_succ);
  rep.throughput = summarize(reps, &RepResult::throughput);
  rep.avg_backlogged = summarize(reps, &RepResult::backlogged);
  rep.P_I = summarize(reps, &RepResult::P_I);
  rep.P_A = summarize(reps, &RepResult::P_A);
  rep.P_B = summarize(reps, &RepResult::P_B);

  rep.queue_hist.assign(kQueueHistBins, 0.0);
  rep.queue_hist_half_width.assign(kQueueHistBins, 0.0);
  for (std::size_t b = 0; b < kQueueHistBins; ++b) {
    std::vector<double> bin;
    for (const auto& r : reps) bin.push_back(r.hist[b]);
    const Estimate e = estimate(bin);
    rep.queue_hist[b] = e.mean;
    rep.queue_hist_half_width[b] = e.half_width;
  }
  for (const auto& r : reps) {
    rep.arrivals += r.arrivals;
    rep.departures += r.departures;
    rep.in_flight += r.in_flight;
    rep.measured_successes += r.successes;
    rep.measured_packets += r.packets;
  }
  rep.trace = std::move(reps.front().trace);

  if (rep.measured_successes < 100) {
    rep.low_confidence = true;
    rep.notes.push_back("low confidence: fewer than 100 successes after warmup");
  }
  if (rep.arrivals > 0 && static_cast<double>(rep.in_flight) > 0.01 * static_cast<double>(rep.arrivals)) {
    std::ostringstream os;
    os << "delay statistics exclude " << rep.in_flight << " packets still queued at the horizon ("
       << 100.0 * static_cast<double>(rep.in_flight) / static_cast<double>(rep.arrivals) << "% of arrivals)";
    rep.notes.push_back(os.str());
  }
  if (cfg.replications < 2) rep.notes.push_back("single replication: half-widths undefined");
  return rep;
}

std::vector<SweepRow> sweep_threshold(const SystemConfig& cfg, const std::vector<double>& grid,
                                      const SimOptions& opts) {
  std::vector<std::string> bad;
  for (double p : grid)
    if (!(p > 0.0 && p < 1.0)) bad.push_back("grid: exceedance probability " + std::to_string(p) + " outside (0,1)");
  if (!bad.empty()) throw ValidationError(bad);
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double p : grid) rows.push_back(SweepRow{p, run_sim(cfg, BernoulliExceedance{p}, opts)});
  return rows;
}

std::vector<double> sample_max_capacity(int K, const GilbertElliott& ch, std::int64_t n_samples, MaxMode mode,
                                        std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("K: K >= 1 required");
  if (n_samples < 1) throw std::invalid_argument("n_samples: n_samples >= 1 required");
  const double p_good = ch.beta / (ch.alpha + ch.beta);
  Uniform u(splitmix64(seed));
  std::normal_distribution<double> normal;
  std::vector<char> good(static_cast<std::size_t>(K));
  for (auto& g : good) g = u() < p_good;

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t n = 0; n < n_samples; ++n) {
    double best = -std::numeric_limits<double>::infinity();
    for (auto& g : good) {
      if (mode == MaxMode::Stationary) g = u() < p_good;
      else if (n > 0) g = g ? !(u() < ch.alpha) : u() < ch.beta;
      const Gaussian& c = g ? ch.good : ch.bad;
      best = std::max(best, c.mu + c.sigma * normal(u.engine()));
    }
    out.push_back(best);
  }
  return out;
}

ExceedanceCounts count_exceedances(std::int64_t n, double tau, const Gaussian& capacity, std::int64_t blocks,
                                   std::uint64_t seed, LevelRule rule) {
  if (n < 2 || blocks < 1) throw std::invalid_argument("count_exceedances: need n >= 2 and blocks >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("tau: tau > 0 required");
  const StationaryMixture mix = StationaryMixture::with_weight(1.0, capacity, capacity);
  const evt::IntensityLevel lv = evt::level_for_intensity(static_cast<double>(n), tau, mix);

  ExceedanceCounts out;
  out.blocks = blocks;
  out.level = rule == LevelRule::Exact ? lv.u_exact : lv.u_asymptotic;
  out.expected_intensity = static_cast<double>(n) * gaussian_sf(out.level, capacity);

  Uniform u(splitmix64(seed));
  std::normal_distribution<double> normal;
  std::vector<std::int64_t> counts;
  for (std::int64_t b = 0; b < blocks; ++b) {
    std::size_t c = 0;
    for (std::int64_t i = 0; i < n; ++i) c += capacity.mu + capacity.sigma * normal(u.engine()) > out.level;
    if (c >= counts.size()) counts.resize(c + 1, 0);
    ++counts[c];
  }
  out.pmf.reserve(counts.size());
  for (auto c : counts) out.pmf.push_back(static_cast<double>(c) / static_cast<double>(blocks));
  return out;
}

}  // namespace macq::sim
