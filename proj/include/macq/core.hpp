#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace macq {

/// Euler-Mascheroni constant at full double precision.
inline constexpr double kEulerGamma = 0.57721566490153286060651209;

/// Raised when parameters violate a model invariant; carries every violation found.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Iterative solver failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters fall outside the stable region of a queueing model.
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Per-slot exceedance with a fixed probability.
struct BernoulliExceedance {
  double p_exc = 0.0;
};

/// i.i.d. Gaussian capacity per slot compared against a threshold.
struct GaussianIID {
  Gaussian capacity;
  double threshold = 0.0;
};

/// Two-state Good/Bad Markov-modulated Gaussian capacity.
///
/// alpha is the per-slot Good->Bad probability and beta the Bad->Good one.
/// When driving the queue simulator, `good.mu` / `bad.mu` act as per-slot
/// exceedance rates: a user in state s exceeds with probability 1 - exp(-mu_s).
struct GilbertElliott {
  double alpha = 0.1;
  double beta = 0.1;
  Gaussian good;
  Gaussian bad;
  double threshold = 0.0;
};

using ChannelModel = std::variant<BernoulliExceedance, GaussianIID, GilbertElliott>;

/// Stationary marginal of a Gilbert-Elliott capacity: p F_g + q F_b.
struct StationaryMixture {
  double p = 1.0;  // Good weight
  double q = 0.0;  // Bad weight
  Gaussian good;
  Gaussian bad;

  static StationaryMixture from_channel(const GilbertElliott& ch);
  /// Mixture with Good weight p; q is set to 1 - p.
  static StationaryMixture with_weight(double p, Gaussian good, Gaussian bad);
};

struct SystemConfig {
  int K = 1;
  double lambda_total = 0.0;
  double lambda_i = 0.0;  // filled by validate_config
  std::int64_t slots = 1'000'000;
  std::int64_t warmup = 100'000;
  std::uint64_t seed = 1;
  int replications = 8;
};

enum class UserStatus : std::uint8_t { Idle = 0, Active = 1, Blocked = 2 };

const char* to_string(UserStatus s);

/// Standard normal CDF and survival function, accurate deep into the tail.
double normal_cdf(double z);
double normal_sf(double z);
double normal_pdf(double z);

double gaussian_cdf(double x, const Gaussian& g);
double gaussian_sf(double x, const Gaussian& g);

double mixture_cdf(double x, const StationaryMixture& mix);
/// 1 - mixture_cdf, computed without cancellation.
double mixture_sf(double x, const StationaryMixture& mix);
double mixture_pdf(double x, const StationaryMixture& mix);

/// Per-slot exceedance probability implied by a memoryless channel.
/// GilbertElliott has none (state dependent) and throws.
double exceedance_probability(const ChannelModel& ch);

/// Checks every invariant on the pair and returns the config with lambda_i filled in.
SystemConfig validate_config(SystemConfig cfg, const ChannelModel& ch);

/// Channel-only checks; returns the list of violations (empty when valid).
std::vector<std::string> channel_issues(const ChannelModel& ch);

}  // namespace macq
