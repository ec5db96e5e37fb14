#include "macq/core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace macq {

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::ostringstream os;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) os << "; ";
    os << issues[i];
  }
  return os.str();
}

bool is_probability(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::invalid_argument(join_issues(issues)), issues_(std::move(issues)) {}

StationaryMixture StationaryMixture::from_channel(const GilbertElliott& ch) {
  StationaryMixture m;
  const double s = ch.alpha + ch.beta;
  m.p = ch.beta / s;
  m.q = 1.0 - m.p;  // keeps p + q == 1 exact
  m.good = ch.good;
  m.bad = ch.bad;
  return m;
}

StationaryMixture StationaryMixture::with_weight(double p, Gaussian good, Gaussian bad) {
  return StationaryMixture{p, 1.0 - p, good, bad};
}

const char* to_string(UserStatus s) {
  switch (s) {
    case UserStatus::Idle: return "idle";
    case UserStatus::Active: return "active";
    case UserStatus::Blocked: return "blocked";
  }
  return "?";
}

// erfc keeps full relative precision in the upper tail, where 1 - erf would cancel.
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2); }

double gaussian_cdf(double x, const Gaussian& g) { return normal_cdf((x - g.mu) / g.sigma); }
double gaussian_sf(double x, const Gaussian& g) { return normal_sf((x - g.mu) / g.sigma); }

double mixture_cdf(double x, const StationaryMixture& mix) {
  return mix.p * gaussian_cdf(x, mix.good) + mix.q * gaussian_cdf(x, mix.bad);
}

double mixture_sf(double x, const StationaryMixture& mix) {
  return mix.p * gaussian_sf(x, mix.good) + mix.q * gaussian_sf(x, mix.bad);
}

double mixture_pdf(double x, const StationaryMixture& mix) {
  return mix.p * normal_pdf((x - mix.good.mu) / mix.good.sigma) / mix.good.sigma +
         mix.q * normal_pdf((x - mix.bad.mu) / mix.bad.sigma) / mix.bad.sigma;
}

double exceedance_probability(const ChannelModel& ch) {
  if (const auto* b = std::get_if<BernoulliExceedance>(&ch)) return b->p_exc;
  if (const auto* g = std::get_if<GaussianIID>(&ch)) return gaussian_sf(g->threshold, g->capacity);
  throw std::invalid_argument("Gilbert-Elliott channel has no single exceedance probability");
}

std::vector<std::string> channel_issues(const ChannelModel& ch) {
  std::vector<std::string> out;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BernoulliExceedance>) {
          if (!is_probability(c.p_exc)) out.emplace_back("p_exc: must lie in [0,1]");
        } else if constexpr (std::is_same_v<T, GaussianIID>) {
          if (!(c.capacity.sigma > 0.0)) out.emplace_back("sigma: must be > 0");
          if (!std::isfinite(c.capacity.mu)) out.emplace_back("mu: must be finite");
          if (!std::isfinite(c.threshold)) out.emplace_back("threshold: must be finite");
        } else {
          if (!is_probability(c.alpha)) out.emplace_back("alpha: must lie in [0,1]");
          if (!is_probability(c.beta)) out.emplace_back("beta: must lie in [0,1]");
          if (!(c.alpha > 0.0)) out.emplace_back("alpha: must be > 0 (Bad-state weight bounded away from 0)");
          if (!(c.beta > 0.0)) out.emplace_back("beta: must be > 0 (Good-state weight bounded away from 0)");
          if (!(c.good.sigma > 0.0)) out.emplace_back("sigma_g: must be > 0");
          if (!(c.bad.sigma > 0.0)) out.emplace_back("sigma_b: must be > 0");
          const bool dominant = c.good.sigma > c.bad.sigma ||
                                (c.good.sigma == c.bad.sigma && c.good.mu > c.bad.mu);
          if (!dominant) {
            out.emplace_back(
                "Good-state dominance: need sigma_g > sigma_b, or sigma_g == sigma_b and mu_g > mu_b");
          }
        }
      },
      ch);
  return out;
}

SystemConfig validate_config(SystemConfig cfg, const ChannelModel& ch) {
  std::vector<std::string> issues;
  if (cfg.K < 1) issues.emplace_back("K: K >= 1 required");
  if (!std::isfinite(cfg.lambda_total) || cfg.lambda_total < 0.0) {
    issues.emplace_back("lambda_total: must be finite and >= 0");
  }
  if (cfg.K >= 1 && std::isfinite(cfg.lambda_total)) {
    cfg.lambda_i = cfg.lambda_total / cfg.K;
    if (!(cfg.lambda_i >= 0.0 && cfg.lambda_i < 1.0)) issues.emplace_back("lambda_i: 0 <= lambda_i < 1 required");
  }
  if (cfg.slots <= 0) issues.emplace_back("slots: must be > 0");
  if (cfg.warmup < 0 || cfg.warmup >= cfg.slots) issues.emplace_back("warmup: 0 <= warmup < slots required");
  if (cfg.replications < 1) issues.emplace_back("replications: must be >= 1");
  for (auto& s : channel_issues(ch)) issues.push_back(std::move(s));
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return cfg;
}

}  // namespace macq
