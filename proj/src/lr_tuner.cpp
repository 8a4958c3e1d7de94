#include "swapsched/lr_tuner.hpp"

#include <cmath>
#include <stdexcept>

namespace swapsched {

double adapted_learning_rate(const LrConfig& cfg) {
  const double ac = cfg.alpha_base * cfg.convexity;
  if (!(ac > 0.0) || ac >= 1.0)
    throw std::invalid_argument(
        "alpha_base * c must lie in (0, 1) for the contraction to hold");
  if (cfg.q < 1.0)
    throw std::invalid_argument("q < 1 (shrinking minibatch) is unsupported");
  if (cfg.q == 1.0) return cfg.alpha_base;
  return (1.0 - std::pow(1.0 - ac, cfg.q)) / cfg.convexity;
}

double contraction_residual(const LrConfig& cfg, double alpha_star) {
  const double base_lhs = 1.0 - cfg.alpha_base * cfg.convexity * cfg.mu;
  const double base_rhs = 1.0 - alpha_star * cfg.convexity * cfg.mu;
  if (!(base_lhs > 0.0) || !(base_rhs > 0.0))
    throw std::invalid_argument("contraction bases must stay positive");
  if (cfg.iters_base <= 0)
    throw std::invalid_argument("iters_base must be positive");
  const double lhs =
      std::pow(base_lhs, static_cast<double>(cfg.iters_base) - 1.0);
  const double rhs =
      std::pow(base_rhs, static_cast<double>(cfg.iters_base) / cfg.q - 1.0);
  return lhs - rhs;
}

}  // namespace swapsched
