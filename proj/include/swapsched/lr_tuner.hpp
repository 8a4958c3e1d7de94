#pragma once

namespace swapsched {

struct LrConfig {
  double alpha_base = 0.0;
  double convexity = 0.0;   // c
  double mu = 1.0;          // gradient-bias factor, ~1 for large minibatches
  long long iters_base = 0;
  double q = 1.0;           // k_star / k_base
};

// alpha* = (1 - (1 - alpha_base*c)^q) / c.
// Requires alpha_base*c in (0,1) and q >= 1; q == 1 returns alpha_base
// bit-exactly.
double adapted_learning_rate(const LrConfig& cfg);

// Difference between the two contraction factors:
// (1-a*c*mu)^(iters-1) - (1-alpha*\,c*mu)^(iters/q - 1).
// Quantifies how well the closed form preserves the convergence rate.
double contraction_residual(const LrConfig& cfg, double alpha_star);

}  // namespace swapsched
