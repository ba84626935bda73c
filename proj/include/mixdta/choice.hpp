#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "mixdta/common.hpp"
#include "mixdta/routing.hpp"

namespace mixdta {

struct ChoiceConfig {
  double theta = 0.05;  // logit scale, 1/s
  double gamma = 50.0;  // swap scale: keep probability is i / gamma

  void validate() const {
    if (!(theta >= 0) || !std::isfinite(theta)) throw ValidationError(fmt::format("dta.theta: must be >= 0 (got {})", theta));
    if (!(gamma > 0) || !std::isfinite(gamma)) throw ValidationError(fmt::format("dta.gamma: must be > 0 (got {})", gamma));
  }
};

/// Multinomial logit over path costs: exp(-theta * C_k) / sum_j exp(-theta * C_j),
/// evaluated with costs shifted by their minimum.
inline std::vector<double> logit_probabilities(std::span<const double> costs, double theta) {
  if (costs.empty()) throw ContractError("logit: empty cost list");
  const double c_min = *std::min_element(costs.begin(), costs.end());
  std::vector<double> p(costs.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (!std::isfinite(costs[k])) throw ContractError("logit: non-finite cost");
    p[k] = std::exp(-theta * (costs[k] - c_min));
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline std::size_t sample_index(std::span<const double> probabilities, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    acc += probabilities[k];
    if (u < acc) return k;
  }
  return probabilities.size() - 1;
}

inline const Path& select_path(const PathSet& set, const TravelTimeField& field, double depart_s, double theta,
                               Rng& rng) {
  if (set.empty()) throw ContractError("select_path: empty path set");
  if (set.size() == 1) return set.paths.front();
  std::vector<double> costs;
  costs.reserve(set.size());
  for (const auto& p : set.paths) costs.push_back(path_cost(p, field, depart_s));
  const auto probs = logit_probabilities(costs, theta);
  return set.paths[sample_index(probs, rng)];
}

inline double keep_probability(int iteration, double gamma) {
  return std::min(static_cast<double>(iteration) / gamma, 1.0);
}

/// Probabilistic swapping: keep the previous final path with probability
/// min(i / gamma, 1), otherwise take the logit proposal.
inline const Path& pswap(const Path* previous_final, const Path& proposed, int iteration, double gamma, Rng& rng) {
  if (iteration < 1) throw ContractError("pswap: iteration must be >= 1");
  if (!previous_final) return proposed;
  const double x = rng.uniform();
  return x >= keep_probability(iteration, gamma) ? proposed : *previous_final;
}

}  // namespace mixdta
